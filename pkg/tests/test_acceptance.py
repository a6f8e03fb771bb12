"""Acceptance criteria, one test each.

Each test appends a ``[PASS]``/``[FAIL]`` line (with runtime) that is printed
in the terminal summary. Tolerances are pinned here.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_circuit
from qmcnet import nn
from qmcnet.data import synth_dataset
from qmcnet.designer import PRESET_NAMES, assignment, aggregated_width, design_circuit, preset
from qmcnet.metrics import BandMetrics, band_metrics
from qmcnet.model import ModelConfig, QMCNet, param_count
from qmcnet.sim import CircuitIR, GateOp, circuit_gradients, connected_correlations, dense_unitary_oracle, feat
from qmcnet.sim import final_states, run_circuit, simulate
from qmcnet.training import ANSATZ_SUITE, BAND_SUITE, EvalReport, TrainConfig, ablate, evaluate, train

ORACLE_TOL = 1e-10
NORM_TOL = 1e-12
ORACLE_BUDGET_S = 10.0
GRAD_TOL = 1e-6
FD_STEP = 1e-5
GRAD_BUDGET_S = 60.0
SEPARABLE_TOL = 1e-10
ENTANGLED_MIN = 1e-3
E2E_REL_TOL = 1e-5
DESK_MIN_ACC = 0.80
DESK_BUDGET_S = 600.0
REPORT_TOL = 1e-12

# Reference EuroSAT per-band statistics (entropy, variance, flatness, edge density).
EUROSAT_ROWS = {
    "Red": BandMetrics(6.4017, 4015.0316, 0.2109, 0.5775),
    "Green": BandMetrics(6.6672, 4022.5922, 0.2332, 0.5898),
    "Blue": BandMetrics(6.7971, 4019.2067, 0.2401, 0.5598),
    "NDVI": BandMetrics(7.0133, 2911.9893, 0.8526, 0.3098),
    "EVI": BandMetrics(2.9599, 6512.0394, 0.2438, 0.3368),
    "Entropy": BandMetrics(7.1627, 1888.4368, 0.9420, 0.1369),
}


def _report(num, title, ok, detail, seconds):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {title} | {detail} | {seconds:.2f}s"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# 1 -----------------------------------------------------------------------------


def test_01_simulator_matches_dense_oracle():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst_amp = worst_norm = 0.0
    for _ in range(200):
        c = random_circuit(rng, int(rng.integers(1, 5)), int(rng.integers(1, 25)))
        p = rng.uniform(-np.pi, np.pi, c.num_variational_params)
        x = rng.uniform(-np.pi, np.pi, c.num_encoding_features)
        psi = final_states(c, p, x)[0]
        worst_amp = max(worst_amp, np.max(np.abs(psi - dense_unitary_oracle(c, p, x)[:, 0])))
        worst_norm = max(worst_norm, abs(np.linalg.norm(psi) - 1.0))
    dt = time.perf_counter() - t0
    ok = worst_amp < ORACLE_TOL and worst_norm < NORM_TOL and dt < ORACLE_BUDGET_S
    assert _report(1, "simulator vs dense oracle (200 circuits)", ok,
                   f"max amp err {worst_amp:.2e}, max norm drift {worst_norm:.2e}", dt)


# 2 -----------------------------------------------------------------------------


def _as_feature_circuit(c: CircuitIR) -> CircuitIR:
    """Same circuit with every variational angle turned into an extra feature."""
    f = c.num_encoding_features

    def remap(a):
        return feat(f + a.value) if a.kind == "variational" else a

    gates = tuple(GateOp(g.kind, g.qubits, tuple(remap(a) for a in g.angles)) for g in c.gates)
    return CircuitIR(c.num_qubits, gates, 0, f + c.num_variational_params)


def _batched_central_differences(c, points, h):
    """d<Z>/d(features, params) by central differences, all draws in one batch."""
    fc = _as_feature_circuit(c)
    n, d = points.shape
    steps = np.eye(d) * h
    plus = (points[:, None, :] + steps[None]).reshape(-1, d)
    minus = (points[:, None, :] - steps[None]).reshape(-1, d)
    z = run_circuit(fc, [], np.vstack([plus, minus]))
    diff = (z[: n * d] - z[n * d :]).reshape(n, d, c.num_qubits) / (2 * h)
    return diff.transpose(0, 2, 1)  # (N, Q, F + P)


def test_02_parameter_shift_matches_finite_differences():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    worst = {}
    for name in PRESET_NAMES:
        c = preset(name)
        f, p = c.num_encoding_features, c.num_variational_params
        points = rng.uniform(-np.pi, np.pi, (50, f + p))
        fd = _batched_central_differences(c, points, FD_STEP)
        err = 0.0
        for k, pt in enumerate(points):
            gp, gx = circuit_gradients(c, pt[f:], pt[:f])
            err = max(err, np.max(np.abs(np.concatenate([gx, gp], axis=1) - fd[k])))
        worst[name] = err
    dt = time.perf_counter() - t0
    top = max(worst.values())
    ok = top < GRAD_TOL and dt < GRAD_BUDGET_S
    assert _report(2, "parameter shift vs central FD (9 presets x 50 draws)", ok,
                   f"max abs err {top:.2e} (worst {max(worst, key=worst.get)})", dt)


# 3 -----------------------------------------------------------------------------


def test_03_separability():
    rng = np.random.default_rng(303)
    t0 = time.perf_counter()
    sep = 0.0
    c = preset("mono-ry")
    for _ in range(10):
        s = simulate(c, rng.uniform(-np.pi, np.pi, c.num_variational_params), rng.uniform(-np.pi, np.pi, c.num_encoding_features))
        sep = max(sep, np.max(np.abs(connected_correlations(s))))
    violations = {}
    for name in (n for n in PRESET_NAMES if n != "mono-ry"):
        e = preset(name)
        best = 0.0
        for _ in range(10):
            s = simulate(e, rng.uniform(-np.pi, np.pi, e.num_variational_params), rng.uniform(-np.pi, np.pi, e.num_encoding_features))
            best = max(best, np.max(np.abs(connected_correlations(s))))
        violations[name] = best
    dt = time.perf_counter() - t0
    weakest = min(violations.values())
    ok = sep < SEPARABLE_TOL and weakest > ENTANGLED_MIN
    assert _report(3, "mono-ry factorizes, entangling presets do not", ok,
                   f"mono-ry max {sep:.1e}; weakest violation {weakest:.3f} ({min(violations, key=violations.get)})", dt)


# 4 -----------------------------------------------------------------------------


def test_04_metric_suite():
    t0 = time.perf_counter()
    const = band_metrics(np.full((32, 32), 0.42))
    uniform = band_metrics(np.arange(256, dtype=np.float64).reshape(16, 16))
    noise = band_metrics(np.random.default_rng(404).uniform(0, 1, (128, 128)))
    dt = time.perf_counter() - t0
    checks = {
        "constant (H, var, ED) = 0": (const.entropy, const.variance, const.edge_density) == (0.0, 0.0, 0.0),
        "constant flagged degenerate with F = 0": const.degenerate and const.flatness == 0.0,
        "uniform H = 8": abs(uniform.entropy - 8.0) < 1e-9,
        "noise variance within 5%": abs(noise.variance - 5418.75) < 0.05 * 5418.75,
    }
    failed = [k for k, v in checks.items() if not v]
    assert _report(4, "metric unit suite", not failed,
                   f"uniform H {uniform.entropy:.12f}, noise var {noise.variance:.1f}" + (f"; failed {failed}" if failed else ""), dt)


# 5 -----------------------------------------------------------------------------


def test_05_rubric_calibration():
    t0 = time.perf_counter()
    widths = {b: design_circuit(m).qubits for b, m in EUROSAT_ROWS.items()}
    entropy_preset = preset("eurosat-entropy").num_qubits
    dt = time.perf_counter() - t0
    ok = (
        widths["Red"] == widths["Green"] == widths["Blue"] == 6
        and widths["NDVI"] == 8
        and widths["EVI"] == 4
        and (widths["Entropy"], entropy_preset) == (8, 7)
    )
    assert _report(5, "rubric widths on EuroSAT statistics", ok,
                   f"RGB {widths['Red']}/{widths['Green']}/{widths['Blue']}, NDVI {widths['NDVI']}, EVI {widths['EVI']}; "
                   f"entropy rubric {widths['Entropy']} vs preset {entropy_preset} (documented deviation)", dt)


# 6 -----------------------------------------------------------------------------


def test_06_parameter_counts():
    t0 = time.perf_counter()
    base = ModelConfig.from_assignment("eurosat", patch_size=8, image_size=(64, 64), num_classes=10)
    res = ModelConfig.from_assignment("eurosat", patch_size=8, image_size=(64, 64), num_classes=10, residual=True)
    got = (param_count(base)["classical"], param_count(res)["classical"], aggregated_width(assignment("eurosat")))
    dt = time.perf_counter() - t0
    assert _report(6, "EuroSAT parameter counts", got == (8853, 21285, 37),
                   f"classical {got[0]}, residual {got[1]}, width {got[2]}", dt)


# 7 -----------------------------------------------------------------------------


def test_07_end_to_end_gradient():
    rng = np.random.default_rng(707)
    t0 = time.perf_counter()
    cfg = ModelConfig.from_assignment("toy", patch_size=4, image_size=(8, 8), num_classes=3, hidden=6)
    model = QMCNet.create(cfg, seed=7)
    x = rng.random((4, 6, 8, 8))
    y = np.array([0, 1, 2, 1])
    _, grads, _ = model.loss_and_grads(x, y, step=1)
    analytic, numeric = [], []
    for name, p in model.params.items():
        for i in range(p.size):
            old = p.flat[i]
            p.flat[i] = old + 1e-6
            lp = nn.cross_entropy(model.forward(x, train=True, step=1)[0], y)[0]
            p.flat[i] = old - 1e-6
            lm = nn.cross_entropy(model.forward(x, train=True, step=1)[0], y)[0]
            p.flat[i] = old
            numeric.append((lp - lm) / 2e-6)
        analytic.append(grads[name].ravel())
    a, n = np.concatenate(analytic), np.array(numeric)
    rel = np.linalg.norm(a - n) / np.linalg.norm(n)
    dt = time.perf_counter() - t0
    assert _report(7, "end-to-end gradient (toy config)", rel < E2E_REL_TOL,
                   f"relative error {rel:.2e} over {a.size} parameters", dt)


# 8 -----------------------------------------------------------------------------


@pytest.fixture(scope="module")
def desk():
    ds = synth_dataset()
    cfg = TrainConfig.desk()
    t0 = time.perf_counter()
    first = train(cfg, ds)
    dt = time.perf_counter() - t0
    return ds, cfg, first, dt


def test_08_desk_training(desk):
    ds, cfg, first, dt = desk
    second = train(cfg, ds)
    sizes = {k: len(v) for k, v in first.splits.items()}
    acc = evaluate(first.model, ds, first.splits["test"]).accuracy
    losses = [c["val_loss"] for c in first.checkpoints]
    monotone = all(b <= a for a, b in zip(losses, losses[1:]))
    same = first.log_csv() == second.log_csv() and all(
        np.array_equal(first.model.params[k], second.model.params[k]) for k in first.model.params
    )
    ok = acc >= DESK_MIN_ACC and monotone and dt < DESK_BUDGET_S and same and sizes["train"] == 400 and sizes["test"] == 100
    assert _report(8, "desk-scale training (400/100, 15 epochs)", ok,
                   f"test acc {acc:.3f}, checkpoint val losses {[round(v, 4) for v in losses]}, "
                   f"rerun identical {same}, split {sizes}", dt)


# 9 -----------------------------------------------------------------------------


def _report_consistency(rep: EvalReport) -> float:
    cm = np.array(rep.confusion, dtype=np.float64)
    tp = np.diag(cm)
    rows, cols = cm.sum(axis=1), cm.sum(axis=0)
    recall = np.where(rows > 0, tp / np.where(rows > 0, rows, 1), 0.0)
    precision = np.where(cols > 0, tp / np.where(cols > 0, cols, 1), 0.0)
    f1 = np.where(precision + recall > 0, 2 * precision * recall / np.where(precision + recall > 0, precision + recall, 1), 0.0)
    derived = [tp.sum() / cm.sum(), precision.mean(), recall.mean(), f1.mean(), *recall]
    stated = [rep.accuracy, rep.precision, rep.recall, rep.f1, *rep.per_class_accuracy]
    return float(np.max(np.abs(np.array(derived) - np.array(stated))))


def test_09_ablation_harness(desk):
    ds, cfg, first, _ = desk
    t0 = time.perf_counter()
    ansatz, _ = ablate("ansatz", cfg, ds)
    bands, _ = ablate("bands", cfg, ds)
    dt = time.perf_counter() - t0
    reports = list(ansatz.values()) + list(bands.values())
    worst = max(_report_consistency(r) for r in reports)
    identity = ansatz["band-specific"] == evaluate(first.model, ds, first.splits["test"])
    ok = list(ansatz) == list(ANSATZ_SUITE) and len(bands) == len(BAND_SUITE) == 9 and worst < REPORT_TOL and identity
    accs = ", ".join(f"{k} {v.accuracy:.2f}" for k, v in ansatz.items())
    assert _report(9, "ablation suites (5 ansatz + 9 band rows)", ok,
                   f"max report inconsistency {worst:.1e}; band-specific equals default {identity}; {accs}", dt)
