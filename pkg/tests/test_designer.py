import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmcnet.designer import (
    BANDS,
    PRESET_NAMES,
    CircuitSpec,
    RubricThresholds,
    aggregated_width,
    assignment,
    design_circuit,
    entangler_pairs,
    instantiate,
    preset,
)
from qmcnet.metrics import BandMetrics
from qmcnet.sim import connected_correlations, dense_unitary_oracle, final_states, simulate

# Reference per-band statistics (entropy, variance, flatness, edge density).
EUROSAT_RED = BandMetrics(6.4017, 4015.03, 0.2109, 0.5775)
EUROSAT_NDVI = BandMetrics(7.0133, 2911.99, 0.8526, 0.3098)
SAT6_EVI = BandMetrics(4.4453, 694.80, 0.9063, 0.0495)


def test_rubric_ndvi_row():
    assert design_circuit(EUROSAT_NDVI) == CircuitSpec(8, 4, "ring", "three-per-qubit", False)


def test_rubric_red_row():
    assert design_circuit(EUROSAT_RED) == CircuitSpec(6, 3, "multi-scale", "three-per-qubit", False)


def test_rubric_sat6_evi_row():
    spec = design_circuit(SAT6_EVI)
    assert (spec.qubits, spec.entanglement, spec.parameterization, spec.reupload) == (5, "linear", "one-per-qubit", False)
    # H = 4.45 is a medium-entropy band under the 4.0 cutoff: floor((2 + 4) / 2) = 3 layers
    assert spec.depth == 3


def test_rubric_grades_are_low_strict_high_inclusive():
    t = RubricThresholds()
    at_high = design_circuit(BandMetrics(6.0, 5000.0, 0.5, 0.45), t)
    assert at_high.entanglement == "multi-scale" and at_high.reupload
    below_low = design_circuit(BandMetrics(3.9, 999.0, 0.5, 0.19), t)
    assert below_low.entanglement == "linear" and below_low.parameterization == "one-per-qubit"
    assert below_low.depth == 1 and below_low.qubits == 4


def test_width_clamped_to_max_q():
    assert design_circuit(BandMetrics(7.9, 100, 0.9, 0.1), max_q=6).qubits == 6
    assert design_circuit(BandMetrics(1.2, 100, 0.9, 0.1)).qubits == 4


def test_depth_cap():
    spec = design_circuit(BandMetrics(7.5, 100, 0.1, 0.1), RubricThresholds(depth_cap=3))
    assert spec.depth == 3


@settings(max_examples=200, deadline=None)
@given(h1=st.floats(0, 8), h2=st.floats(0, 8), f=st.floats(0, 1), v=st.floats(0, 9000), e=st.floats(0, 1))
def test_width_monotone_in_entropy(h1, h2, f, v, e):
    lo, hi = sorted((h1, h2))
    assert design_circuit(BandMetrics(lo, v, f, e)).qubits <= design_circuit(BandMetrics(hi, v, f, e)).qubits


def test_threshold_validation():
    with pytest.raises(ValueError):
        RubricThresholds(entropy_low=7.0, entropy_high=6.0)
    with pytest.raises(ValueError):
        RubricThresholds(edge_low=0.0)


def test_smallest_template():
    c = instantiate(CircuitSpec(4, 1, "linear", "one-per-qubit"))
    assert c.count("RY") == 8 and c.count("CNOT") == 3
    assert c.num_variational_params == 4 and c.num_encoding_features == 4
    assert [g.angles[0].kind for g in c.gates[:4]] == ["encoding"] * 4


def test_multiscale_counts():
    c = instantiate(CircuitSpec(6, 3, "multi-scale", "three-per-qubit"))
    assert c.num_variational_params == 54
    assert c.count("CNOT") == 36


def test_reupload_multiplicity():
    c = instantiate(CircuitSpec(4, 4, "ring", "three-per-qubit", True))
    uses = [a.value for g in c.gates for a in g.angles if a.kind == "encoding"]
    assert all(uses.count(i) == 4 for i in range(4))


def test_layer_order():
    c = instantiate(CircuitSpec(4, 2, "ring", "three-per-qubit", True))
    kinds = [g.kind for g in c.gates]
    layer = ["RY"] * 4 + ["U3"] * 4 + ["CNOT"] * 4
    assert kinds == layer * 2


def test_entangler_families():
    assert entangler_pairs(4, "linear") == [(0, 1), (1, 2), (2, 3)]
    assert entangler_pairs(4, "ring") == [(0, 1), (1, 2), (2, 3), (3, 0)]
    assert entangler_pairs(5, "multi-scale")[5:] == [(0, 2), (1, 3), (2, 4), (3, 0), (4, 1)]


def test_spec_validation_and_json():
    spec = CircuitSpec(5, 2, "ring", "one-per-qubit", False)
    assert CircuitSpec.from_dict(spec.to_dict()) == spec
    assert set(spec.to_dict()) == {"qubits", "depth", "entanglement", "parameterization", "reupload"}
    for bad in (CircuitSpec(9, 1, "ring", "one-per-qubit"), CircuitSpec(3, 1, "ring", "one-per-qubit"),
                CircuitSpec(4, 0, "ring", "one-per-qubit"), CircuitSpec(4, 1, "star", "one-per-qubit")):
        with pytest.raises(ValueError):
            instantiate(bad)


@settings(max_examples=30, deadline=None)
@given(
    q=st.integers(4, 4),
    d=st.integers(1, 3),
    e=st.sampled_from(["linear", "ring", "multi-scale"]),
    p=st.sampled_from(["one-per-qubit", "three-per-qubit"]),
    r=st.booleans(),
    seed=st.integers(0, 2**31),
)
def test_specs_compile_to_oracle_equivalent_circuits(q, d, e, p, r, seed):
    c = instantiate(CircuitSpec(q, d, e, p, r))
    rng = np.random.default_rng(seed)
    th = rng.uniform(-np.pi, np.pi, c.num_variational_params)
    x = rng.uniform(-np.pi, np.pi, c.num_encoding_features)
    np.testing.assert_allclose(final_states(c, th, x)[0], dense_unitary_oracle(c, th, x)[:, 0], atol=1e-10, rtol=0)


@pytest.mark.parametrize(
    "name,qubits,layers",
    [("eurosat-rgb", 6, 3), ("eurosat-ndvi", 8, 3), ("eurosat-evi", 4, 4), ("eurosat-entropy", 7, 4)],
)
def test_eurosat_presets(name, qubits, layers):
    c = preset(name)
    assert c.num_qubits == qubits
    assert c.count("U3") == qubits * layers


def test_sat6_complex_layout():
    c = preset("sat6-complex")
    assert c.num_qubits == 8
    assert c.count("CRZ") == 32 and c.count("PSWAP") == 16 and c.count("U3") == 32
    assert sorted({g.qubits for g in c.gates if g.kind == "PSWAP"}) == [(0, 4), (1, 5), (2, 6), (3, 7)]
    uses = [a.value for g in c.gates for a in g.angles if a.kind == "encoding"]
    assert all(uses.count(i) == 4 for i in range(8))


def test_sat6_simple_single_encoding():
    c = preset("sat6-simple")
    assert not any(c.count(k) for k in ("CRZ", "PSWAP", "U3"))
    enc = [g for g in c.gates if g.angles and g.angles[0].kind == "encoding"]
    assert len(enc) == 4 and c.gates[:4] == tuple(enc)
    assert c.count("CNOT") == 6 and c.num_variational_params == 8


def test_unknown_preset():
    with pytest.raises(KeyError):
        preset("nope")


def test_aggregated_widths():
    assert aggregated_width(assignment("eurosat")) == 37
    assert aggregated_width(assignment("sat6")) == 44
    assert [assignment("eurosat")[b].num_qubits for b in BANDS] == [6, 6, 6, 4, 8, 7]


def test_mono_ry_separable_at_random_draws(rng):
    c = preset("mono-ry")
    for _ in range(10):
        s = simulate(c, rng.uniform(-np.pi, np.pi, c.num_variational_params), rng.uniform(-np.pi, np.pi, 4))
        assert np.max(np.abs(connected_correlations(s))) < 1e-10


@pytest.mark.parametrize("name", [n for n in PRESET_NAMES if n != "mono-ry"])
def test_entangling_presets_violate_factorization(name, rng):
    c = preset(name)
    worst = 0.0
    for _ in range(10):
        s = simulate(c, rng.uniform(-np.pi, np.pi, c.num_variational_params), rng.uniform(-np.pi, np.pi, c.num_encoding_features))
        worst = max(worst, np.max(np.abs(connected_correlations(s))))
    assert worst > 1e-3
