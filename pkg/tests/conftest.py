import numpy as np
import pytest

from qmcnet.sim import GATE_KINDS, CircuitIR, GateOp, const, feat, param

_NQ = {"RY": 1, "RZ": 1, "U3": 1, "H": 1, "CNOT": 2, "CRZ": 2, "PSWAP": 2}
_NA = {"RY": 1, "RZ": 1, "U3": 3, "H": 0, "CNOT": 0, "CRZ": 1, "PSWAP": 1}


def random_circuit(rng, num_qubits, num_gates, kinds=GATE_KINDS, num_features=2):
    """Random circuit mixing constant, variational and (shared) encoding angles."""
    kinds = [k for k in kinds if _NQ[k] <= num_qubits]
    gates, n_params = [], 0
    for _ in range(num_gates):
        kind = kinds[rng.integers(len(kinds))]
        qubits = tuple(rng.choice(num_qubits, size=_NQ[kind], replace=False).tolist())
        angles = []
        for _ in range(_NA[kind]):
            src = rng.integers(3)
            if src == 0:
                angles.append(const(rng.uniform(-np.pi, np.pi)))
            elif src == 1:
                angles.append(param(n_params))
                n_params += 1
            else:
                angles.append(feat(int(rng.integers(num_features))))
        gates.append(GateOp(kind, qubits, tuple(angles)))
    return CircuitIR(num_qubits, tuple(gates), n_params, num_features)


def central_jacobian(f, x, h=1e-5):
    x = np.asarray(x, dtype=np.float64)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1) if cols else np.zeros(np.shape(f(x)) + (0,))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --- acceptance reporting -------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
