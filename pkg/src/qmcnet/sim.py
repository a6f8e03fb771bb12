"""Dense statevector simulator for small parameterized circuits.

Conventions (fixed, the dense oracle pins them):

* RY(t) = exp(-i t Y / 2), RZ(t) = exp(-i t Z / 2)
* U3(a, b, c) = RZ(a) RY(b) RZ(c)
* CRZ(t) on (control, target) = diag(1, 1, e^{-it/2}, e^{+it/2})
* PSWAP(t) is the identity on |00>, |11> and
  [[cos(t/2), -i sin(t/2)], [-i sin(t/2), cos(t/2)]] on the |01>, |10> block
* qubit 0 is the least-significant bit of the amplitude index

Internally every gate is lowered to a short list of primitives (single-qubit
rotations, H, CNOT and the two-qubit Pauli rotations RZZ/RXX/RYY). Every
parameterized primitive is ``exp(-i * coeff * angle * P / 2)`` with ``P**2 = I``,
so the two-term shift rule at +-pi/2 is exact for each occurrence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

GATE_KINDS = ("RY", "RZ", "U3", "CNOT", "CRZ", "PSWAP", "H")
MAX_QUBITS = 12
ORACLE_MAX_QUBITS = 6

_NUM_ANGLES = {"RY": 1, "RZ": 1, "U3": 3, "CNOT": 0, "CRZ": 1, "PSWAP": 1, "H": 0}
_NUM_QUBITS = {"RY": 1, "RZ": 1, "U3": 1, "CNOT": 2, "CRZ": 2, "PSWAP": 2, "H": 1}

# Keeps shifted-batch simulations around 64 MB of complex128.
_CHUNK_AMPLITUDES = 1 << 22


class CircuitError(ValueError):
    """Raised for malformed gates, circuits or argument shapes."""


@dataclass(frozen=True)
class Angle:
    """Where a rotation angle comes from.

    ``kind`` is ``"constant"`` (``value`` is the angle), ``"variational"``
    (``value`` indexes the parameter vector) or ``"encoding"`` (``value``
    indexes the feature vector).
    """

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in ("constant", "variational", "encoding"):
            raise CircuitError(f"unknown angle source {self.kind!r}")
        if self.kind != "constant":
            if int(self.value) != self.value or self.value < 0:
                raise CircuitError(f"{self.kind} index must be a non-negative integer")
            object.__setattr__(self, "value", int(self.value))

    def resolve(self, params: np.ndarray, features: np.ndarray) -> np.ndarray:
        """Angle values for a batch; ``features`` has shape (N, F)."""
        n = features.shape[0]
        if self.kind == "constant":
            return np.full(n, float(self.value))
        if self.kind == "variational":
            return np.full(n, params[self.value])
        return features[:, self.value]


def const(value: float) -> Angle:
    return Angle("constant", float(value))


def param(index: int) -> Angle:
    return Angle("variational", index)


def feat(index: int) -> Angle:
    return Angle("encoding", index)


@dataclass(frozen=True)
class GateOp:
    kind: str
    qubits: tuple[int, ...]
    angles: tuple[Angle, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "angles", tuple(self.angles))
        if self.kind not in GATE_KINDS:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        if len(self.qubits) != _NUM_QUBITS[self.kind]:
            raise CircuitError(f"{self.kind} acts on {_NUM_QUBITS[self.kind]} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise CircuitError(f"{self.kind} qubits must be distinct, got {self.qubits}")
        if min(self.qubits) < 0:
            raise CircuitError("negative qubit index")
        if len(self.angles) != _NUM_ANGLES[self.kind]:
            raise CircuitError(f"{self.kind} takes {_NUM_ANGLES[self.kind]} angle(s), got {len(self.angles)}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "qubits": list(self.qubits),
            "angles": [[a.kind, a.value] for a in self.angles],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GateOp":
        return cls(d["kind"], tuple(d["qubits"]), tuple(Angle(k, v) for k, v in d["angles"]))


@dataclass(frozen=True)
class CircuitIR:
    """An ordered gate list plus the sizes of its parameter and feature vectors."""

    num_qubits: int
    gates: tuple[GateOp, ...] = ()
    num_variational_params: int = 0
    num_encoding_features: int = 0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        self.validate()

    def validate(self) -> None:
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise CircuitError(f"num_qubits must be in [1, {MAX_QUBITS}], got {self.num_qubits}")
        seen: dict[int, int] = {}
        for gi, g in enumerate(self.gates):
            if max(g.qubits) >= self.num_qubits:
                raise CircuitError(f"gate {gi} ({g.kind}) addresses qubit {max(g.qubits)} of {self.num_qubits}")
            for a in g.angles:
                if a.kind == "variational":
                    if a.value >= self.num_variational_params:
                        raise CircuitError(f"gate {gi}: param index {a.value} out of range")
                    if a.value in seen:
                        raise CircuitError(f"param index {a.value} used by gates {seen[a.value]} and {gi}")
                    seen[a.value] = gi
                elif a.kind == "encoding" and a.value >= self.num_encoding_features:
                    raise CircuitError(f"gate {gi}: feature index {a.value} out of range")
        if len(seen) != self.num_variational_params:
            missing = sorted(set(range(self.num_variational_params)) - set(seen))
            raise CircuitError(f"variational params never used: {missing[:5]}")

    @property
    def has_entanglers(self) -> bool:
        return any(len(g.qubits) == 2 for g in self.gates)

    def count(self, kind: str) -> int:
        return sum(g.kind == kind for g in self.gates)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "num_qubits": self.num_qubits,
            "num_variational_params": self.num_variational_params,
            "num_encoding_features": self.num_encoding_features,
            "gates": [g.to_dict() for g in self.gates],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CircuitIR":
        return cls(
            d["num_qubits"],
            tuple(GateOp.from_dict(g) for g in d["gates"]),
            d["num_variational_params"],
            d["num_encoding_features"],
            d.get("name", ""),
        )


@dataclass
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise CircuitError(f"num_qubits must be in [1, {MAX_QUBITS}]")
        if self.amplitudes.shape != (2**self.num_qubits,):
            raise CircuitError(f"expected {2**self.num_qubits} amplitudes, got {self.amplitudes.shape}")

    @classmethod
    def zero(cls, num_qubits: int) -> "StateVector":
        amps = np.zeros(2**num_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(num_qubits, amps)

    @property
    def norm_sq(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)


# --- primitives -------------------------------------------------------------


class _Prim(NamedTuple):
    op: str  # RY, RZ, H, CNOT, RZZ, RXX, RYY
    qubits: tuple[int, ...]
    angle: Angle | None = None
    coeff: float = 1.0


def _lower(gate: GateOp) -> list[_Prim]:
    k, q = gate.kind, gate.qubits
    if k in ("RY", "RZ"):
        return [_Prim(k, q, gate.angles[0])]
    if k == "H" or k == "CNOT":
        return [_Prim(k, q)]
    if k == "U3":
        a, b, c = gate.angles
        return [_Prim("RZ", q, c), _Prim("RY", q, b), _Prim("RZ", q, a)]
    if k == "CRZ":
        # exp(-i t/4 Z_t) exp(+i t/4 Z_c Z_t)
        return [_Prim("RZZ", q, gate.angles[0], -0.5), _Prim("RZ", (q[1],), gate.angles[0], 0.5)]
    # PSWAP: exp(-i t/4 XX) exp(-i t/4 YY); the two terms commute
    return [_Prim("RXX", q, gate.angles[0], 0.5), _Prim("RYY", q, gate.angles[0], 0.5)]


def _lower_circuit(circuit: CircuitIR) -> list[_Prim]:
    return [p for g in circuit.gates for p in _lower(g)]


@lru_cache(maxsize=None)
def _cnot_perm(n: int, c: int, t: int) -> np.ndarray:
    idx = np.arange(2**n)
    return idx ^ (((idx >> c) & 1) << t)


@lru_cache(maxsize=None)
def _zz_sign(n: int, a: int, b: int) -> np.ndarray:
    idx = np.arange(2**n)
    return 1.0 - 2.0 * (((idx >> a) ^ (idx >> b)) & 1)


@lru_cache(maxsize=None)
def _z_table(n: int) -> np.ndarray:
    """(2**n, n) matrix of Z eigenvalues; column k belongs to qubit k."""
    idx = np.arange(2**n)[:, None]
    return 1.0 - 2.0 * ((idx >> np.arange(n)[None, :]) & 1)


# States are evolved as separate real and imaginary float64 arrays of shape
# (2**n, N), batch last so every slice is contiguous. Real ufuncs round each
# operation exactly, whereas complex loops may fuse multiply-adds depending on
# memory layout, which would make results depend on batch shape.
def _apply_prim(re: np.ndarray, im: np.ndarray, n: int, p: _Prim, theta: np.ndarray | None):
    """Apply one primitive to a batch of states given as (2**n, N) real/imag parts."""
    nb = re.shape[-1]
    if p.op in ("RY", "RZ", "H"):
        q = p.qubits[0]
        vr = re.reshape(2 ** (n - q - 1), 2, 2**q, nb)
        vi = im.reshape(2 ** (n - q - 1), 2, 2**q, nb)
        r0, r1, i0, i1 = vr[:, 0], vr[:, 1], vi[:, 0], vi[:, 1]
        if p.op == "H":
            h = np.sqrt(0.5)
            nr = ((r0 + r1) * h, (r0 - r1) * h)
            ni = ((i0 + i1) * h, (i0 - i1) * h)
        else:
            half = 0.5 * theta
            c, s = np.cos(half), np.sin(half)
            if p.op == "RY":
                nr = (c * r0 - s * r1, s * r0 + c * r1)
                ni = (c * i0 - s * i1, s * i0 + c * i1)
            else:  # |0> gets e^{-i t/2}, |1> gets e^{+i t/2}
                nr = (c * r0 + s * i0, c * r1 - s * i1)
                ni = (c * i0 - s * r0, c * i1 + s * r1)
        return np.stack(nr, axis=1).reshape(-1, nb), np.stack(ni, axis=1).reshape(-1, nb)
    a, b = p.qubits
    if p.op == "CNOT":
        perm = _cnot_perm(n, a, b)
        return re[perm], im[perm]
    half = 0.5 * theta
    c, s = np.cos(half)[None, :], np.sin(half)[None, :]
    if p.op == "RZZ":  # multiply by cos - i sin * sign
        s = s * _zz_sign(n, a, b)[:, None]
        return c * re + s * im, c * im - s * re
    perm = np.arange(2**n) ^ ((1 << a) | (1 << b))
    fr, fi = re[perm], im[perm]
    if p.op == "RYY":  # YY = -XX on even parity, +XX on odd parity
        s = -s * _zz_sign(n, a, b)[:, None]
    return c * re + s * fi, c * im - s * fr


def _evolve_parts(n: int, prims: Sequence[_Prim], angles: Sequence[np.ndarray | None], nb: int):
    re = np.zeros((2**n, nb))
    re[0] = 1.0
    im = np.zeros((2**n, nb))
    for p, th in zip(prims, angles):
        re, im = _apply_prim(re, im, n, p, th)
    return re, im


def _evolve(n: int, prims: Sequence[_Prim], angles: Sequence[np.ndarray | None], nb: int) -> np.ndarray:
    """Final states, shape (N, 2**n) complex."""
    re, im = _evolve_parts(n, prims, angles, nb)
    out = np.empty((nb, 2**n), dtype=np.complex128)
    out.real = re.T
    out.imag = im.T
    return out


def _expect_z_parts(re: np.ndarray, im: np.ndarray, n: int) -> np.ndarray:
    """Per-qubit <Z>, shape (N, n), from (2**n, N) parts."""
    probs = re * re + im * im
    # Explicit loop over amplitudes: the summation order is fixed regardless of N.
    table = _z_table(n)
    z = np.zeros((re.shape[1], n))
    for i in range(2**n):
        z += probs[i][:, None] * table[i][None, :]
    return z


def _expect_z(state: np.ndarray, n: int) -> np.ndarray:
    return _expect_z_parts(state.real.T, state.imag.T, n)


def _check_inputs(circuit: CircuitIR, params, features) -> tuple[np.ndarray, np.ndarray, bool]:
    params = np.asarray(params, dtype=np.float64).reshape(-1)
    features = np.asarray(features, dtype=np.float64)
    single = features.ndim <= 1
    features = features.reshape(1, -1) if single else features
    if features.ndim != 2:
        raise CircuitError("features must be a vector or an (N, F) matrix")
    if params.size != circuit.num_variational_params:
        raise CircuitError(f"expected {circuit.num_variational_params} params, got {params.size}")
    if features.shape[1] != circuit.num_encoding_features:
        raise CircuitError(f"expected {circuit.num_encoding_features} features, got {features.shape[1]}")
    return params, features, single


def _prim_angles(prims, params, features) -> list[np.ndarray | None]:
    return [None if p.angle is None else p.coeff * p.angle.resolve(params, features) for p in prims]


# --- public operations ------------------------------------------------------


def apply_gate(state: StateVector, gate: GateOp, resolved_angles: Sequence[float] = ()) -> StateVector:
    """Evolve ``state`` by ``gate`` using explicit angle values."""
    n = state.num_qubits
    if max(gate.qubits) >= n:
        raise CircuitError(f"{gate.kind} addresses qubit {max(gate.qubits)} of {n}")
    resolved = np.asarray(resolved_angles, dtype=np.float64).reshape(-1)
    if resolved.size != _NUM_ANGLES[gate.kind]:
        raise CircuitError(f"{gate.kind} needs {_NUM_ANGLES[gate.kind]} angle(s), got {resolved.size}")
    bound = GateOp(gate.kind, gate.qubits, tuple(const(v) for v in resolved))
    re, im = state.amplitudes.real[:, None].copy(), state.amplitudes.imag[:, None].copy()
    for p in _lower(bound):
        th = None if p.angle is None else np.array([p.coeff * p.angle.value])
        re, im = _apply_prim(re, im, n, p, th)
    return StateVector(n, re[:, 0] + 1j * im[:, 0])


def final_states(circuit: CircuitIR, params, features) -> np.ndarray:
    """Final amplitudes for a batch of feature vectors, shape (N, 2**Q)."""
    params, features, _ = _check_inputs(circuit, params, features)
    prims = _lower_circuit(circuit)
    return _evolve(circuit.num_qubits, prims, _prim_angles(prims, params, features), features.shape[0])


def simulate(circuit: CircuitIR, params, features) -> StateVector:
    """Final state for a single feature vector."""
    features = np.asarray(features, dtype=np.float64).reshape(-1)
    return StateVector(circuit.num_qubits, final_states(circuit, params, features)[0])


def run_circuit(circuit: CircuitIR, params, features) -> np.ndarray:
    """Per-qubit <Z> after running the circuit from |0...0>.

    ``features`` may be a single vector (returns shape (Q,)) or a batch of
    shape (N, F) (returns (N, Q)). Expectations are exact.
    """
    params, features, single = _check_inputs(circuit, params, features)
    prims = _lower_circuit(circuit)
    re, im = _evolve_parts(circuit.num_qubits, prims, _prim_angles(prims, params, features), features.shape[0])
    z = _expect_z_parts(re, im, circuit.num_qubits)
    return z[0] if single else z


def expectation_z(state: StateVector) -> np.ndarray:
    return _expect_z(state.amplitudes[None, :], state.num_qubits)[0]


def two_point_z_correlation(state: StateVector, a: int, b: int) -> float:
    """<Z_a Z_b> for the given state."""
    n = state.num_qubits
    if a == b:
        raise CircuitError("correlation needs two distinct qubits")
    if not (0 <= a < n and 0 <= b < n):
        raise CircuitError(f"qubit index out of range for {n} qubits")
    probs = np.abs(state.amplitudes) ** 2
    return float(probs @ _zz_sign(n, a, b))


def connected_correlations(state: StateVector) -> np.ndarray:
    """Matrix of <Z_a Z_b> - <Z_a><Z_b>; zero for product states."""
    n = state.num_qubits
    z = expectation_z(state)
    out = np.zeros((n, n))
    for a in range(n):
        for b in range(a + 1, n):
            out[a, b] = out[b, a] = two_point_z_correlation(state, a, b) - z[a] * z[b]
    return out


def _shift_plan(prims: Sequence[_Prim]) -> list[int]:
    return [k for k, p in enumerate(prims) if p.angle is not None and p.angle.kind != "constant"]


def _shifted_differences(circuit, prims, plan, params, features) -> np.ndarray:
    """Shift-rule terms, shape (M, N, Q): coeff * (f(+pi/2) - f(-pi/2)) / 2 per occurrence."""
    n = circuit.num_qubits
    nb = features.shape[0]
    m = len(plan)
    out = np.empty((m, nb, n))
    if m == 0:
        return out
    base = _prim_angles(prims, params, features)
    chunk = max(1, _CHUNK_AMPLITUDES // (2 * m * 2**n))
    shift = np.zeros((len(prims), 2 * m))
    for j, k in enumerate(plan):
        shift[k, 2 * j] = np.pi / 2
        shift[k, 2 * j + 1] = -np.pi / 2
    coeffs = np.array([prims[k].coeff for k in plan])
    for lo in range(0, nb, chunk):
        hi = min(nb, lo + chunk)
        angles = [
            None if b is None else (b[None, lo:hi] + shift[k][:, None]).reshape(-1)
            for k, b in enumerate(base)
        ]
        z = _expect_z_parts(*_evolve_parts(n, prims, angles, 2 * m * (hi - lo)), n).reshape(2 * m, hi - lo, n)
        out[:, lo:hi] = 0.5 * coeffs[:, None, None] * (z[0::2] - z[1::2])
    return out


def circuit_gradients(circuit: CircuitIR, params, features) -> tuple[np.ndarray, np.ndarray]:
    """Parameter-shift Jacobians of the per-qubit <Z>.

    Returns ``(d<Z_k>/d theta_j, d<Z_k>/d x_i)`` with shapes (Q, P) and (Q, F)
    for a single feature vector, or (N, Q, P) and (N, Q, F) for a batch.
    Angle sources used by several primitives (re-uploading, CRZ, PSWAP)
    accumulate one shift term per occurrence.
    """
    params, features, single = _check_inputs(circuit, params, features)
    prims = _lower_circuit(circuit)
    plan = _shift_plan(prims)
    diffs = _shifted_differences(circuit, prims, plan, params, features)
    nb, q = features.shape[0], circuit.num_qubits
    jp = np.zeros((circuit.num_variational_params, nb, q))
    jx = np.zeros((circuit.num_encoding_features, nb, q))
    for j, k in enumerate(plan):
        a = prims[k].angle
        (jp if a.kind == "variational" else jx)[a.value] += diffs[j]
    jp, jx = jp.transpose(1, 2, 0), jx.transpose(1, 2, 0)
    return (jp[0], jx[0]) if single else (jp, jx)


def circuit_vjp(circuit: CircuitIR, params, features, upstream) -> tuple[np.ndarray, np.ndarray]:
    """Vector-Jacobian product for a batch.

    ``upstream`` has shape (N, Q) (dL/d<Z>). Returns dL/dparams summed over the
    batch, shape (P,), and dL/dfeatures, shape (N, F).
    """
    params, features, _ = _check_inputs(circuit, params, features)
    upstream = np.asarray(upstream, dtype=np.float64).reshape(features.shape[0], circuit.num_qubits)
    prims = _lower_circuit(circuit)
    plan = _shift_plan(prims)
    diffs = _shifted_differences(circuit, prims, plan, params, features)
    contrib = np.einsum("mnq,nq->mn", diffs, upstream)
    g_params = np.zeros(circuit.num_variational_params)
    g_feats = np.zeros(features.shape)
    for j, k in enumerate(plan):
        a = prims[k].angle
        if a.kind == "variational":
            g_params[a.value] += contrib[j].sum()
        else:
            g_feats[:, a.value] += contrib[j]
    return g_params, g_feats


# --- dense oracle -----------------------------------------------------------

_I2 = np.eye(2, dtype=np.complex128)
_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
_Z = np.diag([1.0, -1.0]).astype(np.complex128)
_H = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)
_P0 = np.diag([1.0, 0.0]).astype(np.complex128)
_P1 = np.diag([0.0, 1.0]).astype(np.complex128)


def ry_matrix(t: float) -> np.ndarray:
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def rz_matrix(t: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])


def _embed(ops: dict[int, np.ndarray], n: int) -> np.ndarray:
    """Kronecker product over qubits n-1 ... 0 (qubit 0 is least significant)."""
    out = np.ones((1, 1), dtype=np.complex128)
    for q in range(n - 1, -1, -1):
        out = np.kron(out, ops.get(q, _I2))
    return out


def gate_unitary(gate: GateOp, n: int, angles: Sequence[float] = ()) -> np.ndarray:
    """Full 2**n x 2**n matrix of one gate, built by explicit Kronecker expansion."""
    k, q = gate.kind, gate.qubits
    if k == "H":
        return _embed({q[0]: _H}, n)
    if k == "RY":
        return _embed({q[0]: ry_matrix(angles[0])}, n)
    if k == "RZ":
        return _embed({q[0]: rz_matrix(angles[0])}, n)
    if k == "U3":
        a, b, c = angles
        return _embed({q[0]: rz_matrix(a) @ ry_matrix(b) @ rz_matrix(c)}, n)
    if k == "CNOT":
        return _embed({q[0]: _P0}, n) + _embed({q[0]: _P1, q[1]: _X}, n)
    if k == "CRZ":
        return _embed({q[0]: _P0}, n) + _embed({q[0]: _P1, q[1]: rz_matrix(angles[0])}, n)
    t = angles[0]
    ident = _embed({}, n)
    zz = _embed({q[0]: _Z, q[1]: _Z}, n)
    hop = 0.5 * (_embed({q[0]: _X, q[1]: _X}, n) + _embed({q[0]: _Y, q[1]: _Y}, n))
    return 0.5 * (ident + zz) + np.cos(t / 2) * 0.5 * (ident - zz) - 1j * np.sin(t / 2) * hop


def dense_unitary_oracle(circuit: CircuitIR, params, features) -> np.ndarray:
    """Full circuit unitary as a dense matrix (test oracle, at most 6 qubits)."""
    n = circuit.num_qubits
    if n > ORACLE_MAX_QUBITS:
        raise CircuitError(f"dense oracle limited to {ORACLE_MAX_QUBITS} qubits, got {n}")
    params, features, _ = _check_inputs(circuit, params, features)
    u = np.eye(2**n, dtype=np.complex128)
    for g in circuit.gates:
        angles = [float(a.resolve(params, features[:1])[0]) for a in g.angles]
        u = gate_unitary(g, n, angles) @ u
    return u
