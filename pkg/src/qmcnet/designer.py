"""Metric-driven circuit design: rubric, template compiler and fixed presets."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .metrics import BandMetrics
from .sim import CircuitIR, GateOp, const, feat, param

ENTANGLEMENTS = ("linear", "ring", "multi-scale")
PARAMETERIZATIONS = ("one-per-qubit", "three-per-qubit")
BANDS = ("R", "G", "B", "EVI", "NDVI", "Entropy")


@dataclass(frozen=True)
class CircuitSpec:
    qubits: int
    depth: int
    entanglement: str
    parameterization: str
    reupload: bool = False

    def validate(self, max_q: int = 8, min_q: int = 4) -> None:
        if not min_q <= self.qubits <= max_q:
            raise ValueError(f"qubits must be in [{min_q}, {max_q}], got {self.qubits}")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.entanglement not in ENTANGLEMENTS:
            raise ValueError(f"unknown entanglement {self.entanglement!r}")
        if self.parameterization not in PARAMETERIZATIONS:
            raise ValueError(f"unknown parameterization {self.parameterization!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CircuitSpec":
        return cls(int(d["qubits"]), int(d["depth"]), d["entanglement"], d["parameterization"], bool(d.get("reupload", False)))


@dataclass(frozen=True)
class RubricThresholds:
    entropy_low: float = 4.0
    entropy_high: float = 6.9
    variance_low: float = 1000.0
    variance_high: float = 5000.0
    edge_low: float = 0.20
    edge_high: float = 0.45
    flatness_strict: float = 0.70
    depth_low: tuple[int, int] = (1, 2)
    depth_med: tuple[int, int] = (2, 4)
    depth_high: tuple[int, int] = (4, 6)
    depth_cap: int = 4

    def __post_init__(self):
        pairs = [
            (self.entropy_low, self.entropy_high),
            (self.variance_low, self.variance_high),
            (self.edge_low, self.edge_high),
        ]
        for lo, hi in pairs:
            if not 0 < lo < hi:
                raise ValueError(f"thresholds need 0 < low < high, got ({lo}, {hi})")
        if self.flatness_strict <= 0 or self.depth_cap < 1:
            raise ValueError("flatness_strict and depth_cap must be positive")


def _grade(value: float, low: float, high: float) -> int:
    """0 = low, 1 = medium, 2 = high; low is strict, high is inclusive."""
    if value < low:
        return 0
    return 2 if value >= high else 1


def design_circuit(metrics: BandMetrics, thresholds: RubricThresholds | None = None, max_q: int = 8) -> CircuitSpec:
    """Translate band statistics into circuit hyperparameters.

    Width follows ``Q >= H``: rounded up when the band is flat (the bound is
    treated as strict), rounded down otherwise, clamped to ``[4, max_q]``.
    Depth is the floor of the midpoint of the entropy class's depth range,
    capped. Edge density picks the entangler family and variance the
    rotation density (with re-uploading at the top class).
    """
    t = thresholds or RubricThresholds()
    h = metrics.entropy
    raw_q = math.ceil(h) if metrics.flatness >= t.flatness_strict else math.floor(h)
    qubits = min(max(raw_q, 4), max_q)

    lo, hi = (t.depth_low, t.depth_med, t.depth_high)[_grade(h, t.entropy_low, t.entropy_high)]
    depth = min(math.floor((lo + hi) / 2), t.depth_cap)

    ent = ENTANGLEMENTS[_grade(metrics.edge_density, t.edge_low, t.edge_high)]
    var_class = _grade(metrics.variance, t.variance_low, t.variance_high)
    par = "one-per-qubit" if var_class == 0 else "three-per-qubit"
    return CircuitSpec(qubits, depth, ent, par, reupload=var_class == 2)


def entangler_pairs(n: int, entanglement: str) -> list[tuple[int, int]]:
    pairs = [(i, i + 1) for i in range(n - 1)]
    if entanglement in ("ring", "multi-scale") and n > 2:
        pairs.append((n - 1, 0))
    if entanglement == "multi-scale":
        pairs += [(i, (i + 2) % n) for i in range(n) if (i + 2) % n != i]
    return pairs


class _Builder:
    def __init__(self, n: int):
        self.n = n
        self.gates: list[GateOp] = []
        self.num_params = 0

    def _p(self):
        self.num_params += 1
        return param(self.num_params - 1)

    def encode(self):
        self.gates += [GateOp("RY", (q,), (feat(q),)) for q in range(self.n)]

    def ry_layer(self):
        self.gates += [GateOp("RY", (q,), (self._p(),)) for q in range(self.n)]

    def u3_layer(self):
        for q in range(self.n):
            self.gates.append(GateOp("U3", (q,), (self._p(), self._p(), self._p())))

    def cnots(self, pairs):
        self.gates += [GateOp("CNOT", p) for p in pairs]

    def build(self, name: str) -> CircuitIR:
        return CircuitIR(self.n, tuple(self.gates), self.num_params, self.n, name)


def layered_circuit(
    qubits: int,
    depth: int,
    entanglement: str = "linear",
    parameterization: str = "one-per-qubit",
    reupload: bool = False,
    name: str = "",
) -> CircuitIR:
    """Compile the layer template: encoding, then ``depth`` x [rotations; entanglers].

    With ``reupload`` the encoding block opens every layer instead of only the first.
    """
    b = _Builder(qubits)
    for layer in range(depth):
        if layer == 0 or reupload:
            b.encode()
        b.u3_layer() if parameterization == "three-per-qubit" else b.ry_layer()
        b.cnots(entangler_pairs(qubits, entanglement))
    return b.build(name)


def instantiate(spec: CircuitSpec, max_q: int = 8) -> CircuitIR:
    spec.validate(max_q=max_q)
    return layered_circuit(spec.qubits, spec.depth, spec.entanglement, spec.parameterization, spec.reupload)


def _sat6_complex() -> CircuitIR:
    n = 8
    b = _Builder(n)
    for _ in range(4):
        b.encode()
        b.u3_layer()
        for i in range(n):
            b.gates.append(GateOp("CRZ", (i, (i + 1) % n), (b._p(),)))
        for i in range(n // 2):
            b.gates.append(GateOp("PSWAP", (i, i + n // 2), (b._p(),)))
    return b.build("sat6-complex")


def _mono_bellman() -> CircuitIR:
    n = 4
    b = _Builder(n)
    b.encode()
    for _ in range(2):
        b.gates += [GateOp("H", (q,)) for q in range(0, n, 2)]
        b.cnots([(q, q + 1) for q in range(0, n - 1, 2)])
        b.ry_layer()
    return b.build("mono-bellman")


_PRESET_SPECS = {
    "eurosat-rgb": CircuitSpec(6, 3, "multi-scale", "three-per-qubit"),
    "eurosat-ndvi": CircuitSpec(8, 3, "ring", "three-per-qubit"),
    "eurosat-evi": CircuitSpec(4, 4, "ring", "three-per-qubit", reupload=True),
    "eurosat-entropy": CircuitSpec(7, 4, "linear", "three-per-qubit"),
}

PRESET_NAMES = (
    "eurosat-rgb",
    "eurosat-ndvi",
    "eurosat-evi",
    "eurosat-entropy",
    "sat6-complex",
    "sat6-simple",
    "mono-ry",
    "mono-bellman",
    "mono-realamp",
)


def preset(name: str) -> CircuitIR:
    if name in _PRESET_SPECS:
        s = _PRESET_SPECS[name]
        return layered_circuit(s.qubits, s.depth, s.entanglement, s.parameterization, s.reupload, name)
    if name == "sat6-complex":
        return _sat6_complex()
    if name == "sat6-simple":
        return layered_circuit(4, 2, "linear", name=name)
    if name == "mono-ry":
        b = _Builder(4)
        b.encode()
        b.ry_layer()
        b.ry_layer()
        return b.build(name)
    if name == "mono-realamp":
        return layered_circuit(4, 2, "linear", name=name)
    if name == "mono-bellman":
        return _mono_bellman()
    raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")


# Circuits small enough for desk-scale training runs.
_TOY = {
    "R": (3, 1, "ring", "one-per-qubit", False),
    "G": (3, 1, "ring", "one-per-qubit", False),
    "B": (3, 1, "ring", "one-per-qubit", False),
    "EVI": (2, 2, "linear", "three-per-qubit", True),
    "NDVI": (3, 1, "linear", "three-per-qubit", False),
    "Entropy": (2, 1, "linear", "one-per-qubit", False),
}

ASSIGNMENTS = ("eurosat", "sat6", "toy", "mono-ry", "mono-bellman", "mono-realamp")


def assignment(name: str) -> dict[str, CircuitIR]:
    """Band -> circuit mapping for a named configuration."""
    if name == "eurosat":
        names = ["eurosat-rgb"] * 3 + ["eurosat-evi", "eurosat-ndvi", "eurosat-entropy"]
        return {b: preset(n) for b, n in zip(BANDS, names)}
    if name == "sat6":
        return {b: preset("sat6-simple" if b == "EVI" else "sat6-complex") for b in BANDS}
    if name == "toy":
        return {b: layered_circuit(*args, name=f"toy-{b.lower()}") for b, args in _TOY.items()}
    if name.startswith("mono-"):
        return {b: preset(name) for b in BANDS}
    raise KeyError(f"unknown assignment {name!r}; choose from {', '.join(ASSIGNMENTS)}")


def aggregated_width(circuits: dict[str, CircuitIR]) -> int:
    return sum(c.num_qubits for c in circuits.values())
