"""OpenQASM 2.0 export and a parser for the subset this package emits.

Exported programs use ``ry``, ``rz``, ``u3``, ``cx``, ``crz`` and ``h`` from
``qelib1.inc`` plus a ``pswap`` macro defined in the header::

    pswap(t) = RXX(t/2) RYY(t/2)

with each two-qubit Pauli rotation written as a CNOT-RZ-CNOT sandwich in the
X (Hadamard) or Y (``u3(pi/2,-pi/2,pi/2)``) frame.

Our ``U3(a, b, c) = RZ(a) RY(b) RZ(c)`` is emitted as ``u3(b, a, c)``; QASM's
u3 differs from it only by a global phase.

Bound export writes numeric angles. Symbolic export writes ``theta_j`` and
``x_i`` in place of variational parameter j and feature i; such templates
must be bound before other QASM tools can consume them.
"""

from __future__ import annotations

import ast
import math
import operator
import re

import numpy as np

from .sim import Angle, CircuitIR, GateOp, const, feat, param

PSWAP_MACRO = """gate pswap(theta) a, b
{
  h a; h b; cx a, b; rz(theta/2) b; cx a, b; h a; h b;
  u3(pi/2, -pi/2, pi/2) a; u3(pi/2, -pi/2, pi/2) b;
  cx a, b; rz(theta/2) b; cx a, b;
  u3(-pi/2, -pi/2, pi/2) a; u3(-pi/2, -pi/2, pi/2) b;
}"""

_QASM_NAME = {"RY": "ry", "RZ": "rz", "U3": "u3", "CNOT": "cx", "CRZ": "crz", "H": "h", "PSWAP": "pswap"}
_KIND = {v: k for k, v in _QASM_NAME.items()}


def _fmt(a: Angle, params, features) -> str:
    if a.kind == "constant":
        return repr(float(a.value))
    if a.kind == "variational":
        return repr(float(params[a.value])) if params is not None else f"theta_{a.value}"
    return repr(float(features[a.value])) if features is not None else f"x_{a.value}"


def export_circuit(circuit: CircuitIR, params=None, features=None, fmt: str = "qasm2") -> str:
    """OpenQASM text for ``circuit``.

    Pass ``params`` and ``features`` to bind angles; leave either as None to
    keep those angles symbolic.
    """
    if fmt != "qasm2":
        raise ValueError(f"unsupported format {fmt!r}")
    if params is not None:
        params = np.asarray(params, dtype=np.float64).reshape(-1)
        if params.size != circuit.num_variational_params:
            raise ValueError("params length mismatch")
    if features is not None:
        features = np.asarray(features, dtype=np.float64).reshape(-1)
        if features.size != circuit.num_encoding_features:
            raise ValueError("features length mismatch")
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";']
    if circuit.count("PSWAP"):
        lines.append(PSWAP_MACRO)
    lines.append(
        f"// qmcnet: params={circuit.num_variational_params} features={circuit.num_encoding_features}"
        + (f" name={circuit.name}" if circuit.name else "")
    )
    lines.append(f"qreg q[{circuit.num_qubits}];")
    for g in circuit.gates:
        angles = list(g.angles)
        if g.kind == "U3":
            angles = [angles[1], angles[0], angles[2]]
        args = f"({', '.join(_fmt(a, params, features) for a in angles)})" if angles else ""
        qubits = ", ".join(f"q[{q}]" for q in g.qubits)
        lines.append(f"{_QASM_NAME[g.kind]}{args} {qubits};")
    return "\n".join(lines) + "\n"


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


def _eval_const(node) -> float:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id == "pi":
        return math.pi
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_const(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_const(node.left), _eval_const(node.right))
    raise ValueError(f"unsupported angle expression: {ast.dump(node)}")


_SYMBOL = re.compile(r"^(theta|x)_(\d+)$")


def _parse_angle(text: str) -> Angle:
    text = text.strip()
    m = _SYMBOL.match(text)
    if m:
        return param(int(m.group(2))) if m.group(1) == "theta" else feat(int(m.group(2)))
    return const(_eval_const(ast.parse(text, mode="eval").body))


_STMT = re.compile(r"^(\w+)\s*(?:\((.*)\))?\s+(.+)$")
_QREF = re.compile(r"^(\w+)\[(\d+)\]$")


def parse_qasm(text: str) -> CircuitIR:
    """Parse QASM produced by :func:`export_circuit` back into a CircuitIR."""
    text = re.sub(r"gate\s+pswap\b[^{]*\{[^}]*\}", "", text)
    text = re.sub(r"//[^\n]*", "", text)
    num_qubits, reg = None, None
    gates: list[GateOp] = []
    for raw in text.split(";"):
        stmt = " ".join(raw.split())
        if not stmt or stmt.startswith("OPENQASM") or stmt.startswith("include"):
            continue
        if stmt.startswith("qreg"):
            m = re.match(r"qreg\s+(\w+)\[(\d+)\]$", stmt)
            if not m or num_qubits is not None:
                raise ValueError(f"bad or repeated register declaration: {stmt!r}")
            reg, num_qubits = m.group(1), int(m.group(2))
            continue
        m = _STMT.match(stmt)
        if not m or m.group(1) not in _KIND:
            raise ValueError(f"unsupported statement: {stmt!r}")
        if num_qubits is None:
            raise ValueError("gate before qreg declaration")
        kind = _KIND[m.group(1)]
        angles = [_parse_angle(a) for a in m.group(2).split(",")] if m.group(2) else []
        if kind == "U3" and len(angles) == 3:
            angles = [angles[1], angles[0], angles[2]]
        qubits = []
        for ref in m.group(3).split(","):
            qm = _QREF.match(ref.strip())
            if not qm or qm.group(1) != reg:
                raise ValueError(f"bad qubit reference {ref!r}")
            qubits.append(int(qm.group(2)))
        gates.append(GateOp(kind, tuple(qubits), tuple(angles)))
    if num_qubits is None:
        raise ValueError("no qreg declaration")
    used = [a for g in gates for a in g.angles]
    n_params = 1 + max((a.value for a in used if a.kind == "variational"), default=-1)
    n_feats = 1 + max((a.value for a in used if a.kind == "encoding"), default=-1)
    return CircuitIR(num_qubits, tuple(gates), n_params, n_feats)
