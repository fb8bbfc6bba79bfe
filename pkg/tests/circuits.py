"""Shared test circuits covering every gate type."""

import math

import numpy as np

from gsqc.circuit_model import (
    I_GATE,
    H_GATE,
    N_GATE,
    R_GATE,
    Boost,
    BoundarySpec,
    CircuitBuilder,
    CircuitGraph,
    Projection,
    Unitary,
    boost_qubit,
    chain_filters,
    cnot_pair,
    filter_circuit,
    filter_eq0,
    filter_eq1,
    filter_exact_cover,
    filter_sum1,
    new_qubit,
    projection_qubit,
    six_row_qubit,
    teleport_box,
)
from gsqc.hamiltonian import scheduled_circuit
from gsqc.sat_frontend import parse_instance


def identity_pair_qubit():
    return CircuitGraph((new_qubit("q", 2, BoundarySpec.plus(), [I_GATE]),))


def gate_zoo():
    """H, N, both rotations and a complex phase on one boosted qubit."""
    phase = Unitary(np.diag([1.0, np.exp(1j * math.pi / 3)]), "S3")
    gates = [H_GATE, N_GATE, R_GATE(+1), phase, R_GATE(-1), Boost(6.0)]
    return CircuitGraph((new_qubit("q", len(gates) + 1, BoundarySpec.zero(), gates),))


def pentagon():
    """Margolus sequence onto a fresh ancilla, controls in |+>."""
    b = CircuitBuilder()
    b.add_qubit("j")
    b.add_qubit("k")
    b.add_qubit("a", BoundarySpec.zero())
    b.gate("a", R_GATE(+1)).cnot("k", "a").gate("a", R_GATE(+1)).cnot("j", "a")
    b.gate("a", R_GATE(-1)).cnot("k", "a").gate("a", R_GATE(-1))
    for q in ("j", "k", "a"):
        b.gate(q, Boost(3.0))
    return b.build()


def single_teleport():
    b = CircuitBuilder()
    b.add_qubit("d", BoundarySpec.from_state(0.6, 0.8))
    out = teleport_box(b, "d", 3.0, "d~t1")
    b.gate(out, Boost(3.0))
    return b.build()


def ghz_teleport(lam=3.0):
    """q1 -> q2 CNOT, q2 teleported, its copy then drives q3: GHZ on (q1, copy, q3)."""
    b = CircuitBuilder()
    b.add_qubit("q1", BoundarySpec.plus())
    b.add_qubit("q2", BoundarySpec.zero())
    b.add_qubit("q3", BoundarySpec.zero())
    b.cnot("q1", "q2")
    out = teleport_box(b, "q2", lam, "q2~t1")
    b.cnot(out, "q3")
    for q in ("q1", out, "q3"):
        b.gate(q, Boost(lam))
    return b.build(), ("q1", out, "q3")


def library() -> dict:
    sum1 = filter_circuit(filter_sum1("z1", "z2", 4.0))
    return {
        "identity_pair": identity_pair_qubit(),
        "boost_qubit": boost_qubit(10.0),
        "projection_qubit": projection_qubit(10.0),
        "fig2_alpha0": six_row_qubit(0.0, 10.0),
        "fig2_alpha09": six_row_qubit(0.9, 30.0),
        "gate_zoo": gate_zoo(),
        "cnot_pair": cnot_pair(10.0),
        "eq0": filter_circuit(filter_eq0("z1", 4.0)),
        "eq1": filter_circuit(filter_eq1("z1", 4.0)),
        "sum1": sum1,
        "pentagon": pentagon(),
        "single_teleport": single_teleport(),
        "scheduled_sum1": scheduled_circuit(sum1, 0.5, 0.5),
        "chain_sum1_eq0": chain_filters(parse_instance("2 2\nsum1 1 2\neq0 1\n"), lam=4.0),
        "exact_cover_box": filter_circuit(filter_exact_cover("z1", "z2", "z3", 2.0)),
    }
