import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gsqc.circuit_model import (
    I_GATE,
    MAX_TELEPORTED_LENGTH,
    NOT,
    R_GATE,
    Boost,
    BoundarySpec,
    CircuitBuilder,
    CircuitError,
    CircuitGraph,
    CnotLink,
    FilterBox,
    LINK,
    Projection,
    QubitColumn,
    Unitary,
    chain_filters,
    circuit_from_dict,
    circuit_to_dict,
    compact_rows,
    dump_circuit,
    filter_circuit,
    filter_exact_cover,
    insert_teleportation,
    load_circuit,
    new_qubit,
    six_row_qubit,
    validate,
)
from gsqc.sat_frontend import ExactCoverInstance, parse_instance

from circuits import library


def test_six_row_qubit_dimension():
    c = six_row_qubit(0.0, 10.0)
    assert c.dimension == 12
    assert validate(c).ok


def test_library_is_valid_and_spans_gate_types():
    kinds = set()
    for name, c in library().items():
        rep = validate(c)
        assert rep.ok, (name, rep.violations)
        for q in c.qubits:
            kinds.update(type(g).__name__ for g in q.gates)
    assert {"Unitary", "Boost", "Projection", "LinkSlot", "ScheduleBoost"} <= kinds
    assert len(library()) >= 12


def test_unitary_rejects_non_unitary():
    with pytest.raises(CircuitError):
        Unitary(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_boundary_axis_checks():
    with pytest.raises(CircuitError):
        BoundarySpec(10.0, (1.0, 1.0, 0.0))
    with pytest.raises(CircuitError):
        BoundarySpec(0.0, (1.0, 0.0, 0.0))


@given(st.floats(-math.pi, math.pi), st.floats(0, 2 * math.pi))
def test_boundary_zero_mode_is_requested_state(theta, phi):
    a, b = math.cos(theta), math.sin(theta) * complex(math.cos(phi), math.sin(phi))
    spec = BoundarySpec.from_state(a, b)
    v = np.array([a, b]) / np.linalg.norm([a, b])
    assert np.linalg.norm(spec.matrix() @ v) < 1e-9
    assert abs(abs(np.vdot(spec.ground_vector(), v)) - 1) < 1e-9


def test_cnot_needs_two_qubits():
    b = CircuitBuilder()
    b.add_qubit("a")
    with pytest.raises(CircuitError):
        b.cnot("a", "a")


def test_duplicate_qubit_rejected():
    b = CircuitBuilder()
    b.add_qubit("a")
    with pytest.raises(CircuitError):
        b.add_qubit("a")


def test_validate_reports_bad_rows_and_orphans():
    q1 = new_qubit("a", 3, BoundarySpec.plus(), [LINK, I_GATE])
    q2 = new_qubit("b", 3, BoundarySpec.zero(), [I_GATE, LINK])
    bad = CircuitGraph((q1, q2), (CnotLink("a", 1, "b", 5),))
    rep = validate(bad)
    assert not rep.ok
    assert any("out of range" in v for v in rep.violations)
    assert any("no link" in v for v in rep.violations)
    with pytest.raises(CircuitError):
        rep.raise_if_invalid()


def test_validate_detects_cycles():
    # a controls b early, b controls a early, each target row sits after the
    # other control row: no consistent time order
    qa = new_qubit("a", 3, BoundarySpec.plus(), [LINK, LINK])
    qb = new_qubit("b", 3, BoundarySpec.plus(), [LINK, LINK])
    links = (CnotLink("a", 1, "b", 2), CnotLink("b", 1, "a", 2))
    rep = validate(CircuitGraph((qa, qb), links))
    assert not rep.acyclic
    assert not rep.ok


def test_validate_dimension_limit():
    rep = validate(library()["sum1"], max_dim=10)
    assert any("exceeds" in v for v in rep.violations)


def test_filter_arity_errors():
    with pytest.raises(CircuitError):
        FilterBox("sum1", ("z1",), ("a",), 4.0)
    with pytest.raises(CircuitError):
        FilterBox("nope", ("z1",), ("a",), 4.0)
    with pytest.raises(CircuitError):
        FilterBox("exact_cover", ("z1", "z1", "z2"), ("a1", "a2"), 4.0)
    with pytest.raises(CircuitError):
        FilterBox("eq0", ("z1",), ("a",), 0.5)


def test_exact_cover_box_layout():
    c = filter_circuit(filter_exact_cover("z1", "z2", "z3", 2.0))
    assert len(c.qubits) == 5
    # three data columns, one parity ancilla, one Margolus ancilla
    assert sorted(q.n_rows for q in c.qubits) == [3, 4, 5, 5, 9]
    assert c.dimension == 86400 == 6 * 8 * 10 * 10 * 18
    projs = [g for q in c.qubits for g in q.gates if isinstance(g, Projection)]
    assert sorted(p.gamma for p in projs) == [0, 1]


def _margolus_unitary():
    """State-vector oracle for the ancilla-2 gate sequence on (j, k, a)."""
    def on_a(u):
        return np.kron(np.eye(4), u)

    def cx(ctrl):
        m = np.zeros((8, 8))
        for j, k, a in itertools.product((0, 1), repeat=3):
            bit = (j, k)[ctrl]
            m[4 * j + 2 * k + (a ^ bit), 4 * j + 2 * k + a] = 1
        return m

    r_p, r_m = R_GATE(+1).matrix, R_GATE(-1).matrix
    seq = [on_a(r_p), cx(1), on_a(r_p), cx(0), on_a(r_m), cx(1), on_a(r_m)]
    u = np.eye(8)
    for g in seq:
        u = g @ u
    return u


def test_margolus_sequence_is_toffoli_up_to_phase():
    u = _margolus_unitary()
    for j, k in itertools.product((0, 1), repeat=2):
        out = u[:, 4 * j + 2 * k]
        want = 4 * j + 2 * k + (j & k)
        assert abs(abs(out[want]) - 1) < 1e-12


def test_chain_filters_counts():
    inst = parse_instance("4 2\nec 1 2 3\nec 2 3 4\n")
    c = chain_filters(inst)
    assert len(c.qubits) == 4 + 4
    assert validate(c).ok
    inst1 = parse_instance("3 1\nec 1 2 3\n")
    assert len(chain_filters(inst1).qubits) == 5


def test_chain_filters_without_clauses_is_boosted_data():
    c = chain_filters(ExactCoverInstance(3, ()))
    assert len(c.qubits) == 3
    assert all(q.terminal == "boost-ended" for q in c.qubits)


def test_chain_filters_bad_order():
    inst = parse_instance("3 1\nec 1 2 3\n")
    with pytest.raises(CircuitError):
        chain_filters(inst, order=[1])
    with pytest.raises(CircuitError):
        chain_filters(inst, mode="weird")


def test_teleport_adds_boxes_for_continuing_data():
    box = filter_exact_cover("z1", "z2", "z3", 2.0)
    compact = filter_circuit(box, data_terminal="continues")
    tele = insert_teleportation(compact, 2.0)
    # six CNOT slots on the data columns, two spare on each ancilla
    assert len(tele.qubits) == len(compact.qubits) + 2 * 10
    assert len(tele.links) == len(compact.links) + 2 * 10
    assert validate(tele).ok
    assert max(q.n_rows for q in tele.qubits) <= MAX_TELEPORTED_LENGTH
    ended = insert_teleportation(filter_circuit(box), 2.0)
    assert len(ended.qubits) == len(compact.qubits) + 2 * 7


def test_teleport_leaves_single_control_qubits_alone():
    c = library()["cnot_pair"]
    assert insert_teleportation(c) == c


def test_teleport_splits_chained_controls():
    b = CircuitBuilder()
    for q in "cxy":
        b.add_qubit(q, BoundarySpec.plus() if q == "c" else BoundarySpec.zero())
    b.cnot("c", "x").cnot("c", "y")
    for q in "cxy":
        b.gate(q, Boost(3.0))
    c = b.build()
    t = insert_teleportation(c, 3.0)
    assert len(t.qubits) == len(c.qubits) + 2
    assert validate(t).ok


@given(st.lists(st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4)), min_size=1, max_size=3))
def test_teleported_columns_are_short(triples):
    triples = [t for t in triples if len(set(t)) == 3]
    if not triples:
        return
    inst = ExactCoverInstance.exact_cover(4, triples)
    c = chain_filters(inst, lam=2.0, mode="teleport")
    assert validate(c).ok
    assert max(q.n_rows for q in c.qubits) <= MAX_TELEPORTED_LENGTH


def test_compact_rows_collapses_identity_runs():
    q = new_qubit("q", 7, BoundarySpec.plus(), [I_GATE, I_GATE, I_GATE, Unitary(NOT, "N"), I_GATE, Boost(2.0)])
    c = compact_rows(CircuitGraph((q,)))
    assert c.qubits[0].n_rows == 5
    pair = library()["cnot_pair"]
    small = compact_rows(pair)
    assert validate(small).ok
    assert small.dimension < pair.dimension


@pytest.mark.parametrize("name", sorted(library()))
def test_json_round_trip(name, tmp_path):
    c = library()[name]
    assert circuit_from_dict(circuit_to_dict(c)) == c
    p = tmp_path / "c.json"
    dump_circuit(c, p)
    assert load_circuit(p) == c


def test_json_unknown_gate():
    with pytest.raises(CircuitError):
        circuit_from_dict({"qubits": [{"id": "q", "gates": [{"type": "toffoli"}]}]})


def test_qubit_column_row_count_must_match():
    with pytest.raises(CircuitError):
        QubitColumn("q", 4, BoundarySpec.plus(), (I_GATE,))
