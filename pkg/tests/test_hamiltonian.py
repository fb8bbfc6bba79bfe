import numpy as np
import pytest
import scipy.io
from hypothesis import given
from hypothesis import strategies as st

from gsqc.circuit_model import CircuitError, CnotLink, six_row_qubit
from gsqc.hamiltonian import (
    BasisIndexer,
    DimensionError,
    assemble,
    assemble_scheduled,
    boost_term,
    cnot_term,
    dump_matrix,
    reachable_sector,
    scheduled_circuit,
    term_matrix,
    unitary_term,
)
from gsqc.solver import history_state

from circuits import library

LIB = library()
NAMES = sorted(n for n in LIB if LIB[n].dimension <= 5000)


@given(st.lists(st.integers(1, 6), min_size=1, max_size=4), st.data())
def test_indexer_bijection(counts, data):
    idx = BasisIndexer(tuple(2 * c for c in counts))
    k = data.draw(st.integers(0, idx.dimension - 1))
    cfg = idx.decode(k)
    assert int(idx.encode(cfg)) == k
    # first qubit most significant
    assert idx.strides[-1] == 1


def test_dimension_guard():
    with pytest.raises(DimensionError):
        assemble(LIB["sum1"], max_dim=100)


@pytest.mark.parametrize("name", NAMES)
def test_hermitian_and_psd(name):
    H = assemble(LIB[name]).toarray()
    assert np.allclose(H, H.conj().T, atol=1e-14)
    assert np.linalg.eigvalsh(H)[0] > -1e-9


def test_unitary_term_matches_hand_built():
    U = np.array([[0, 1], [1, 0]])
    h = unitary_term(2, 1, U).toarray()
    want = np.zeros((4, 4))
    want[:2, :2] = np.eye(2)
    want[2:, 2:] = np.eye(2)
    want[2:, :2] = -U
    want[:2, 2:] = -U.T
    assert np.allclose(h, want)


def test_boost_term_zero_mode_amplifies():
    lam = 7.0
    h = boost_term(2, 1, lam).toarray()
    v = np.array([1.0, 0.0, lam, 0.0])
    assert np.linalg.norm(h @ v) < 1e-12


def test_cnot_term_annihilates_cnot_history():
    # control and target each have two rows, CNOT on transition 1; the target
    # may only advance once the control has
    h = cnot_term(2, 1, 2, 1).toarray()
    for c in (0, 1):
        for t in (0, 1):
            v = np.zeros(16)
            site = lambda row, dot: 2 * row + dot  # noqa: E731
            v[site(0, c) * 4 + site(0, t)] = 1
            v[site(1, c) * 4 + site(0, t)] = 1
            v[site(1, c) * 4 + site(1, t ^ c)] = 1
            assert np.linalg.norm(h @ v) < 1e-12


@pytest.mark.parametrize("name", NAMES)
def test_every_term_annihilates_history_state(name):
    c = LIB[name]
    psi = history_state(c)
    idx = BasisIndexer.for_circuit(c)
    items = [("boundary", q.id) for q in c.qubits]
    items += [(q.id, j) for q in c.qubits for j, g in enumerate(q.gates, start=1) if type(g).__name__ != "LinkSlot"]
    items += list(c.links)
    for it in items:
        assert np.linalg.norm(term_matrix(c, it, idx) @ psi) < 1e-10, it


@pytest.mark.parametrize("name", ["cnot_pair", "sum1", "pentagon"])
def test_hopping_moves_one_electron_one_row(name):
    c = LIB[name]
    H = assemble(c).matrix.tocoo()
    idx = BasisIndexer.for_circuit(c)
    off = H.row != H.col
    a, b = idx.decode(H.row[off]) // 2, idx.decode(H.col[off]) // 2
    moved = np.abs(a - b)
    assert moved.max() <= 1
    # a CNOT hop moves at most the target's electron once the control sits still
    assert (moved.sum(axis=1) <= 1).all()


def test_scheduled_endpoints():
    c = LIB["sum1"]
    full = assemble(scheduled_circuit(c, 1.0, 1.0)).toarray()
    off = assemble(scheduled_circuit(c, 0.0, 1.0)).toarray()
    assert np.allclose(full, full.T)
    assert not np.allclose(full, off)
    assert np.allclose(assemble_scheduled(c, 1.0, 0.5).toarray(), assemble(scheduled_circuit(c, 1.0, 0.5)).toarray())
    with pytest.raises(ValueError):
        scheduled_circuit(c, 1.5, 1.0)
    with pytest.raises(ValueError):
        scheduled_circuit(c, 0.5, 0.0)


def test_schedule_off_pins_electrons_to_row_zero():
    c = LIB["eq0"]
    sc = scheduled_circuit(c, 1e-6, 1.0)
    H = assemble(sc)
    w, v = np.linalg.eigh(H.toarray())
    sector = reachable_sector(sc)
    ground = v[:, np.argmin(w + 1e3 * ~np.isin(np.arange(H.dim), sector.indices))]
    idx = BasisIndexer.for_circuit(sc)
    rows = idx.decode(np.arange(H.dim)) // 2
    weight0 = np.sum(np.abs(ground[(rows == 0).all(axis=1)]) ** 2)
    assert weight0 > 1 - 1e-6


def test_overrides():
    c = LIB["boost_qubit"]
    a = assemble(c, overrides={"q": 3.0}).toarray()
    from gsqc.circuit_model import boost_qubit
    assert np.allclose(a, assemble(boost_qubit(3.0)).toarray())
    with pytest.raises(CircuitError):
        assemble(c, overrides={"nope": 3.0})
    with pytest.raises(CircuitError):
        assemble(c, overrides={"q": 0.5})


def test_eps_scales_linearly():
    c = six_row_qubit(0.5, 5.0)
    h1 = assemble(c, eps=1.0).toarray()
    h2 = assemble(c, eps=2.0).toarray()
    b = assemble(c, eps=0.0).toarray()  # boundary only
    assert np.allclose(h2 - b, 2 * (h1 - b))


def test_invalid_circuit_refused():
    c = LIB["cnot_pair"]
    bad = type(c)(c.qubits, (CnotLink("c", 1, "t", 1),))
    with pytest.raises(CircuitError):
        assemble(bad)


def test_dump_matrix_round_trip(tmp_path):
    H = assemble(LIB["gate_zoo"])
    p = tmp_path / "h.mtx"
    dump_matrix(H, p)
    back = scipy.io.mmread(str(p)).toarray()
    assert np.allclose(back, H.toarray(), atol=1e-15)


def test_sector_contains_history_support():
    for name in ("sum1", "cnot_pair", "chain_sum1_eq0"):
        c = LIB[name]
        s = reachable_sector(c)
        assert s.weight_outside(history_state(c)) < 1e-12
    # the Margolus box has an unreachable pocket the unrestricted history state touches
    s = reachable_sector(LIB["pentagon"])
    assert s.dim < s.full_dim
