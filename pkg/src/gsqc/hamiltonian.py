"""Sparse many-body Hamiltonians in the one-electron-per-qubit basis.

The basis is the product over qubits of the 2n sites of each column; a site
is ``2*row + dot``.  Qubits are ordered as in the circuit, first qubit most
significant.  Every term is local to one or two qubits, so it is built as a
small sparse matrix and then embedded by broadcasting over the remaining
qubits' site offsets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.io
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .circuit_model import (
    NOT,
    Boost,
    CircuitError,
    CircuitGraph,
    CnotLink,
    LinkSlot,
    Projection,
    QubitColumn,
    ScheduleBoost,
    Unitary,
    pad_first_transition,
    validate,
)

DEFAULT_MAX_DIM = 20_000_000
IDLE_DOT_PENALTY = 1.0


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class BasisIndexer:
    site_counts: tuple[int, ...]

    @classmethod
    def for_circuit(cls, circuit: CircuitGraph) -> "BasisIndexer":
        return cls(tuple(q.n_sites for q in circuit.qubits))

    @property
    def dimension(self) -> int:
        return math.prod(self.site_counts)

    @property
    def strides(self) -> np.ndarray:
        s = np.ones(len(self.site_counts), dtype=np.int64)
        for k in range(len(self.site_counts) - 2, -1, -1):
            s[k] = s[k + 1] * self.site_counts[k + 1]
        return s

    def encode(self, config) -> np.ndarray | int:
        return np.ravel_multi_index(tuple(np.asarray(config).T), self.site_counts)

    def decode(self, index) -> np.ndarray:
        return np.stack(np.unravel_index(index, self.site_counts), axis=-1)

    def offsets_excluding(self, qubits: tuple[int, ...]) -> np.ndarray:
        """Flat offsets of every configuration of the qubits not in ``qubits``."""
        strides = self.strides
        off = np.zeros(1, dtype=np.int64)
        for k, d in enumerate(self.site_counts):
            if k in qubits:
                continue
            off = (off[:, None] + np.arange(d, dtype=np.int64)[None, :] * strides[k]).ravel()
        return off


@dataclass(frozen=True)
class SparseHermitian:
    matrix: sp.csr_matrix
    is_real: bool

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, v):
        return matvec(self, v)


def matvec(H: SparseHermitian, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[0] != H.dim:
        raise ValueError(f"vector length {v.shape[0]} does not match dimension {H.dim}")
    return H.matrix @ v


# --------------------------------------------------------------------------
# single-column operators, all (2n x 2n)


def _row_proj(n: int, j: int) -> sp.coo_matrix:
    return sp.coo_matrix(([1.0, 1.0], ([2 * j, 2 * j + 1], [2 * j, 2 * j + 1])), shape=(2 * n, 2 * n))


def _dot_proj(n: int, j: int, gamma: int) -> sp.coo_matrix:
    s = 2 * j + gamma
    return sp.coo_matrix(([1.0], ([s], [s])), shape=(2 * n, 2 * n))


def _hop(n: int, j: int, M: np.ndarray) -> sp.coo_matrix:
    """C^dag_j M C_{j-1}."""
    M = np.asarray(M)
    r, c = np.nonzero(M)
    return sp.coo_matrix((M[r, c], (2 * j + r, 2 * (j - 1) + c)), shape=(2 * n, 2 * n))


def _kinetic(n: int, j: int, M: np.ndarray, w_prev: float, w_next: float, w_hop: float) -> sp.spmatrix:
    h = _hop(n, j, M)
    return w_prev * _row_proj(n, j - 1) + w_next * _row_proj(n, j) - w_hop * (h + h.conj().T)


def unitary_term(n: int, j: int, U: np.ndarray, eps: float = 1.0) -> sp.spmatrix:
    return eps * _kinetic(n, j, U, 1.0, 1.0, 1.0)


def boost_term(n: int, j: int, lam: float, eps: float = 1.0) -> sp.spmatrix:
    return eps * _kinetic(n, j, np.eye(2), 1.0, 1.0 / lam**2, 1.0 / lam)


def schedule_boost_term(n: int, j: int, inv_lam_prime: float, eps: float = 1.0) -> sp.spmatrix:
    return eps * _kinetic(n, j, np.eye(2), inv_lam_prime**2, 1.0, inv_lam_prime)


def projection_term(n: int, j: int, gamma: int, lam: float, eps: float = 1.0) -> sp.spmatrix:
    M = np.zeros((2, 2))
    M[gamma, gamma] = 1.0
    h = _hop(n, j, M)
    return eps * (
        _dot_proj(n, j - 1, gamma) + _dot_proj(n, j, gamma) / lam**2 - (h + h.T) / lam
    )


def boundary_term(q: QubitColumn) -> sp.spmatrix:
    n = q.n_rows
    h0 = q.boundary.matrix()
    out = sp.lil_matrix((2 * n, 2 * n), dtype=h0.dtype)
    out[0:2, 0:2] = h0
    return out.tocoo()


def cnot_term(n_c: int, jc: int, n_t: int, jt: int, eps: float = 1.0) -> sp.spmatrix:
    """h(CNOT) on the (control, target) pair space, control index major."""
    hI_c = unitary_term(n_c, jc, np.eye(2), eps)
    hI_t = unitary_term(n_t, jt, np.eye(2), eps)
    hN_t = unitary_term(n_t, jt, NOT, eps)
    return (
        eps * sp.kron(_row_proj(n_c, jc - 1), _row_proj(n_t, jt))
        + sp.kron(hI_c, _row_proj(n_t, jt - 1))
        + sp.kron(_dot_proj(n_c, jc, 0), hI_t)
        + sp.kron(_dot_proj(n_c, jc, 1), hN_t)
    )


def gate_term(q: QubitColumn, j: int, eps: float = 1.0, lam_override: float | None = None) -> sp.spmatrix:
    g = q.gate(j)
    n = q.n_rows
    if isinstance(g, Unitary):
        return unitary_term(n, j, g.matrix, eps)
    if isinstance(g, Boost):
        return boost_term(n, j, lam_override or g.lam, eps)
    if isinstance(g, Projection):
        return projection_term(n, j, g.gamma, lam_override or g.lam, eps)
    if isinstance(g, ScheduleBoost):
        return schedule_boost_term(n, j, g.inv_lam_prime, eps)
    raise CircuitError(f"transition {j} of {q.id} is a link slot, not a gate")


def touched_sites(q: QubitColumn) -> np.ndarray:
    """Mask of sites that appear in at least one term of this column."""
    mask = np.zeros(q.n_sites, dtype=bool)
    mask[0:2] = True
    for j, g in enumerate(q.gates, start=1):
        if isinstance(g, Projection):
            mask[2 * (j - 1) + g.gamma] = True
            mask[2 * j + g.gamma] = True
        else:
            mask[2 * (j - 1): 2 * j + 2] = True
    return mask


def idle_term(q: QubitColumn, eps: float = 1.0) -> sp.spmatrix | None:
    """On-site penalty for dots no term reaches (e.g. the unprojected dot
    on a projection's final row); without it they are spurious zero modes."""
    dead = np.flatnonzero(~touched_sites(q))
    if dead.size == 0:
        return None
    vals = np.full(dead.size, IDLE_DOT_PENALTY * eps)
    return sp.coo_matrix((vals, (dead, dead)), shape=(q.n_sites, q.n_sites))


# --------------------------------------------------------------------------
# assembly


def dimension(circuit: CircuitGraph, max_dim: int = DEFAULT_MAX_DIM) -> int:
    dim = circuit.dimension
    if dim > max_dim:
        raise DimensionError(f"Hilbert dimension {dim} exceeds limit {max_dim}")
    return dim


def _embed(local: sp.spmatrix, qubits: tuple[int, ...], indexer: BasisIndexer):
    """Triplets of ``local`` (acting on ``qubits`` in that order) in the full space."""
    local = sp.coo_matrix(local)
    local.sum_duplicates()
    keep = local.data != 0
    r, c, v = local.row[keep], local.col[keep], local.data[keep]
    dims = [indexer.site_counts[k] for k in qubits]
    strides = indexer.strides
    r_sites = np.unravel_index(r, dims)
    c_sites = np.unravel_index(c, dims)
    r_off = sum(s * strides[k] for s, k in zip(r_sites, qubits))
    c_off = sum(s * strides[k] for s, k in zip(c_sites, qubits))
    others = indexer.offsets_excluding(qubits)
    rows = (others[:, None] + r_off[None, :]).ravel()
    cols = (others[:, None] + c_off[None, :]).ravel()
    vals = np.broadcast_to(v, (others.size, v.size)).ravel()
    return rows, cols, vals


def term_matrix(
    circuit: CircuitGraph,
    item,
    indexer: BasisIndexer | None = None,
    eps: float | None = None,
) -> SparseHermitian:
    """One term embedded in the full space.

    ``item`` is ``(qubit_id, transition)`` for a gate, ``("boundary", qubit_id)``,
    or a CnotLink.
    """
    indexer = indexer or BasisIndexer.for_circuit(circuit)
    eps = circuit.eps if eps is None else eps
    qubits, local = _local_term(circuit, item, eps)
    rows, cols, vals = _embed(local, qubits, indexer)
    m = sp.coo_matrix((vals, (rows, cols)), shape=(indexer.dimension,) * 2).tocsr()
    return SparseHermitian(m, not np.iscomplexobj(m.data))


def _local_term(circuit: CircuitGraph, item, eps: float):
    if isinstance(item, CnotLink):
        c, t = circuit.qubit(item.control), circuit.qubit(item.target)
        local = cnot_term(c.n_rows, item.control_row, t.n_rows, item.target_row, eps)
        return (circuit.index(c.id), circuit.index(t.id)), local
    if item[0] == "boundary":
        q = circuit.qubit(item[1])
        return (circuit.index(q.id),), boundary_term(q)
    qid, j = item
    q = circuit.qubit(qid)
    return (circuit.index(qid),), gate_term(q, j, eps)


def assemble(
    circuit: CircuitGraph,
    eps: float | None = None,
    overrides: Mapping[str, float] | None = None,
    max_dim: int = DEFAULT_MAX_DIM,
    check: bool = True,
) -> SparseHermitian:
    """Sum of every term of the circuit as a CSR matrix.

    ``overrides`` maps qubit ids to a replacement lambda for that qubit's
    terminal boost or projection.
    """
    if check:
        validate(circuit).raise_if_invalid()
    eps = circuit.eps if eps is None else eps
    overrides = dict(overrides or {})
    for qid, lam in overrides.items():
        try:
            q = circuit.qubit(qid)
        except KeyError:
            raise CircuitError(f"override names unknown qubit {qid!r}") from None
        if q.terminal == "continues":
            raise CircuitError(f"override target {qid!r} has no boost/projection terminal")
        if not lam >= 1:
            raise CircuitError(f"override lambda for {qid!r} must be >= 1")
    indexer = BasisIndexer.for_circuit(circuit)
    dim = dimension(circuit, max_dim)

    pieces = []
    for k, q in enumerate(circuit.qubits):
        local = boundary_term(q)
        for j, g in enumerate(q.gates, start=1):
            if isinstance(g, LinkSlot):
                continue
            lam = overrides.get(q.id) if j == q.n_rows - 1 else None
            local = local + gate_term(q, j, eps, lam)
        idle = idle_term(q, eps)
        if idle is not None:
            local = local + idle
        pieces.append(_embed(local, (k,), indexer))
    for lk in circuit.links:
        qubits, local = _local_term(circuit, lk, eps)
        pieces.append(_embed(local, qubits, indexer))

    rows = np.concatenate([p[0] for p in pieces])
    cols = np.concatenate([p[1] for p in pieces])
    vals = np.concatenate([p[2] for p in pieces])
    is_real = not np.iscomplexobj(vals) or not np.any(vals.imag)
    if is_real:
        vals = np.real(vals)
    m = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
    m.sum_duplicates()
    m.eliminate_zeros()
    return SparseHermitian(m, bool(is_real))


@dataclass(frozen=True)
class Sector:
    """Basis states connected by the circuit's hoppings to the all-row-0 states.

    Every term conserves these connected blocks, and the preparation starts
    with every electron on row 0, so the physical ground state lives in this
    block.  Blocks not reachable from row 0 (e.g. a control parked past two
    links to the same target while the target has not reached the first)
    carry zero modes of their own.
    """

    indices: np.ndarray
    full_dim: int

    @property
    def dim(self) -> int:
        return int(self.indices.size)

    @property
    def is_full(self) -> bool:
        return self.dim == self.full_dim

    def restrict(self, H: SparseHermitian) -> SparseHermitian:
        if self.is_full:
            return H
        m = H.matrix[self.indices][:, self.indices].tocsr()
        return SparseHermitian(m, H.is_real)

    def embed(self, v: np.ndarray) -> np.ndarray:
        if self.is_full:
            return np.asarray(v)
        out = np.zeros(self.full_dim, dtype=np.asarray(v).dtype)
        out[self.indices] = v
        return out

    def weight_outside(self, v: np.ndarray) -> float:
        v = np.asarray(v)
        inside = float(np.linalg.norm(v[self.indices]) ** 2)
        return max(0.0, float(np.linalg.norm(v) ** 2) - inside)

    def project(self, v: np.ndarray) -> np.ndarray:
        return self.embed(np.asarray(v)[self.indices])


def _structural(circuit: CircuitGraph) -> CircuitGraph:
    """Same hopping pattern with every schedule boost switched fully on."""
    qubits = []
    for q in circuit.qubits:
        gates = tuple(ScheduleBoost(1.0) if isinstance(g, ScheduleBoost) else g for g in q.gates)
        qubits.append(QubitColumn(q.id, q.n_rows, q.boundary, gates))
    return CircuitGraph(tuple(qubits), circuit.links, circuit.eps)


def reachable_sector(circuit: CircuitGraph, max_dim: int = DEFAULT_MAX_DIM, H: SparseHermitian | None = None) -> Sector:
    if H is None or any(isinstance(g, ScheduleBoost) for q in circuit.qubits for g in q.gates):
        H = assemble(_structural(circuit), max_dim=max_dim, check=False)
    indexer = BasisIndexer.for_circuit(circuit)
    pattern = H.matrix.copy()
    pattern.data = np.ones(pattern.nnz)
    _, labels = connected_components(pattern, directed=False)
    seeds = indexer.encode(np.array(list(np.ndindex(*(2,) * len(circuit.qubits)))))
    keep = np.isin(labels, np.unique(labels[np.atleast_1d(seeds)]))
    return Sector(np.flatnonzero(keep), indexer.dimension)


def scheduled_circuit(circuit: CircuitGraph, inv_lambda_prime: float, inv_lambda_scale: float) -> CircuitGraph:
    """The circuit used at one point of the adiabatic preparation schedule.

    The first transition of every qubit becomes h'(B, lambda') and every
    terminal boost/projection gets lambda = 1/inv_lambda_scale.
    """
    if not 0.0 <= inv_lambda_prime <= 1.0:
        raise ValueError(f"1/lambda' must lie in [0, 1], got {inv_lambda_prime}")
    if not 0.0 < inv_lambda_scale <= 1.0:
        raise ValueError(f"1/lambda must lie in (0, 1], got {inv_lambda_scale}")
    lam = 1.0 / inv_lambda_scale
    padded = pad_first_transition(circuit)
    qubits = []
    for q in padded.qubits:
        gates = list(q.gates)
        gates[0] = ScheduleBoost(inv_lambda_prime)
        for j, g in enumerate(gates):
            if isinstance(g, Boost):
                gates[j] = Boost(lam)
            elif isinstance(g, Projection):
                gates[j] = Projection(g.gamma, lam)
        qubits.append(QubitColumn(q.id, q.n_rows, q.boundary, tuple(gates)))
    return CircuitGraph(tuple(qubits), padded.links, padded.eps)


def assemble_scheduled(circuit: CircuitGraph, inv_lambda_prime: float, inv_lambda_scale: float, **kw) -> SparseHermitian:
    return assemble(scheduled_circuit(circuit, inv_lambda_prime, inv_lambda_scale), **kw)


def dump_matrix(H: SparseHermitian, path) -> None:
    """Coordinate text dump (1-based, MatrixMarket header carries the dimension)."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(H.matrix), precision=17)
