"""Ground states, gaps, history states and final-row readout."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .circuit_model import (
    NOT,
    Boost,
    CircuitError,
    CircuitGraph,
    Projection,
    ScheduleBoost,
    Unitary,
    event_order,
)
from .hamiltonian import Sector, SparseHermitian, assemble, assemble_scheduled, matvec, reachable_sector, scheduled_circuit

DENSE_LIMIT = 4096
DEGENERACY_TOL = 1e-12
RESIDUAL_TOL = 1e-10
NO_READOUT = 1e-12
SHIFT = 1e-9
MAX_BLOCK = 32


class SolverError(RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


@dataclass
class GroundStateResult:
    e0: float
    e1: float
    vector: np.ndarray
    residuals: tuple[float, ...]
    degeneracy: int = 1
    iterations: int = 0
    method: str = "dense"
    sector_dim: int | None = None

    @property
    def gap(self) -> float:
        return self.e1 - self.e0


def dense_spectrum(H: SparseHermitian | np.ndarray) -> np.ndarray:
    """All eigenvalues by direct diagonalization (oracle path)."""
    m = H.toarray() if isinstance(H, SparseHermitian) else np.asarray(H)
    if m.shape[0] > DENSE_LIMIT:
        raise ValueError(f"dimension {m.shape[0]} exceeds dense limit {DENSE_LIMIT}")
    return np.linalg.eigvalsh(m)


def _cluster(evals: np.ndarray, tol: float) -> tuple[int, float]:
    """Size of the lowest cluster and the first level above it (nan if none)."""
    above = np.flatnonzero(evals - evals[0] >= tol)
    if above.size == 0:
        return len(evals), math.nan
    return int(above[0]), float(evals[above[0]])


def _finish(H, evals, evecs, method, iterations, tol, degeneracy_tol):
    deg, e1 = _cluster(evals, degeneracy_tol)
    psi = evecs[:, 0]
    psi = psi / np.linalg.norm(psi)
    # deterministic global phase: largest component real positive
    k = int(np.argmax(np.abs(psi)))
    psi = psi * (abs(psi[k]) / psi[k])
    if not np.iscomplexobj(H.matrix.data):
        psi = psi.real
    res = tuple(
        float(np.linalg.norm(matvec(H, evecs[:, i]) - evals[i] * evecs[:, i]))
        for i in range(min(evecs.shape[1], deg + 1))
    )
    if max(res) > tol:
        raise SolverError(f"{method} residual {max(res):.2e} above tolerance {tol:.1e}", res)
    return GroundStateResult(float(evals[0]), e1, psi, res, deg, iterations, method)


def lowest_two(
    H: SparseHermitian,
    tol: float = RESIDUAL_TOL,
    max_iter: int | None = None,
    seed: int = 0,
    degeneracy_tol: float = DEGENERACY_TOL,
    dense_limit: int = DENSE_LIMIT,
    k: int = 4,
    shift: float = SHIFT,
) -> GroundStateResult:
    """Ground state and the first level above the ground cluster.

    Dense diagonalization up to ``dense_limit``.  Beyond that, implicitly
    restarted Lanczos (ARPACK) on (H + shift*I)^-1, applied through one
    sparse LU factorization.  H is PSD with E0 = 0 for every valid circuit,
    so a small positive shift keeps the factorization nonsingular while the
    bottom of the spectrum becomes the well separated top of the inverse.
    The block doubles while every returned level sits in one cluster.
    """
    n = H.dim
    if n <= dense_limit:
        evals, evecs = np.linalg.eigh(H.toarray())
        return _finish(H, evals, evecs, "dense", 0, tol, degeneracy_tol)

    A = H.matrix.tocsc()
    scale = float(abs(A).sum(axis=1).max()) or 1.0
    delta = shift * scale
    try:
        lu = spla.splu(A + delta * sp.identity(n, dtype=A.dtype, format="csc"))
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from exc
    counter = {"n": 0}

    def solve(v):
        counter["n"] += 1
        return lu.solve(v)

    op = spla.LinearOperator(A.shape, matvec=solve, dtype=A.dtype)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    if np.iscomplexobj(A.data):
        v0 = v0 + 1j * rng.standard_normal(n)
    max_iter = max_iter or max(1000, n // 10)
    k = min(k, n - 2)
    while True:
        try:
            w, vecs = spla.eigsh(op, k=k, which="LA", v0=v0, tol=1e-14, maxiter=max_iter, ncv=min(n - 1, max(2 * k + 1, 20)))
        except spla.ArpackNoConvergence as exc:
            raise SolverError(f"Lanczos did not converge in {max_iter} restarts") from exc
        evals = 1.0 / w - delta
        order = np.argsort(evals)
        evals, vecs = evals[order], vecs[:, order]
        deg, _ = _cluster(evals, degeneracy_tol)
        if deg < k or k >= MAX_BLOCK:
            break
        k = min(2 * k, MAX_BLOCK)
    return _refine(H, vecs, counter["n"], tol, degeneracy_tol)


def _refine(H, vecs, iterations, tol, degeneracy_tol):
    """Rayleigh-Ritz on the returned block to clean up the Ritz values."""
    q, _ = np.linalg.qr(vecs)
    HQ = np.column_stack([matvec(H, q[:, i]) for i in range(q.shape[1])])
    small = q.conj().T @ HQ
    small = (small + small.conj().T) / 2
    w, y = np.linalg.eigh(small)
    return _finish(H, w, q @ y, "shift-invert", iterations, tol, degeneracy_tol)


def solve_in_sector(H: SparseHermitian, sector: Sector | None, **kw) -> GroundStateResult:
    """lowest_two on the block of ``sector``; the vector comes back in the full basis."""
    if sector is None:
        r = lowest_two(H, **kw)
        r.sector_dim = H.dim
        return r
    r = lowest_two(sector.restrict(H), **kw)
    r.vector = sector.embed(r.vector)
    r.sector_dim = sector.dim
    return r


def solve_circuit(circuit: CircuitGraph, sector: bool = True, max_dim: int | None = None, **kw) -> GroundStateResult:
    """Assemble and solve; by default only the block reachable from row 0."""
    akw = {} if max_dim is None else {"max_dim": max_dim}
    H = assemble(circuit, **akw)
    sec = reachable_sector(circuit, H=H, **akw) if sector else None
    return solve_in_sector(H, sec, **kw)


# --------------------------------------------------------------------------
# analytic zero-energy state


def _gate_matrix(g) -> np.ndarray:
    if isinstance(g, Unitary):
        return g.matrix
    if isinstance(g, Boost):
        return g.lam * np.eye(2)
    if isinstance(g, Projection):
        m = np.zeros((2, 2))
        m[g.gamma, g.gamma] = g.lam
        return m
    if isinstance(g, ScheduleBoost):
        # zero mode of h'(B, lambda') has psi_1 = psi_0 / lambda'
        return g.inv_lam_prime * np.eye(2)
    raise CircuitError(f"unsupported gate {g!r}")


def _row(j: int) -> slice:
    return slice(2 * j, 2 * j + 2)


def _take(psi, axis, idx):
    sl = [slice(None)] * psi.ndim
    sl[axis] = idx
    return tuple(sl)


def history_state(circuit: CircuitGraph, normalize: bool = True, sector: Sector | None = None) -> np.ndarray:
    """Zero-energy state built by applying the gate factors in causal order.

    Starts from the boundary states on row 0 of every qubit.  A single-qubit
    factor copies amplitude from row j-1 to row j through its 2x2 matrix.  A
    CNOT factor first moves the control down one row for every position of
    the target, then moves the target down (through I or N depending on the
    control's dot) wherever the target sits on its row before the link.
    With ``sector`` the result is cut down to that block.
    """
    shape = tuple(q.n_sites for q in circuit.qubits)
    dtype = complex if any(np.iscomplexobj(q.boundary.ground_vector()) or (isinstance(g, Unitary) and not g.is_real)
                           for q in circuit.qubits for g in q.gates) else float
    psi = np.zeros(shape, dtype=dtype)
    init = np.ones(1, dtype=dtype)
    for q in circuit.qubits:
        v = np.zeros(q.n_sites, dtype=dtype)
        v[0:2] = q.boundary.ground_vector()
        init = np.multiply.outer(init, v)
    psi[...] = init.reshape(shape)
    axes = {qid: k for k, qid in enumerate(circuit.ids)}

    for ev in event_order(circuit):
        if ev[0] == "gate":
            _, qid, j = ev
            ax = axes[qid]
            M = _gate_matrix(circuit.qubit(qid).gate(j))
            src = np.moveaxis(psi[_take(psi, ax, _row(j - 1))], ax, -1)
            psi[_take(psi, ax, _row(j))] = np.moveaxis(src @ M.T, -1, ax)
        else:
            lk = circuit.links[ev[1]]
            ac, at = axes[lk.control], axes[lk.target]
            jc, jt = lk.control_row, lk.target_row
            psi[_take(psi, ac, _row(jc))] = psi[_take(psi, ac, _row(jc - 1))]
            for dot, M in ((0, np.eye(2)), (1, NOT)):
                sl = [slice(None)] * psi.ndim
                sl[ac] = 2 * jc + dot
                sub = psi[tuple(sl)]  # control axis dropped
                at_sub = at if at < ac else at - 1
                src = np.moveaxis(sub[_take(sub, at_sub, _row(jt - 1))], at_sub, -1)
                sub[_take(sub, at_sub, _row(jt))] = np.moveaxis(src @ M.T, -1, at_sub)
    vec = psi.reshape(-1)
    if sector is not None:
        vec = sector.project(vec)
    if normalize:
        nrm = np.linalg.norm(vec)
        if nrm == 0:
            raise CircuitError("history state vanishes")
        vec = vec / nrm
    return vec


# --------------------------------------------------------------------------
# readout


def _final_sites(circuit: CircuitGraph) -> list[tuple[int, int]]:
    return [(2 * (q.n_rows - 1), 2 * (q.n_rows - 1) + 1) for q in circuit.qubits]


def final_row_block(vector: np.ndarray, circuit: CircuitGraph) -> np.ndarray:
    """Amplitudes with every electron on its final row, shape (2,)*L."""
    psi = np.asarray(vector).reshape(tuple(q.n_sites for q in circuit.qubits))
    idx = tuple(slice(2 * (q.n_rows - 1), 2 * q.n_rows) for q in circuit.qubits)
    return psi[idx]


@dataclass
class FinalRowReadout:
    qubit_ids: list[str]
    p_all_final: float
    distribution: dict[str, float]
    marginals: dict[str, float] = field(default_factory=dict)

    @property
    def no_readout(self) -> bool:
        return self.p_all_final < NO_READOUT

    def marginal(self, ids: Sequence[str]) -> dict[str, float]:
        """Conditional distribution restricted to ``ids`` (bit strings in that order)."""
        pos = [self.qubit_ids.index(i) for i in ids]
        out: dict[str, float] = {}
        for key, p in self.distribution.items():
            sub = "".join(key[k] for k in pos)
            out[sub] = out.get(sub, 0.0) + p
        return out


def final_row_readout(result: GroundStateResult | np.ndarray, circuit: CircuitGraph, cutoff: float = 0.0) -> FinalRowReadout:
    vec = result.vector if isinstance(result, GroundStateResult) else np.asarray(result)
    vec = vec / np.linalg.norm(vec)
    block = final_row_block(vec, circuit)
    probs = np.abs(block) ** 2
    p_final = float(probs.sum())
    ids = circuit.ids
    dist: dict[str, float] = {}
    marg: dict[str, float] = {}
    if p_final >= NO_READOUT:
        cond = probs / p_final
        for bits in itertools.product((0, 1), repeat=len(ids)):
            p = float(cond[bits])
            if p > cutoff:
                dist["".join(map(str, bits))] = p
        for k, qid in enumerate(ids):
            marg[qid] = float(cond.take(1, axis=k).sum())
    return FinalRowReadout(ids, p_final, dist, marg)


@dataclass
class ConditionalState:
    """Final-row amplitudes of a qubit subset, conditioned on all-final.

    ``amplitudes[rest]`` is the (unnormalized within the table, jointly
    normalized across it) vector over the subset's 2^k dot patterns for each
    dot pattern ``rest`` of the complementary qubits.
    """

    subset: list[str]
    amplitudes: dict[str, np.ndarray]

    def density(self) -> np.ndarray:
        dim = 2 ** len(self.subset)
        rho = np.zeros((dim, dim), dtype=complex)
        for v in self.amplitudes.values():
            rho += np.outer(v, v.conj())
        return rho

    def fidelity(self, target) -> float:
        t = np.asarray(target, dtype=complex)
        t = t / np.linalg.norm(t)
        return float(np.real(t.conj() @ self.density() @ t))


def conditional_state(result: GroundStateResult | np.ndarray, circuit: CircuitGraph, subset: Sequence[str]) -> ConditionalState:
    subset = list(subset)
    if not subset:
        raise ValueError("subset must be nonempty")
    vec = result.vector if isinstance(result, GroundStateResult) else np.asarray(result)
    block = final_row_block(vec / np.linalg.norm(vec), circuit)
    p = float(np.sum(np.abs(block) ** 2))
    if p < NO_READOUT:
        raise ValueError("no readout: all-final probability below threshold")
    ids = circuit.ids
    pos = [ids.index(s) for s in subset]
    rest = [k for k in range(len(ids)) if k not in pos]
    moved = np.transpose(block, rest + pos).reshape(2 ** len(rest), 2 ** len(pos)) / math.sqrt(p)
    table = {}
    for r, bits in enumerate(itertools.product((0, 1), repeat=len(rest))):
        row = moved[r]
        if np.any(np.abs(row) > 0):
            table["".join(map(str, bits))] = row.copy()
    return ConditionalState(subset, table)


# --------------------------------------------------------------------------
# adiabatic preparation schedule


@dataclass
class SchedulePoint:
    stage: int
    parameter: float
    e0: float
    gap: float


@dataclass
class ScheduleTrace:
    points: list[SchedulePoint] = field(default_factory=list)

    def stage(self, s: int) -> list[SchedulePoint]:
        return [p for p in self.points if p.stage == s]

    def increases(self, stage: int = 3, slack: float = 0.05) -> list[tuple[float, float]]:
        """Consecutive points where the gap grows by more than ``slack``."""
        pts = self.stage(stage)
        return [
            (a.parameter, b.parameter)
            for a, b in zip(pts, pts[1:])
            if b.gap > a.gap * (1 + slack)
        ]


def _monotone(xs) -> bool:
    d = np.diff(np.asarray(xs, dtype=float))
    return bool(np.all(d >= 0) or np.all(d <= 0))


def gap_along_schedule(
    circuit: CircuitGraph,
    stage2: Sequence[float],
    stage3: Sequence[float],
    D: float,
    N: int,
    **solver_kw,
) -> ScheduleTrace:
    """Gaps while 1/lambda' goes 0 -> 1 (stage 2) and then 1/lambda goes
    1 -> 1/sqrt(DN) (stage 3)."""
    end = 1.0 / math.sqrt(D * N)
    if not (_monotone(stage2) and all(0.0 <= x <= 1.0 for x in stage2)):
        raise ValueError("stage-2 points must be monotone in [0, 1]")
    if not (_monotone(stage3) and all(end - 1e-12 <= x <= 1.0 for x in stage3)):
        raise ValueError(f"stage-3 points must be monotone in [{end:.4g}, 1]")
    trace = ScheduleTrace()
    sector = reachable_sector(scheduled_circuit(circuit, 1.0, 1.0))
    for x in stage2:
        r = solve_in_sector(assemble_scheduled(circuit, x, 1.0), sector, **solver_kw)
        trace.points.append(SchedulePoint(2, float(x), r.e0, r.gap))
    for x in stage3:
        r = solve_in_sector(assemble_scheduled(circuit, 1.0, x), sector, **solver_kw)
        trace.points.append(SchedulePoint(3, float(x), r.e0, r.gap))
    return trace
