"""Symbolic gap estimates: the 1/x counting rule and closed-form filter gaps.

The counting rule assigns each qubit a suppression factor 1/x; the gap
scales as eps * (1/x)_min^2.  With every terminal sharing one amplifying
factor lambda, each x is a monomial c * lambda^p, so the rule also yields
the predicted power law of the gap in lambda.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .circuit_model import (
    TERMINAL_BOOST,
    TERMINAL_PROJECTION,
    CircuitGraph,
    Projection,
)


class RuleError(ValueError):
    pass


@dataclass(frozen=True)
class ProjectionFraction:
    """Pre-projection state a|gamma> + b|~gamma> on the row before a projection."""

    a: complex
    b: complex

    def __post_init__(self):
        if self.a == 0 and self.b == 0:
            raise RuleError("fraction amplitudes cannot both vanish")

    @property
    def fraction(self) -> float:
        return abs(self.a) / math.hypot(abs(self.a), abs(self.b))

    @classmethod
    def from_fraction(cls, f: float) -> "ProjectionFraction":
        if not 0 < f <= 1:
            raise RuleError(f"fraction must lie in (0, 1], got {f}")
        return cls(f, math.sqrt(max(0.0, 1 - f * f)))

    @classmethod
    def from_solution_counts(cls, s_j: int, s_j1: int) -> "ProjectionFraction":
        """Fraction sqrt(S_{j+1}/S_j) that survives a filter."""
        if s_j <= 0 or s_j1 <= 0 or s_j1 > s_j:
            raise RuleError(f"need S_j >= S_j+1 > 0, got {s_j}, {s_j1}")
        return cls.from_fraction(math.sqrt(s_j1 / s_j))


@dataclass(frozen=True)
class Mono:
    """coef * lambda**power"""

    coef: float = 1.0
    power: int = 0

    def __mul__(self, other: "Mono") -> "Mono":
        return Mono(self.coef * other.coef, self.power + other.power)

    def at(self, lam: float) -> float:
        return self.coef * lam**self.power


LAMBDA = Mono(1.0, 1)


@dataclass
class InverseX:
    qubit: str
    x: Mono
    lam: float
    factors: list[str] = field(default_factory=list)

    @property
    def value(self) -> float:
        """1/x at the given lambda."""
        return 1.0 / self.x.at(self.lam)


@dataclass
class GapEstimate:
    per_qubit: dict[str, InverseX]
    lam: float
    eps: float = 1.0
    low_confidence: bool = False

    @property
    def argmin(self) -> str:
        return min(self.per_qubit, key=lambda q: (self.per_qubit[q].value, -self.per_qubit[q].x.power))

    @property
    def min_inverse_x(self) -> float:
        return self.per_qubit[self.argmin].value

    @property
    def gap(self) -> float:
        return self.eps * self.min_inverse_x**2

    @property
    def exponent(self) -> int:
        """Predicted d log(gap) / d log(lambda)."""
        return -2 * self.per_qubit[self.argmin].x.power

    @property
    def time_cost(self) -> float:
        """Adiabatic time scale, proportional to 1/gap^2."""
        return 1.0 / self.gap**2

    def report(self) -> str:
        lines = ["qubit\tinv_x\tlambda_power\tfactors"]
        for qid, ix in self.per_qubit.items():
            lines.append(f"{qid}\t{ix.value:.6g}\t{-ix.x.power}\t{' '.join(ix.factors) or '-'}")
        lines.append(
            f"# min_inv_x={self.min_inverse_x:.6g} at {self.argmin}; gap~{self.gap:.6g}; "
            f"exponent={self.exponent}; low_confidence={self.low_confidence}"
        )
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# coexistence


def coexists(circuit: CircuitGraph, qubit: str, cut_row: int, other: str) -> bool:
    """Whether rows < ``cut_row`` of ``qubit`` share a ground-state term with
    the final row of ``other``.

    Judged pair by pair from the two-qubit decomposition: a control's
    upstream part only appears together with the target's upstream part, so
    ``other`` sitting on its final row as the target of a link controlled by
    ``qubit`` at row jc forces ``qubit`` to row >= jc.  A qubit's own final
    row never coexists with its upstream part.
    """
    if other == qubit:
        return False
    for lk in circuit.links:
        if lk.control == qubit and lk.target == other and lk.control_row >= cut_row:
            return False
    return True


# --------------------------------------------------------------------------
# the counting rule


def _fraction(fractions: Mapping[str, object] | None, qid: str, required: bool) -> float:
    if fractions is None or qid not in fractions:
        if required:
            raise RuleError(f"no projection fraction supplied for {qid!r}")
        return 1.0
    f = fractions[qid]
    return f.fraction if isinstance(f, ProjectionFraction) else float(f)


def _terminal_factor(circuit, qid, lam, fractions, rule, own: bool) -> tuple[Mono, str] | None:
    q = circuit.qubit(qid)
    if q.terminal == TERMINAL_BOOST:
        return LAMBDA, f"B({qid})"
    if q.terminal != TERMINAL_PROJECTION:
        return None
    if rule == "baseline":
        return (None if own else (LAMBDA, f"P({qid})"))
    f = _fraction(fractions, qid, required=False)
    if own:
        # Min(lambda, 1/f)
        if lam < 1.0 / f:
            return LAMBDA, f"P({qid})"
        return Mono(1.0 / f, 0), f"1/f({qid})"
    return Mono(f, 1), f"P({qid})*f"


def estimate_inverse_x(
    circuit: CircuitGraph,
    qubit: str,
    fractions: Mapping[str, object] | None = None,
    lam: float | None = None,
    rule: str = "baseline",
) -> InverseX:
    if rule not in ("baseline", "modified"):
        raise RuleError(f"unknown rule {rule!r}")
    try:
        circuit.qubit(qubit)
    except KeyError:
        raise RuleError(f"unknown qubit {qubit!r}") from None
    if lam is None:
        lam = _common_lambda(circuit)
    x = Mono()
    factors = []
    own = _terminal_factor(circuit, qubit, lam, fractions, rule, own=True)
    if own is not None:
        x = x * own[0]
        factors.append(own[1])
    # one factor per interacting qubit, split at its earliest link with us
    cuts: dict[str, int] = {}
    for lk in circuit.links_of(qubit):
        other = lk.target if lk.control == qubit else lk.control
        cuts[other] = min(cuts.get(other, lk.side(other)), lk.side(other))
    for other, cut in cuts.items():
        x_b = Mono()
        for q in _partners(circuit, other, exclude=qubit):
            if coexists(circuit, other, cut, q):
                continue
            term = _terminal_factor(circuit, q, lam, fractions, rule, own=False)
            if term is not None:
                x_b = x_b * term[0]
                factors.append(f"{term[1]}|{other}")
        x = x * x_b
    return InverseX(qubit, x, lam, factors)


def _partners(circuit: CircuitGraph, qid: str, exclude: str) -> list[str]:
    """``qid`` itself and every qubit linked to it, minus ``exclude``."""
    out = [qid]
    for lk in circuit.links_of(qid):
        p = lk.target if lk.control == qid else lk.control
        if p != exclude and p not in out:
            out.append(p)
    return out


def _common_lambda(circuit: CircuitGraph) -> float:
    lams = {
        g.lam for q in circuit.qubits for g in q.gates[-1:]
        if q.terminal in (TERMINAL_BOOST, TERMINAL_PROJECTION)
    }
    if not lams:
        return 1.0
    return max(lams)


def _low_confidence(circuit: CircuitGraph, fractions) -> bool:
    """More than one projection on a qubit is outside the rule's worked cases."""
    for q in circuit.qubits:
        if sum(isinstance(g, Projection) for g in q.gates) > 1:
            return True
    return False


def predict_gap(
    circuit: CircuitGraph,
    fractions: Mapping[str, object] | None = None,
    lam: float | None = None,
    rule: str = "baseline",
) -> GapEstimate:
    if lam is None:
        lam = _common_lambda(circuit)
    per = {q.id: estimate_inverse_x(circuit, q.id, fractions, lam, rule) for q in circuit.qubits}
    return GapEstimate(per, lam, circuit.eps, _low_confidence(circuit, fractions))


# --------------------------------------------------------------------------
# closed forms


def ancilla_inverse_x(lam: float, s_j: int, s_j1: int) -> float:
    """1/x of a filter's projected ancilla: 1 / (lambda^2 Min(lambda, sqrt(S_j/S_j+1)))."""
    return 1.0 / (lam**2 * min(lam, math.sqrt(s_j / s_j1)))


def filter_gap_formula(lam: float, s_j: float, s_j1: float, eps: float = 1.0) -> float:
    """Min(eps/lambda^8, eps S_{j+1} / (lambda^4 S_j)); zero for a blocked filter."""
    if s_j <= 0:
        raise RuleError("S_j must be positive")
    if s_j1 < 0 or s_j1 > s_j:
        raise RuleError(f"need 0 <= S_j+1 <= S_j, got {s_j1} > {s_j}")
    if lam < 1:
        raise RuleError("lambda must be >= 1")
    if s_j1 == 0:
        return 0.0
    return min(eps / lam**8, eps * s_j1 / (lam**4 * s_j))


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    intercept: float
    residual: float


def fit_power_law(points: Sequence[tuple[float, float]]) -> PowerLawFit:
    """Least squares of log(y) = exponent * log(x) + intercept."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValueError("need at least three (x, y) points")
    if np.any(pts <= 0):
        raise ValueError("power-law fit needs positive data")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    (slope, icpt), res, *_ = np.polyfit(lx, ly, 1, full=True)
    rms = math.sqrt(float(res[0]) / len(lx)) if len(res) else 0.0
    return PowerLawFit(float(slope), float(icpt), rms)
