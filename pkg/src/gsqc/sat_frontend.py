"""Exact Cover / small SAT instances and the classical enumeration oracle.

Instance text format::

    # comment
    N M
    i j k            # exact-one-of-three clause (the default)
    ec i j k         # same, explicit
    sum1 i j         # exactly one of two
    eq0 i            # z_i = 0
    eq1 i            # z_i = 1

Variables are 1-based.  Bit strings are written z_1 z_2 ... z_N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_MAX_BITS = 24
DEFAULT_C = 8.0

_ARITY = {"exact_cover": 3, "sum1": 2, "eq0": 1, "eq1": 1}
_KEYWORDS = {"ec": "exact_cover", "exact_cover": "exact_cover", "sum1": "sum1", "eq0": "eq0", "eq1": "eq1"}


class InstanceError(ValueError):
    pass


@dataclass(frozen=True)
class Clause:
    kind: str
    vars: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in _ARITY:
            raise InstanceError(f"unknown clause kind {self.kind!r}")
        if len(self.vars) != _ARITY[self.kind]:
            raise InstanceError(f"{self.kind} clause needs {_ARITY[self.kind]} variables, got {self.vars}")
        if len(set(self.vars)) != len(self.vars):
            raise InstanceError(f"duplicate index in clause {self.vars}")

    def holds(self, bits: np.ndarray) -> np.ndarray:
        """Vectorized truth value; ``bits[:, v-1]`` is z_v for each assignment row."""
        cols = bits[:, [v - 1 for v in self.vars]]
        if self.kind == "eq0":
            return cols[:, 0] == 0
        if self.kind == "eq1":
            return cols[:, 0] == 1
        return cols.sum(axis=1) == 1

    def __str__(self):
        return f"{self.kind}({','.join(map(str, self.vars))})"


@dataclass(frozen=True)
class ExactCoverInstance:
    n_bits: int
    clauses: tuple[Clause, ...]

    def __post_init__(self):
        if self.n_bits < 1:
            raise InstanceError("need at least one bit")
        object.__setattr__(self, "clauses", tuple(self.clauses))
        for c in self.clauses:
            for v in c.vars:
                if not 1 <= v <= self.n_bits:
                    raise InstanceError(f"index {v} out of range 1..{self.n_bits}")

    @classmethod
    def exact_cover(cls, n_bits: int, triples: Sequence[Sequence[int]]) -> "ExactCoverInstance":
        return cls(n_bits, tuple(Clause("exact_cover", tuple(t)) for t in triples))

    @property
    def n_clauses(self) -> int:
        return len(self.clauses)

    @property
    def alpha(self) -> float:
        return self.n_clauses / self.n_bits

    def to_text(self) -> str:
        lines = [f"{self.n_bits} {self.n_clauses}"]
        for c in self.clauses:
            prefix = "" if c.kind == "exact_cover" else c.kind + " "
            lines.append(prefix + " ".join(map(str, c.vars)))
        return "\n".join(lines) + "\n"


def parse_instance(text: str) -> ExactCoverInstance:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    if not rows:
        raise InstanceError("empty instance")
    lineno, head = rows[0]
    try:
        n_bits, n_clauses = (int(t) for t in head)
    except ValueError:
        raise InstanceError(f"line {lineno}: header must be 'N M', got {' '.join(head)!r}") from None
    body = rows[1:]
    if len(body) != n_clauses:
        raise InstanceError(f"header declares {n_clauses} clauses, found {len(body)}")
    clauses = []
    for lineno, toks in body:
        kind = "exact_cover"
        if toks and toks[0].lower() in _KEYWORDS:
            kind = _KEYWORDS[toks[0].lower()]
            toks = toks[1:]
        try:
            idx = tuple(int(t) for t in toks)
        except ValueError:
            raise InstanceError(f"line {lineno}: malformed clause {' '.join(toks)!r}") from None
        try:
            clause = Clause(kind, idx)
        except InstanceError as exc:
            raise InstanceError(f"line {lineno}: {exc}") from None
        for v in idx:
            if not 1 <= v <= n_bits:
                raise InstanceError(f"line {lineno}: index {v} out of range 1..{n_bits}")
        clauses.append(clause)
    return ExactCoverInstance(n_bits, tuple(clauses))


def load_instance(path) -> ExactCoverInstance:
    with open(path) as fh:
        return parse_instance(fh.read())


# --------------------------------------------------------------------------
# oracle


@dataclass
class OracleLedger:
    n_bits: int
    order: list[int]
    counts: list[int]
    final_set: list[str] = field(default_factory=list)
    clauses: list[Clause] = field(default_factory=list)

    @property
    def ratios(self) -> list[float]:
        """S_j / S_{j+1}; infinite where a clause empties the set."""
        return [a / b if b else math.inf for a, b in zip(self.counts, self.counts[1:])]

    @property
    def satisfiable(self) -> bool:
        return self.counts[-1] > 0

    def to_text(self) -> str:
        lines = ["j\tclause\tS_j\tratio"]
        lines.append(f"0\t-\t{self.counts[0]}\t-")
        for j, (c, s, r) in enumerate(zip(self.clauses, self.counts[1:], self.ratios), start=1):
            lines.append(f"{j}\t{c}\t{s}\t{r:.6g}")
        return "\n".join(lines) + "\n"


def assignment_bits(n_bits: int) -> np.ndarray:
    """All 2^N assignments as rows of bits, row index read as z_1 ... z_N."""
    idx = np.arange(2**n_bits, dtype=np.int64)
    shifts = np.arange(n_bits - 1, -1, -1)
    return ((idx[:, None] >> shifts) & 1).astype(np.int8)


def bitstring(row) -> str:
    return "".join(str(int(b)) for b in row)


def brute_force(instance: ExactCoverInstance, order: Sequence[int] | None = None, max_bits: int = DEFAULT_MAX_BITS) -> OracleLedger:
    if instance.n_bits > max_bits:
        raise InstanceError(f"N={instance.n_bits} exceeds enumeration guard {max_bits}")
    m = instance.n_clauses
    order = list(range(m)) if order is None else list(order)
    if sorted(order) != list(range(m)):
        raise InstanceError(f"order {order} is not a permutation of {m} clauses")
    bits = assignment_bits(instance.n_bits)
    alive = np.ones(len(bits), dtype=bool)
    counts = [int(alive.sum())]
    for c in order:
        alive &= instance.clauses[c].holds(bits)
        counts.append(int(alive.sum()))
    return OracleLedger(
        n_bits=instance.n_bits,
        order=order,
        counts=counts,
        final_set=[bitstring(r) for r in bits[alive]],
        clauses=[instance.clauses[c] for c in order],
    )


# --------------------------------------------------------------------------
# readout comparison


class SoundnessError(AssertionError):
    """The quantum readout put weight on an assignment the oracle rejects."""


@dataclass
class ReadoutDiagnostic:
    tv_distance: float
    no_readout: bool
    outside_support: dict[str, float]
    missing: list[str]

    @property
    def ok(self) -> bool:
        return not self.outside_support


def compare_readout(readout, ledger: OracleLedger, data_ids: Sequence[str] | None = None, support_tol: float = 1e-9) -> ReadoutDiagnostic:
    """Total-variation distance from uniform on the final satisfying set.

    ``readout`` is a FinalRowReadout; its conditional distribution is
    marginalized onto ``data_ids`` (default z1..zN).
    """
    if data_ids is None:
        data_ids = [f"z{v}" for v in range(1, ledger.n_bits + 1)]
    target = set(ledger.final_set)
    if readout.no_readout:
        if not target:
            return ReadoutDiagnostic(0.0, True, {}, [])
        return ReadoutDiagnostic(1.0, True, {}, sorted(target))
    dist = readout.marginal(data_ids)
    if not target:
        raise SoundnessError(f"unsatisfiable instance produced readout {dist}")
    uniform = 1.0 / len(target)
    keys = target | set(dist)
    tv = 0.5 * sum(abs(dist.get(k, 0.0) - (uniform if k in target else 0.0)) for k in keys)
    outside = {k: p for k, p in dist.items() if k not in target and p > support_tol}
    missing = sorted(k for k in target if dist.get(k, 0.0) <= support_tol)
    return ReadoutDiagnostic(tv, False, outside, missing)


# --------------------------------------------------------------------------
# boost factor


def choose_lambda(qubit_count: int, C: float = DEFAULT_C, target_p: float = math.exp(-1), max_lambda: float = 1e6) -> float:
    """Boost factor making (1 - C/lambda^2)^L come out near ``target_p``.

    Uses the exponential form: lambda = sqrt(C L / ln(1/P)).
    """
    if qubit_count < 1 or C <= 0:
        raise ValueError("need L >= 1 and C > 0")
    if not 0.0 < target_p < 1.0:
        raise ValueError(f"target probability must lie in (0, 1), got {target_p}")
    lam = math.sqrt(C * qubit_count / math.log(1.0 / target_p))
    if not lam <= max_lambda:
        raise ValueError(f"lambda {lam:.3g} exceeds guard {max_lambda:g}; target_p too close to 1")
    return lam


def readout_probability(lam: float, qubit_count: int, C: float = DEFAULT_C) -> float:
    """(1 - C/lambda^2)^L, clipped at zero."""
    base = 1.0 - C / lam**2
    return max(base, 0.0) ** qubit_count
