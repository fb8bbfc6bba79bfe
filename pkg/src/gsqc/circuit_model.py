"""Circuit representation for ground-state quantum computers.

A qubit is a column of rows; every row holds two dots (|0> and |1>) and a
single electron lives somewhere in the column.  Transition ``j`` joins row
``j-1`` to row ``j`` and carries exactly one gate term or one side of a CNOT
link.  Everything here is immutable; builders return new objects.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, Sequence, Union

import numpy as np

DEFAULT_BOUNDARY_STRENGTH = 10.0
MAX_TELEPORTED_LENGTH = 8
_UNITARY_TOL = 1e-12


class CircuitError(ValueError):
    """Structural problem with a circuit or one of its parts."""


# --------------------------------------------------------------------------
# gates


def rotation(theta: float) -> np.ndarray:
    """R_y(theta): real-plane rotation by theta/2."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]])


IDENTITY = np.eye(2)
HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2)
NOT = np.array([[0.0, 1.0], [1.0, 0.0]])


@dataclass(frozen=True, eq=False)
class Unitary:
    matrix: np.ndarray
    name: str = "U"

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.shape != (2, 2):
            raise CircuitError(f"unitary {self.name!r} must be 2x2, got {m.shape}")
        if not np.allclose(m.conj().T @ m, IDENTITY, atol=_UNITARY_TOL, rtol=0):
            raise CircuitError(f"gate {self.name!r} is not unitary")
        if np.isrealobj(m) or not np.any(m.imag):
            m = np.real(m).astype(float)
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def is_identity(self) -> bool:
        return bool(np.allclose(self.matrix, IDENTITY, atol=_UNITARY_TOL, rtol=0))

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.matrix)

    def __eq__(self, other):
        return (
            isinstance(other, Unitary)
            and self.name == other.name
            and np.array_equal(self.matrix, other.matrix)
        )

    def __hash__(self):
        return hash((self.name, self.matrix.tobytes()))


@dataclass(frozen=True)
class Boost:
    lam: float

    def __post_init__(self):
        if not self.lam >= 1:
            raise CircuitError(f"boost factor must be >= 1, got {self.lam}")


@dataclass(frozen=True)
class Projection:
    gamma: int
    lam: float

    def __post_init__(self):
        if self.gamma not in (0, 1):
            raise CircuitError(f"projection target must be 0 or 1, got {self.gamma}")
        if not self.lam >= 1:
            raise CircuitError(f"projection factor must be >= 1, got {self.lam}")


@dataclass(frozen=True)
class ScheduleBoost:
    """Boost of the first row used while preparing the ground state.

    Parameterized by ``inv_lam_prime`` = 1/lambda' in [0, 1] so that the
    fully concentrated limit 1/lambda' = 0 is representable.
    """

    inv_lam_prime: float

    def __post_init__(self):
        if not 0.0 <= self.inv_lam_prime <= 1.0:
            raise CircuitError(f"1/lambda' must lie in [0, 1], got {self.inv_lam_prime}")


@dataclass(frozen=True)
class LinkSlot:
    """Placeholder for a transition occupied by one side of a CNOT link."""


LINK = LinkSlot()

GateSpec = Union[Unitary, Boost, Projection, ScheduleBoost]
Slot = Union[Unitary, Boost, Projection, ScheduleBoost, LinkSlot]

I_GATE = Unitary(IDENTITY, "I")
H_GATE = Unitary(HADAMARD, "H")
N_GATE = Unitary(NOT, "N")


def R_GATE(sign: int = 1) -> Unitary:
    return Unitary(rotation(sign * math.pi / 4), "R+" if sign > 0 else "R-")


# --------------------------------------------------------------------------
# boundary


@dataclass(frozen=True)
class BoundarySpec:
    """Row-0 term E (I + a.sigma); its zero mode is the qubit's input state."""

    strength: float = DEFAULT_BOUNDARY_STRENGTH
    axis: tuple[float, float, float] = (-1.0, 0.0, 0.0)

    def __post_init__(self):
        axis = tuple(float(a) for a in self.axis)
        if len(axis) != 3:
            raise CircuitError("boundary axis needs three components")
        if abs(sum(a * a for a in axis) - 1.0) > 1e-12:
            raise CircuitError(f"boundary axis must be a unit vector, got {axis}")
        if not self.strength > 0:
            raise CircuitError("boundary strength must be positive")
        object.__setattr__(self, "axis", axis)

    @classmethod
    def plus(cls, strength=DEFAULT_BOUNDARY_STRENGTH):
        """Input |0> + |1>, i.e. h0 = E(I - sigma_x)."""
        return cls(strength, (-1.0, 0.0, 0.0))

    @classmethod
    def zero(cls, strength=DEFAULT_BOUNDARY_STRENGTH):
        return cls(strength, (0.0, 0.0, -1.0))

    @classmethod
    def one(cls, strength=DEFAULT_BOUNDARY_STRENGTH):
        return cls(strength, (0.0, 0.0, 1.0))

    @classmethod
    def from_alpha(cls, alpha: float, strength=DEFAULT_BOUNDARY_STRENGTH):
        """h0 = E(I + alpha sigma_z - sqrt(1 - alpha^2) sigma_x)."""
        return cls(strength, (-math.sqrt(1.0 - alpha * alpha), 0.0, alpha))

    @classmethod
    def from_state(cls, a: complex, b: complex, strength=DEFAULT_BOUNDARY_STRENGTH):
        """Boundary whose zero mode is a|0> + b|1> (up to normalization)."""
        v = np.array([a, b], dtype=complex)
        v /= np.linalg.norm(v)
        # a.sigma has eigenvalue -1 on v, so a = -<v|sigma|v>
        ax = -2 * (v[0].conjugate() * v[1]).real
        ay = -2 * (v[0].conjugate() * v[1]).imag
        az = -(abs(v[0]) ** 2 - abs(v[1]) ** 2)
        norm = math.sqrt(ax * ax + ay * ay + az * az)
        return cls(strength, (ax / norm, ay / norm, az / norm))

    def matrix(self) -> np.ndarray:
        ax, ay, az = self.axis
        m = np.array([[1 + az, ax - 1j * ay], [ax + 1j * ay, 1 - az]])
        if ay == 0:
            m = m.real
        return self.strength * m

    def ground_vector(self) -> np.ndarray:
        w, v = np.linalg.eigh(self.matrix())
        vec = v[:, 0]
        # fix the phase so the first nonzero entry is real positive
        k = int(np.argmax(np.abs(vec) > 1e-14))
        vec = vec * (abs(vec[k]) / vec[k])
        if np.allclose(vec.imag, 0):
            vec = vec.real
        return vec


# --------------------------------------------------------------------------
# columns, links, circuits


TERMINAL_BOOST = "boost-ended"
TERMINAL_PROJECTION = "projection-ended"
TERMINAL_CONTINUES = "continues"


@dataclass(frozen=True)
class QubitColumn:
    id: str
    n_rows: int
    boundary: BoundarySpec
    gates: tuple[Slot, ...]

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.n_rows < 1:
            raise CircuitError(f"qubit {self.id}: needs at least one row")
        if len(self.gates) != self.n_rows - 1:
            raise CircuitError(
                f"qubit {self.id}: {self.n_rows} rows need {self.n_rows - 1} "
                f"gates, got {len(self.gates)}"
            )

    @property
    def terminal(self) -> str:
        if self.gates and isinstance(self.gates[-1], Boost):
            return TERMINAL_BOOST
        if self.gates and isinstance(self.gates[-1], Projection):
            return TERMINAL_PROJECTION
        return TERMINAL_CONTINUES

    @property
    def n_sites(self) -> int:
        return 2 * self.n_rows

    def gate(self, transition: int) -> Slot:
        return self.gates[transition - 1]

    def link_rows(self) -> list[int]:
        return [j for j, g in enumerate(self.gates, start=1) if isinstance(g, LinkSlot)]


@dataclass(frozen=True)
class CnotLink:
    control: str
    control_row: int
    target: str
    target_row: int
    tag: str = ""

    def side(self, qubit: str) -> int:
        if qubit == self.control:
            return self.control_row
        if qubit == self.target:
            return self.target_row
        raise KeyError(qubit)


def new_qubit(qid: str, n_rows: int, boundary: BoundarySpec, gates: Sequence[Slot]) -> QubitColumn:
    """Build a column, checking the gate list covers every transition."""
    return QubitColumn(qid, n_rows, boundary, tuple(gates))


@dataclass(frozen=True)
class CircuitGraph:
    qubits: tuple[QubitColumn, ...]
    links: tuple[CnotLink, ...] = ()
    eps: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        object.__setattr__(self, "links", tuple(self.links))
        ids = [q.id for q in self.qubits]
        if len(set(ids)) != len(ids):
            raise CircuitError("duplicate qubit ids")

    @property
    def ids(self) -> list[str]:
        return [q.id for q in self.qubits]

    def qubit(self, qid: str) -> QubitColumn:
        for q in self.qubits:
            if q.id == qid:
                return q
        raise KeyError(qid)

    def index(self, qid: str) -> int:
        return self.ids.index(qid)

    @property
    def lengths(self) -> dict[str, int]:
        return {q.id: q.n_rows for q in self.qubits}

    @property
    def dimension(self) -> int:
        return math.prod(q.n_sites for q in self.qubits)

    def links_of(self, qid: str) -> list[CnotLink]:
        return sorted(
            (lk for lk in self.links if qid in (lk.control, lk.target)),
            key=lambda lk: lk.side(qid),
        )

    def with_qubit(self, q: QubitColumn) -> "CircuitGraph":
        return replace(self, qubits=tuple(q if p.id == q.id else p for p in self.qubits))


# --------------------------------------------------------------------------
# incremental construction


class CircuitBuilder:
    """Appends rows to qubit columns; every appended gate adds one row."""

    def __init__(self, eps: float = 1.0):
        self.eps = eps
        self._boundary: dict[str, BoundarySpec] = {}
        self._gates: dict[str, list[Slot]] = {}
        self._links: list[CnotLink] = []

    def add_qubit(self, qid: str, boundary: BoundarySpec | None = None) -> str:
        if qid in self._gates:
            raise CircuitError(f"qubit {qid!r} already exists")
        self._boundary[qid] = boundary or BoundarySpec.plus()
        self._gates[qid] = []
        return qid

    def __contains__(self, qid):
        return qid in self._gates

    def rows(self, qid: str) -> int:
        return len(self._gates[qid]) + 1

    def gate(self, qid: str, g: GateSpec) -> "CircuitBuilder":
        self._gates[qid].append(g)
        return self

    def cnot(self, control: str, target: str, tag: str = "") -> "CircuitBuilder":
        if control == target:
            raise CircuitError("CNOT needs two distinct qubits")
        self._gates[control].append(LINK)
        self._gates[target].append(LINK)
        self._links.append(
            CnotLink(control, len(self._gates[control]), target, len(self._gates[target]), tag)
        )
        return self

    def build(self) -> CircuitGraph:
        qubits = [
            QubitColumn(qid, len(gs) + 1, self._boundary[qid], tuple(gs))
            for qid, gs in self._gates.items()
        ]
        return CircuitGraph(tuple(qubits), tuple(self._links), self.eps)


# --------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    dimension: int
    lengths: dict[str, int]
    terminals: dict[str, str]
    acyclic: bool
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_invalid(self):
        if self.violations:
            raise CircuitError("; ".join(self.violations))


def event_order(circuit: CircuitGraph) -> list[tuple]:
    """Topological order of transitions.

    Events are ``("gate", qid, j)`` for single-qubit terms and
    ``("link", k)`` for the k-th CNOT link.  Raises CircuitError on cycles.
    """
    owner: dict[tuple[str, int], tuple] = {}
    for q in circuit.qubits:
        for j, g in enumerate(q.gates, start=1):
            if not isinstance(g, LinkSlot):
                owner[(q.id, j)] = ("gate", q.id, j)
    for k, lk in enumerate(circuit.links):
        owner[(lk.control, lk.control_row)] = ("link", k)
        owner[(lk.target, lk.target_row)] = ("link", k)
    ts = TopologicalSorter()
    for q in circuit.qubits:
        prev = None
        for j in range(1, q.n_rows):
            ev = owner.get((q.id, j))
            if ev is None:
                raise CircuitError(f"qubit {q.id}: transition {j} has no link")
            ts.add(ev)
            if prev is not None and prev != ev:
                ts.add(ev, prev)
            prev = ev
    try:
        return list(ts.static_order())
    except CycleError as exc:
        raise CircuitError(f"cyclic control ordering: {exc.args[1]}") from None


def validate(circuit: CircuitGraph, max_dim: int | None = None) -> ValidationReport:
    """Structural audit; collects every violation rather than stopping early."""
    violations = []
    known = {q.id: q for q in circuit.qubits}
    claimed: dict[tuple[str, int], int] = {}
    for k, lk in enumerate(circuit.links):
        if lk.control == lk.target:
            violations.append(f"link {k}: control and target are the same qubit")
        for qid, row in ((lk.control, lk.control_row), (lk.target, lk.target_row)):
            q = known.get(qid)
            if q is None:
                violations.append(f"link {k}: unknown qubit {qid!r}")
                continue
            if not 1 <= row < q.n_rows:
                violations.append(f"link {k}: row {row} out of range for {qid} ({q.n_rows} rows)")
                continue
            if (qid, row) in claimed:
                violations.append(f"link {k}: {qid} transition {row} already used by link {claimed[qid, row]}")
            claimed[(qid, row)] = k
            if not isinstance(q.gate(row), LinkSlot):
                violations.append(f"link {k}: {qid} transition {row} carries a gate term")
    for q in circuit.qubits:
        for j, g in enumerate(q.gates, start=1):
            if isinstance(g, LinkSlot) and (q.id, j) not in claimed:
                violations.append(f"qubit {q.id}: transition {j} is a link slot with no link")
    acyclic = True
    if not violations:
        try:
            event_order(circuit)
        except CircuitError as exc:
            acyclic = False
            violations.append(str(exc))
    dim = circuit.dimension
    if max_dim is not None and dim > max_dim:
        violations.append(f"dimension {dim} exceeds limit {max_dim}")
    return ValidationReport(
        dimension=dim,
        lengths=circuit.lengths,
        terminals={q.id: q.terminal for q in circuit.qubits},
        acyclic=acyclic,
        violations=violations,
    )


# --------------------------------------------------------------------------
# filters


FILTER_KINDS = ("eq0", "eq1", "sum1", "exact_cover")
_ANCILLAS = {"eq0": 1, "eq1": 1, "sum1": 1, "exact_cover": 2}
_DATA = {"eq0": 1, "eq1": 1, "sum1": 2, "exact_cover": 3}


@dataclass(frozen=True)
class FilterBox:
    kind: str
    data: tuple[str, ...]
    ancillas: tuple[str, ...]
    lam: float

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise CircuitError(f"unknown filter kind {self.kind!r}")
        if len(self.data) != _DATA[self.kind] or len(self.ancillas) != _ANCILLAS[self.kind]:
            raise CircuitError(f"{self.kind} filter has wrong qubit counts")
        if len(set(self.data)) != len(self.data):
            raise CircuitError(f"{self.kind} filter needs distinct data qubits, got {self.data}")
        if not self.lam >= 1:
            raise CircuitError("filter lambda must be >= 1")

    def apply(self, b: CircuitBuilder) -> None:
        """Append the box's rows; data qubits must already exist in ``b``."""
        for d in self.data:
            if d not in b:
                raise CircuitError(f"data qubit {d!r} missing")
        lam = self.lam
        if self.kind in ("eq0", "eq1"):
            (d,), (a,) = self.data, self.ancillas
            b.add_qubit(a, BoundarySpec.zero())
            b.cnot(d, a)
            b.gate(a, Projection(0 if self.kind == "eq0" else 1, lam))
        elif self.kind == "sum1":
            (i, j), (a,) = self.data, self.ancillas
            b.add_qubit(a, BoundarySpec.zero())
            b.cnot(i, a).cnot(j, a)
            b.gate(a, Projection(1, lam))
        else:
            (i, j, k), (a1, a2) = self.data, self.ancillas
            b.add_qubit(a1, BoundarySpec.zero())
            b.add_qubit(a2, BoundarySpec.zero())
            b.cnot(i, a1).cnot(j, a1).cnot(k, a1)
            # Margolus simplified Toffoli onto ancilla 2
            b.gate(a2, R_GATE(+1))
            b.cnot(k, a2)
            b.gate(a2, R_GATE(+1))
            b.cnot(j, a2)
            b.gate(a2, R_GATE(-1))
            b.cnot(k, a2)
            b.gate(a2, R_GATE(-1))
            b.gate(a1, Projection(1, lam))
            b.gate(a2, Projection(0, lam))


def _ancilla_ids(prefix: str, count: int) -> tuple[str, ...]:
    return tuple(f"{prefix}.a{n + 1}" for n in range(count))


def filter_eq0(data_qubit: str, lam: float, prefix: str = "f") -> FilterBox:
    return FilterBox("eq0", (data_qubit,), _ancilla_ids(prefix, 1), lam)


def filter_eq1(data_qubit: str, lam: float, prefix: str = "f") -> FilterBox:
    return FilterBox("eq1", (data_qubit,), _ancilla_ids(prefix, 1), lam)


def filter_sum1(data_i: str, data_j: str, lam: float, prefix: str = "f") -> FilterBox:
    return FilterBox("sum1", (data_i, data_j), _ancilla_ids(prefix, 1), lam)


def filter_exact_cover(data_i: str, data_j: str, data_k: str, lam: float, prefix: str = "f") -> FilterBox:
    return FilterBox("exact_cover", (data_i, data_j, data_k), _ancilla_ids(prefix, 2), lam)


def filter_circuit(
    box: FilterBox,
    inputs: dict[str, BoundarySpec] | None = None,
    data_terminal: str = TERMINAL_BOOST,
    eps: float = 1.0,
) -> CircuitGraph:
    """Stand-alone circuit for one box: fresh data qubits, the box, then terminals."""
    inputs = inputs or {}
    b = CircuitBuilder(eps)
    for d in box.data:
        b.add_qubit(d, inputs.get(d, BoundarySpec.plus()))
    box.apply(b)
    if data_terminal == TERMINAL_BOOST:
        for d in box.data:
            b.gate(d, Boost(box.lam))
    return b.build()


def data_id(var: int) -> str:
    return f"z{var}"


def chain_filters(instance, order: Sequence[int] | None = None, lam: float = 4.0, mode: str = "compact") -> CircuitGraph:
    """Compile an instance into data qubits followed by one filter box per clause.

    ``order`` is a permutation of clause positions (default input order).
    In compact mode data qubits simply grow downward through every box; in
    teleport mode the compact circuit is then split by teleportation boxes.
    """
    clauses = list(instance.clauses)
    if order is None:
        order = list(range(len(clauses)))
    order = list(order)
    if sorted(order) != list(range(len(clauses))):
        raise CircuitError(f"order {order} is not a permutation of {len(clauses)} clauses")
    if mode not in ("compact", "teleport"):
        raise CircuitError(f"unknown mode {mode!r}")
    b = CircuitBuilder()
    for v in range(1, instance.n_bits + 1):
        b.add_qubit(data_id(v), BoundarySpec.plus())
    for pos, c in enumerate(order):
        clause = clauses[c]
        for v in clause.vars:
            if not 1 <= v <= instance.n_bits:
                raise CircuitError(f"clause {c}: variable {v} out of range")
        box = FilterBox(
            clause.kind,
            tuple(data_id(v) for v in clause.vars),
            _ancilla_ids(f"c{pos + 1}", _ANCILLAS[clause.kind]),
            lam,
        )
        box.apply(b)
    for v in range(1, instance.n_bits + 1):
        b.gate(data_id(v), Boost(lam))
    circuit = b.build()
    if mode == "teleport":
        circuit = insert_teleportation(circuit, lam)
    return circuit


# --------------------------------------------------------------------------
# row surgery


def compact_rows(circuit: CircuitGraph) -> CircuitGraph:
    """Collapse each run of consecutive identity gates to a single identity."""
    new_qubits = []
    row_map: dict[tuple[str, int], int] = {}
    for q in circuit.qubits:
        gates: list[Slot] = []
        for j, g in enumerate(q.gates, start=1):
            if isinstance(g, Unitary) and g.is_identity and gates and isinstance(gates[-1], Unitary) and gates[-1].is_identity:
                continue
            gates.append(g)
            row_map[(q.id, j)] = len(gates)
        new_qubits.append(QubitColumn(q.id, len(gates) + 1, q.boundary, tuple(gates)))
    links = tuple(
        replace(
            lk,
            control_row=row_map[(lk.control, lk.control_row)],
            target_row=row_map[(lk.target, lk.target_row)],
        )
        for lk in circuit.links
    )
    return CircuitGraph(tuple(new_qubits), links, circuit.eps)


def pad_first_transition(circuit: CircuitGraph) -> CircuitGraph:
    """Ensure every qubit's first transition is an identity term.

    Qubits whose first transition is anything else get an extra identity
    row right after the boundary row.
    """
    new_qubits = []
    shift: dict[str, int] = {}
    for q in circuit.qubits:
        first = q.gates[0] if q.gates else None
        if isinstance(first, Unitary) and first.is_identity:
            new_qubits.append(q)
            shift[q.id] = 0
        else:
            new_qubits.append(QubitColumn(q.id, q.n_rows + 1, q.boundary, (I_GATE,) + q.gates))
            shift[q.id] = 1
    links = tuple(
        replace(
            lk,
            control_row=lk.control_row + shift[lk.control],
            target_row=lk.target_row + shift[lk.target],
        )
        for lk in circuit.links
    )
    return CircuitGraph(tuple(new_qubits), links, circuit.eps)


def _merge_unitaries(slots: list) -> list:
    """Fold runs of single-qubit unitaries into one term; drop identities."""
    out: list = []
    for s in slots:
        g = s[0]
        if isinstance(g, Unitary) and out and isinstance(out[-1][0], Unitary):
            prev = out.pop()[0]
            g = Unitary(g.matrix @ prev.matrix, f"{g.name}*{prev.name}")
            s = (g,) + tuple(s[1:])
        out.append(s)
    return [s for s in out if not (isinstance(s[0], Unitary) and s[0].is_identity)]


def _infer_lambda(circuit: CircuitGraph) -> float:
    lams = [g.lam for q in circuit.qubits for g in q.gates if isinstance(g, (Boost, Projection))]
    return max(lams) if lams else 1.0


def insert_teleportation(circuit: CircuitGraph, lam: float | None = None) -> CircuitGraph:
    """Split qubits between consecutive control terms with teleportation boxes.

    Box layout for data qubit D: fresh A (|0>, H, CNOT A->B, CNOT D->A as
    target, P(0)) and fresh B (|0>, CNOT A->B as target, then D's remaining
    gates).  D itself ends with CNOT D->A, H, P(0).  Post-selecting D and A
    on |0> hands D's state to B without Pauli corrections.

    A qubit is split after every control term except its last; a qubit
    marked ``continues`` is split after its last one too, so the next
    clause starts on a fresh short column.  Links tagged ``teleport``
    (the boxes' own CNOTs) never trigger splits.
    """
    if lam is None:
        lam = _infer_lambda(circuit)
    # slot list per qubit: (gate, original link index or None)
    link_at: dict[tuple[str, int], int] = {}
    for k, lk in enumerate(circuit.links):
        link_at[(lk.control, lk.control_row)] = k
        link_at[(lk.target, lk.target_row)] = k

    new_cols: list[tuple[str, BoundarySpec, list]] = []
    # extra links: (ctrl_col, ctrl_slot_key, tgt_col, tgt_slot_key)
    new_links: list[tuple] = []
    orig_pos: dict[int, dict[str, tuple[str, object]]] = {}
    touched = False

    for q in circuit.qubits:
        control_js = [
            j for j, g in enumerate(q.gates, start=1)
            if isinstance(g, LinkSlot) and circuit.links[link_at[(q.id, j)]].tag != "teleport"
        ]
        cuts = control_js[:-1] if q.terminal != TERMINAL_CONTINUES else control_js
        if not cuts:
            slots = [(g, link_at.get((q.id, j))) for j, g in enumerate(q.gates, start=1)]
            new_cols.append((q.id, q.boundary, slots))
            continue
        touched = True
        bounds = [0] + cuts + [q.n_rows - 1]
        segment_id = q.id
        incoming = None  # (A id) feeding this segment
        for s in range(len(bounds) - 1):
            lo, hi = bounds[s] + 1, bounds[s + 1]
            slots: list = []
            if incoming is not None:
                slots.append((LINK, ("tp", incoming, "B")))
            body = [(q.gate(j), link_at.get((q.id, j))) for j in range(lo, hi + 1)]
            slots.extend(_merge_unitaries(body))
            last = s == len(bounds) - 2
            boundary = q.boundary if incoming is None else BoundarySpec.zero()
            if last:
                new_cols.append((segment_id, boundary, slots))
                break
            box = f"{q.id}~t{s + 1}"
            a_id, b_id = f"{box}.A", f"{box}.B"
            slots.extend([(LINK, ("tp", box, "D")), (H_GATE, None), (Projection(0, lam), None)])
            new_cols.append((segment_id, boundary, slots))
            new_cols.append(
                (
                    a_id,
                    BoundarySpec.zero(),
                    [(H_GATE, None), (LINK, ("tp", box, "AB")), (LINK, ("tp", box, "DA")), (Projection(0, lam), None)],
                )
            )
            new_links.append((box, segment_id, a_id, b_id))
            segment_id, incoming = b_id, box
            # the B column is appended when its own segment closes

    if not touched:
        return circuit

    # resolve rows
    position: dict[object, tuple[str, int]] = {}
    qubits = []
    for qid, boundary, slots in new_cols:
        gates = []
        for row, (g, key) in enumerate(slots, start=1):
            gates.append(g)
            if key is None:
                continue
            if isinstance(key, tuple):
                box, role = key[1], key[2]
                tag_key = (box, role, qid)
                position[tag_key] = (qid, row)
            else:
                position.setdefault(("orig", key), [])
                position[("orig", key)].append((qid, row))
        qubits.append(QubitColumn(qid, len(gates) + 1, boundary, tuple(gates)))

    links = []
    for k, lk in enumerate(circuit.links):
        sides = position[("orig", k)]
        # each original link contributes one slot on control side and one on target side;
        # the control side lives on a column descended from lk.control
        ctrl = next(p for p in sides if _descends(p[0], lk.control))
        tgt = next(p for p in sides if _descends(p[0], lk.target) and p is not ctrl)
        links.append(CnotLink(ctrl[0], ctrl[1], tgt[0], tgt[1], lk.tag))
    for box, d_id, a_id, b_id in new_links:
        a_ab = position[(box, "AB", a_id)]
        b_ab = position[(box, "B", b_id)]
        d_da = position[(box, "D", d_id)]
        a_da = position[(box, "DA", a_id)]
        links.append(CnotLink(a_ab[0], a_ab[1], b_ab[0], b_ab[1], "teleport"))
        links.append(CnotLink(d_da[0], d_da[1], a_da[0], a_da[1], "teleport"))
    out = CircuitGraph(tuple(qubits), tuple(links), circuit.eps)
    validate(out).raise_if_invalid()
    return out


def _descends(column_id: str, qid: str) -> bool:
    return column_id == qid or column_id.startswith(qid + "~")


# --------------------------------------------------------------------------
# calibration circuits


def six_row_qubit(alpha: float, lam: float, n_rows: int = 6) -> CircuitGraph:
    """Identity rows ending in P(0, lam); boundary 10(I + alpha sz - sqrt(1-alpha^2) sx)."""
    gates = [I_GATE] * (n_rows - 2) + [Projection(0, lam)]
    return CircuitGraph((new_qubit("q", n_rows, BoundarySpec.from_alpha(alpha), gates),))


def boost_qubit(lam: float, n_rows: int = 6) -> CircuitGraph:
    gates = [I_GATE] * (n_rows - 2) + [Boost(lam)]
    return CircuitGraph((new_qubit("q", n_rows, BoundarySpec.plus(), gates),))


def projection_qubit(lam: float, n_rows: int = 6) -> CircuitGraph:
    """Projection onto |0> of a qubit prepared in |0>, so the projected fraction is 1."""
    gates = [I_GATE] * (n_rows - 2) + [Projection(0, lam)]
    return CircuitGraph((new_qubit("q", n_rows, BoundarySpec.zero(), gates),))


def cnot_pair(lam: float, pad: int = 2) -> CircuitGraph:
    """Control in |+>, target in |0>; ``pad`` identity rows either side of the CNOT."""
    b = CircuitBuilder()
    b.add_qubit("c", BoundarySpec.plus())
    b.add_qubit("t", BoundarySpec.zero())
    for q in "ct":
        for _ in range(pad):
            b.gate(q, I_GATE)
    b.cnot("c", "t")
    for q in "ct":
        for _ in range(pad - 1):
            b.gate(q, I_GATE)
        b.gate(q, Boost(lam))
    return b.build()


def teleport_box(b: CircuitBuilder, data: str, lam: float, name: str) -> str:
    """Append a teleportation box after ``data``'s current rows; returns the fresh column."""
    a_id, b_id = f"{name}.A", f"{name}.B"
    b.add_qubit(a_id, BoundarySpec.zero())
    b.add_qubit(b_id, BoundarySpec.zero())
    b.gate(a_id, H_GATE)
    b.cnot(a_id, b_id, "teleport")
    b.cnot(data, a_id, "teleport")
    b.gate(data, H_GATE).gate(data, Projection(0, lam))
    b.gate(a_id, Projection(0, lam))
    return b_id


def teleported_cnot(lam: float) -> CircuitGraph:
    """A CNOT whose qubits arrive through one teleportation box and leave
    through another; the outgoing columns end with a boost."""
    b = CircuitBuilder()
    b.add_qubit("c", BoundarySpec.plus())
    b.add_qubit("t", BoundarySpec.zero())
    c1, t1 = teleport_box(b, "c", lam, "c~in"), teleport_box(b, "t", lam, "t~in")
    b.cnot(c1, t1)
    c2, t2 = teleport_box(b, c1, lam, "c~out"), teleport_box(b, t1, lam, "t~out")
    b.gate(c2, Boost(lam)).gate(t2, Boost(lam))
    return b.build()


def with_lambda(circuit: CircuitGraph, lam: float) -> CircuitGraph:
    """Copy with every boost and projection factor set to ``lam``."""
    qubits = []
    for q in circuit.qubits:
        gates = tuple(
            Boost(lam) if isinstance(g, Boost)
            else Projection(g.gamma, lam) if isinstance(g, Projection)
            else g
            for g in q.gates
        )
        qubits.append(QubitColumn(q.id, q.n_rows, q.boundary, gates))
    return CircuitGraph(tuple(qubits), circuit.links, circuit.eps)


CALIBRATION = {
    "boost_qubit": boost_qubit,
    "projection_qubit": projection_qubit,
    "cnot_pair": cnot_pair,
    "teleported_cnot": teleported_cnot,
}


def calibration_circuit(name: str, lam: float) -> CircuitGraph:
    try:
        return CALIBRATION[name](lam)
    except KeyError:
        raise CircuitError(f"unknown calibration circuit {name!r}; choose from {sorted(CALIBRATION)}") from None


# --------------------------------------------------------------------------
# description files


def _gate_to_dict(g: Slot) -> dict:
    if isinstance(g, LinkSlot):
        return {"type": "cnot"}
    if isinstance(g, Boost):
        return {"type": "boost", "lambda": g.lam}
    if isinstance(g, Projection):
        return {"type": "projection", "gamma": g.gamma, "lambda": g.lam}
    if isinstance(g, ScheduleBoost):
        return {"type": "schedule_boost", "inv_lambda_prime": g.inv_lam_prime}
    m = np.asarray(g.matrix, dtype=complex)
    return {
        "type": "unitary",
        "name": g.name,
        "re": m.real.tolist(),
        "im": m.imag.tolist(),
    }


def _gate_from_dict(d: dict) -> Slot:
    kind = d["type"]
    if kind == "cnot":
        return LINK
    if kind == "boost":
        return Boost(float(d["lambda"]))
    if kind == "projection":
        return Projection(int(d["gamma"]), float(d["lambda"]))
    if kind == "schedule_boost":
        return ScheduleBoost(float(d["inv_lambda_prime"]))
    if kind == "unitary":
        m = np.array(d["re"], dtype=float)
        if "im" in d and np.any(np.array(d["im"])):
            m = m + 1j * np.array(d["im"], dtype=float)
        return Unitary(m, d.get("name", "U"))
    raise CircuitError(f"unknown gate type {kind!r}")


def circuit_to_dict(circuit: CircuitGraph) -> dict:
    return {
        "eps": circuit.eps,
        "qubits": [
            {
                "id": q.id,
                "rows": q.n_rows,
                "boundary": {"E": q.boundary.strength, "axis": list(q.boundary.axis)},
                "gates": [_gate_to_dict(g) for g in q.gates],
            }
            for q in circuit.qubits
        ],
        "links": [
            {
                "control": lk.control,
                "control_row": lk.control_row,
                "target": lk.target,
                "target_row": lk.target_row,
                "tag": lk.tag,
            }
            for lk in circuit.links
        ],
    }


def circuit_from_dict(data: dict) -> CircuitGraph:
    qubits = []
    for qd in data["qubits"]:
        bd = qd.get("boundary", {})
        boundary = BoundarySpec(float(bd.get("E", DEFAULT_BOUNDARY_STRENGTH)), tuple(bd.get("axis", (-1.0, 0.0, 0.0))))
        gates = tuple(_gate_from_dict(g) for g in qd["gates"])
        qubits.append(QubitColumn(qd["id"], int(qd.get("rows", len(gates) + 1)), boundary, gates))
    links = tuple(
        CnotLink(ld["control"], int(ld["control_row"]), ld["target"], int(ld["target_row"]), ld.get("tag", ""))
        for ld in data.get("links", ())
    )
    return CircuitGraph(tuple(qubits), links, float(data.get("eps", 1.0)))


def dump_circuit(circuit: CircuitGraph, path) -> None:
    with open(path, "w") as fh:
        json.dump(circuit_to_dict(circuit), fh, indent=2)
        fh.write("\n")


def load_circuit(path) -> CircuitGraph:
    with open(path) as fh:
        return circuit_from_dict(json.load(fh))


def merge(circuits: Iterable[CircuitGraph]) -> CircuitGraph:
    """Side-by-side union of independent circuits."""
    circuits = list(circuits)
    return CircuitGraph(
        tuple(q for c in circuits for q in c.qubits),
        tuple(lk for c in circuits for lk in c.links),
        circuits[0].eps if circuits else 1.0,
    )
