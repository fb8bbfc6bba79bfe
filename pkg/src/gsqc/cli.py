"""Command-line front end.

Every subcommand writes tab-delimited text: ``#`` comment lines carrying the
run configuration, one column-header line, then one row per result.  The
same arguments and seed give byte-identical output.

Exit codes: 0 success, 1 soundness violation, 2 invalid input or circuit,
3 eigensolver failure, 4 dimension guard.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Sequence

import numpy as np

from . import __version__
from .circuit_model import (
    CALIBRATION,
    CircuitError,
    CircuitGraph,
    TERMINAL_PROJECTION,
    calibration_circuit,
    chain_filters,
    load_circuit,
    pad_first_transition,
    six_row_qubit,
    validate,
    with_lambda,
)
from .gap_rules import (
    ProjectionFraction,
    RuleError,
    filter_gap_formula,
    fit_power_law,
    predict_gap,
)
from .hamiltonian import DEFAULT_MAX_DIM, DimensionError
from .sat_frontend import (
    InstanceError,
    SoundnessError,
    brute_force,
    choose_lambda,
    compare_readout,
    load_instance,
)
from .solver import (
    SolverError,
    final_row_readout,
    gap_along_schedule,
    history_state,
    solve_circuit,
)

EXIT_OK = 0
EXIT_UNSOUND = 1
EXIT_INVALID = 2
EXIT_SOLVER = 3
EXIT_DIMENSION = 4

SWEEP_COLUMNS = ("sweep", "parameter", "E0", "E1", "gap", "P_all_final", "iterations", "residual")


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


class Output:
    """Collects comment lines and rows, writes them once at the end."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.lines = [f"# gsqc {__version__} {command}"]
        for key in sorted(vars(args)):
            if key in ("func", "out", "workers"):
                continue
            self.lines.append(f"# {key}={getattr(args, key)}")

    def comment(self, text: str) -> None:
        self.lines.append(f"# {text}")

    def header(self, cols: Sequence[str]) -> None:
        self.lines.append("\t".join(cols))

    def row(self, values: Sequence) -> None:
        self.lines.append("\t".join(_fmt(v) for v in values))

    def write(self, path: str | None) -> None:
        text = "\n".join(self.lines) + "\n"
        if path in (None, "-"):
            sys.stdout.write(text)
        else:
            with open(path, "w") as fh:
                fh.write(text)


# --------------------------------------------------------------------------
# argument helpers


def parse_grid(spec: str) -> list[float]:
    """``lo:hi:n`` for n log-spaced points, or a comma list."""
    spec = spec.strip()
    if ":" in spec:
        try:
            lo, hi, n = spec.split(":")
            lo, hi, n = float(lo), float(hi), int(n)
        except ValueError:
            raise ValueError(f"bad grid {spec!r}; expected lo:hi:n") from None
        if n < 1 or lo <= 0 or hi < lo:
            raise ValueError(f"bad grid {spec!r}")
        return [float(x) for x in np.geomspace(lo, hi, n)]
    vals = [float(t) for t in spec.split(",") if t.strip()]
    if not vals:
        raise ValueError("empty grid")
    return vals


def parse_floats(specs: Sequence[str] | None, default: Sequence[float]) -> list[float]:
    if not specs:
        return list(default)
    return [float(t) for s in specs for t in s.split(",") if t.strip()]


def parse_order(spec: str | None) -> list[int] | None:
    """1-based clause positions, comma separated."""
    if not spec:
        return None
    return [int(t) - 1 for t in spec.split(",") if t.strip()]


def _solver_kw(args) -> dict:
    return {"seed": args.seed, "max_dim": args.max_dim}


def _residual(r) -> float:
    return max(r.residuals) if r.residuals else 0.0


def _sweep_row(name, param, circuit, kw):
    r = solve_circuit(circuit, **kw)
    ro = final_row_readout(r, circuit)
    return (name, param, r.e0, r.e1, r.gap, ro.p_all_final, r.iterations, _residual(r))


def _run_points(jobs, workers: int):
    """Solve sweep points, optionally in a process pool; order is preserved."""
    if workers <= 1 or len(jobs) <= 1:
        return [_sweep_row(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_row, *zip(*jobs)))


def _circuit_arg(spec: str, lam: float | None) -> CircuitGraph:
    if spec in CALIBRATION:
        return calibration_circuit(spec, lam if lam is not None else 10.0)
    c = load_circuit(spec)
    return with_lambda(c, lam) if lam is not None else c


def _compile(args, lam: float | None = None):
    """Instance -> (circuit, instance, lambda)."""
    inst = load_instance(args.instance)
    order = parse_order(args.order)
    if lam is None:
        lam = args.lam
    if lam is None:
        probe = chain_filters(inst, order, 1.0, args.mode)
        lam = choose_lambda(len(probe.qubits), target_p=args.target_p)
    return chain_filters(inst, order, lam, args.mode), inst, lam


# --------------------------------------------------------------------------
# subcommands


def cmd_gap_sweep(args) -> int:
    out = Output("gap-sweep", args)
    alphas = parse_floats(args.alpha, (0.0, 0.9, 0.99))
    grid = parse_grid(args.lambda_grid or "1:1000:31")
    for alpha in alphas:
        ref = six_row_qubit(alpha, 1.0)
        psi = history_state(ref, normalize=False)
        n = ref.qubits[0].n_rows
        a, b = psi[2 * (n - 2)], psi[2 * (n - 2) + 1]
        ratio = abs(a) / abs(b) if b != 0 else math.inf
        star = math.sqrt(1.0 + (1.0 / ratio) ** 2) if ratio > 0 else math.inf
        out.comment(f"alpha={alpha:g} a/b={ratio:.6g} lambda_star={star:.6g}")
    out.header(SWEEP_COLUMNS)
    jobs = [
        (f"alpha={alpha:g}", lam, six_row_qubit(alpha, lam), _solver_kw(args))
        for alpha in alphas
        for lam in grid
    ]
    for row in _run_points(jobs, args.workers):
        out.row(row)
    out.write(args.out)
    return EXIT_OK


def cmd_scaling(args) -> int:
    out = Output("scaling", args)
    grid = parse_grid(args.lambda_grid or "10:100:7")
    circuits = [(lam, _circuit_arg(args.circuit, lam)) for lam in grid]
    pred = predict_gap(circuits[-1][1], lam=grid[-1], rule=args.rule)
    out.comment(f"dimension={circuits[0][1].dimension}")
    out.header(SWEEP_COLUMNS)
    rows = _run_points([(args.circuit, lam, c, _solver_kw(args)) for lam, c in circuits], args.workers)
    for row in rows:
        out.row(row)
    gaps = [(r[1], r[4]) for r in rows if r[4] > 0]
    if len(gaps) >= 3:
        fit = fit_power_law(gaps)
        out.comment(f"fitted_exponent={fit.exponent:.6g} residual={fit.residual:.3g}")
    else:
        out.comment("fitted_exponent=nan (need three positive gaps)")
    out.comment(f"predicted_exponent={pred.exponent} argmin={pred.argmin}")
    out.write(args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    out = Output("solve", args)
    if bool(args.instance) == bool(args.circuit):
        raise ValueError("give exactly one of --instance or --circuit")
    ledger = None
    if args.instance:
        circuit, inst, lam = _compile(args)
        ledger = brute_force(inst, parse_order(args.order))
        data_ids = [f"z{v}" for v in range(1, inst.n_bits + 1)]
    else:
        circuit = _circuit_arg(args.circuit, args.lam)
        lam = args.lam
        data_ids = circuit.ids
    validate(circuit).raise_if_invalid()
    r = solve_circuit(circuit, **_solver_kw(args))
    ro = final_row_readout(r, circuit)
    out.comment(f"lambda={_fmt(lam)} qubits={len(circuit.qubits)} dimension={circuit.dimension} sector={r.sector_dim}")
    out.comment(f"E0={_fmt(r.e0)} E1={_fmt(r.e1)} gap={_fmt(r.gap)} degeneracy={r.degeneracy} method={r.method}")
    out.comment(f"P_all_final={_fmt(ro.p_all_final)} no_readout={ro.no_readout}")
    status = EXIT_OK
    if ledger is not None:
        diag = compare_readout(ro, ledger, data_ids)
        out.comment(f"oracle_solutions={','.join(ledger.final_set) or '-'}")
        out.comment(f"tv_distance={_fmt(diag.tv_distance)} missing={','.join(diag.missing) or '-'}")
        if diag.outside_support:
            out.comment(f"outside_support={diag.outside_support}")
            status = EXIT_UNSOUND
    out.header(("bits", "probability"))
    if not ro.no_readout:
        for bits, p in sorted(ro.marginal(data_ids).items()):
            if p > args.cutoff:
                out.row((bits, p))
    out.write(args.out)
    return status


def _ledger_fractions(circuit: CircuitGraph, ledger) -> dict[str, ProjectionFraction]:
    """Projected ancillas of box j get the surviving fraction sqrt(S_j / S_{j-1})."""
    fracs = {}
    for pos, (s_prev, s_next) in enumerate(zip(ledger.counts, ledger.counts[1:]), start=1):
        for q in circuit.qubits:
            if q.id.startswith(f"c{pos}.") and q.terminal == TERMINAL_PROJECTION and s_next > 0:
                fracs[q.id] = ProjectionFraction.from_solution_counts(s_prev, s_next)
    return fracs


def cmd_estimate(args) -> int:
    out = Output("estimate", args)
    if bool(args.instance) == bool(args.circuit):
        raise ValueError("give exactly one of --instance or --circuit")
    ledger = None
    if args.instance:
        circuit, inst, lam = _compile(args)
        if args.ledger:
            ledger = brute_force(inst, parse_order(args.order))
    else:
        circuit = _circuit_arg(args.circuit, args.lam)
        lam = args.lam
    fractions = _ledger_fractions(circuit, ledger) if ledger is not None else None
    est = predict_gap(circuit, fractions, lam=lam, rule=args.rule)
    for line in est.report().splitlines():
        if line.startswith("#"):
            out.comment(line.lstrip("# "))
    out.comment(f"time_cost~{est.time_cost:.6g}")
    out.header(("qubit", "inv_x", "lambda_power", "factors"))
    for qid, ix in est.per_qubit.items():
        out.row((qid, ix.value, -ix.x.power, " ".join(ix.factors) or "-"))
    if ledger is not None:
        out.header(("filter", "clause", "S_j", "S_j+1", "gap", "lambda_overhead"))
        for pos, (clause, s_j, s_j1) in enumerate(zip(ledger.clauses, ledger.counts, ledger.counts[1:]), start=1):
            gap = filter_gap_formula(lam, s_j, s_j1, circuit.eps)
            overhead = math.sqrt(s_j / s_j1) if s_j1 else math.inf
            out.row((pos, str(clause), s_j, s_j1, gap, overhead))
    out.write(args.out)
    return EXIT_OK


def cmd_schedule(args) -> int:
    out = Output("schedule", args)
    if bool(args.instance) == bool(args.circuit):
        raise ValueError("give exactly one of --instance or --circuit")
    if args.instance:
        inst = load_instance(args.instance)
        n_bits = args.n_bits or inst.n_bits
        lam = math.sqrt(args.d_param * n_bits)
        circuit = chain_filters(inst, parse_order(args.order), max(lam, 1.0), args.mode)
    else:
        circuit = _circuit_arg(args.circuit, None)
        n_bits = args.n_bits or sum(1 for q in circuit.ids if q.startswith("z")) or len(circuit.qubits)
    end = 1.0 / math.sqrt(args.d_param * n_bits)
    if end > 1.0:
        raise ValueError(f"D*N = {args.d_param * n_bits:g} must be at least 1")
    stage2 = [float(x) for x in np.linspace(0.0, 1.0, args.points)]
    stage3 = [float(x) for x in np.linspace(1.0, end, args.points)]
    trace = gap_along_schedule(circuit, stage2, stage3, args.d_param, n_bits, seed=args.seed)
    n = max(q.n_rows for q in pad_first_transition(circuit).qubits)
    start = trace.stage(2)[0].gap
    out.comment(f"longest_length={n} eps/n^2={_fmt(circuit.eps / n**2)} stage2_start_ratio={_fmt(start * n**2 / circuit.eps)}")
    rises = trace.increases(3, 0.05)
    out.comment("stage3_monotone=" + ("yes" if not rises else "no " + " ".join(f"{a:.4g}->{b:.4g}" for a, b in rises)))
    out.header(("stage", "parameter", "E0", "gap"))
    for p in trace.points:
        out.row((f"stage{p.stage}", p.parameter, p.e0, p.gap))
    out.write(args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    out = Output("oracle", args)
    inst = load_instance(args.instance)
    ledger = brute_force(inst, parse_order(args.order), max_bits=args.max_bits)
    out.comment(f"N={inst.n_bits} M={inst.n_clauses} alpha={inst.alpha:.6g} satisfiable={ledger.satisfiable}")
    out.comment("solutions=" + (",".join(ledger.final_set) or "-"))
    text = ledger.to_text().splitlines()
    out.lines.extend(text)
    out.write(args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gsqc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, solve=True):
        sp.add_argument("--out", default="-", help="output file (default stdout)")
        if solve:
            sp.add_argument("--seed", type=int, default=0)
            sp.add_argument("--max-dim", type=int, default=DEFAULT_MAX_DIM)
            sp.add_argument("--workers", type=int, default=1)

    def instance_flags(sp):
        sp.add_argument("--instance")
        sp.add_argument("--circuit")
        sp.add_argument("--order", help="clause order, 1-based, comma separated")
        sp.add_argument("--mode", choices=("compact", "teleport"), default="compact")
        sp.add_argument("--lambda", dest="lam", type=float)
        sp.add_argument("--target-p", type=float, default=math.exp(-1))

    sp = sub.add_parser("gap-sweep", help="gap vs lambda of the six-row projection qubit")
    sp.add_argument("--alpha", action="append", help="boundary alpha values (repeatable, comma lists ok)")
    sp.add_argument("--lambda-grid")
    common(sp)
    sp.set_defaults(func=cmd_gap_sweep)

    sp = sub.add_parser("scaling", help="gap power law of a calibration or JSON circuit")
    sp.add_argument("--circuit", required=True, help=f"one of {sorted(CALIBRATION)} or a circuit file")
    sp.add_argument("--lambda-grid")
    sp.add_argument("--rule", choices=("baseline", "modified"), default="baseline")
    common(sp)
    sp.set_defaults(func=cmd_scaling)

    sp = sub.add_parser("solve", help="compile, solve and read out")
    instance_flags(sp)
    sp.add_argument("--cutoff", type=float, default=1e-12)
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("estimate", help="counting-rule gap estimate")
    instance_flags(sp)
    sp.add_argument("--rule", choices=("baseline", "modified"), default="baseline")
    sp.add_argument("--ledger", action="store_true", help="use oracle solution counts for fractions")
    common(sp, solve=False)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("schedule", help="gap along the adiabatic preparation")
    instance_flags(sp)
    sp.add_argument("--d-param", type=float, default=2.0)
    sp.add_argument("--n-bits", type=int)
    sp.add_argument("--points", type=int, default=9)
    common(sp)
    sp.set_defaults(func=cmd_schedule)

    sp = sub.add_parser("oracle", help="brute-force solution-count ledger")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--order")
    sp.add_argument("--max-bits", type=int, default=24)
    common(sp, solve=False)
    sp.set_defaults(func=cmd_oracle)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        args.workers = os.cpu_count() or 1
    try:
        return args.func(args)
    except DimensionError as exc:
        print(f"gsqc: {exc}; try compact mode, compact_rows, or a smaller instance", file=sys.stderr)
        return EXIT_DIMENSION
    except SolverError as exc:
        print(f"gsqc: eigensolver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except SoundnessError as exc:
        print(f"gsqc: soundness violation: {exc}", file=sys.stderr)
        return EXIT_UNSOUND
    except (CircuitError, InstanceError, RuleError, ValueError, OSError, KeyError) as exc:
        print(f"gsqc: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
