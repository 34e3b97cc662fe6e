"""Command-line entry point: ``floer-eig {ring,box,cz,action,verify}``.

Exit codes: 0 success, 1 a requested check failed, 2 nothing found,
3 positivity violated (E <= max V), 64 bad flags, 65 unreadable input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import action, box, ring, verify
from .core import HamiltonianParams, PotentialSpec, parse_potential, positivity_margin, \
    potential_from_dict
from .czindex import cz_index
from .dynamics import default_steps, doubled_flow, linearized_flow
from .errors import DomainError, FloerEigError, ParseError, PositivityError, ScanRangeError

EXIT_OK, EXIT_FAIL, EXIT_NONE, EXIT_POSITIVITY, EXIT_USAGE, EXIT_PARSE = 0, 1, 2, 3, 64, 65
THREADS_ENV = "FLOER_EIG_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _tau_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected MIN:MAX") from None
    if not 0 < lo < hi:
        raise argparse.ArgumentTypeError("need 0 < MIN < MAX")
    return lo, hi


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _add_system(p: argparse.ArgumentParser, required: bool = True):
    p.add_argument("--potential", required=required, metavar="PATH", help="potential document (JSON)")
    p.add_argument("--energy", type=float, required=required, metavar="E")
    p.add_argument("--c", type=float, default=0.5, help="energy shift c > 0 (default 0.5)")
    p.add_argument("--n", type=_positive_int, default=2, help="number of configuration planes (default 2)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="floer-eig", description="Energy eigenstates from Hamiltonian orbits.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pr = sub.add_parser("ring", help="periodic orbits and ring eigenstates")
    _add_system(pr)
    pr.add_argument("--tau-range", type=_tau_range, metavar="MIN:MAX")
    pr.add_argument("--grid", type=_positive_int, default=ring.DEFAULT_GRID)
    pr.add_argument("--profile-k", type=_positive_int,
                    help="profile samples (default: 512, doubled for long orbits)")
    pr.add_argument("--limit", type=_positive_int, help="keep only the first LIMIT orbits")
    pr.add_argument("--residual-tol", type=float, default=1e-4)
    pr.add_argument("--threads", type=_positive_int)
    pr.add_argument("--out", metavar="PATH")

    pb = sub.add_parser("box", help="Dirichlet chords and box eigenstates")
    _add_system(pb)
    pb.add_argument("--k", type=_positive_int, default=1, help="zero index of the chord (default 1)")
    pb.add_argument("--beta", type=float, help="plant the chord in both planes with phase BETA")
    pb.add_argument("--profile-k", type=_positive_int,
                    help="profile samples (default: 512, doubled for long chords)")
    pb.add_argument("--residual-tol", type=float, default=1e-4)
    pb.add_argument("--threads", type=_positive_int)
    pb.add_argument("--out", metavar="PATH")

    pc = sub.add_parser("cz", help="Conley-Zehnder index of a linearised flow")
    _add_system(pc, required=False)
    pc.add_argument("--tau", type=float, help="flow duration")
    pc.add_argument("--doubled", action="store_true", help="use the doubled chord flow over [0, 2 tau]")
    pc.add_argument("--steps", type=_positive_int)
    pc.add_argument("--result", metavar="PATH", help="take system and tau from a ring/box result")
    pc.add_argument("--expect", type=int, help="fail unless the index equals this value")
    pc.add_argument("--out", metavar="PATH")

    pa = sub.add_parser("action", help="action-period identity on solver results")
    pa.add_argument("--result", required=True, metavar="PATH")
    pa.add_argument("--N", type=_positive_int, default=256)
    pa.add_argument("--tol", type=float, default=1e-5)
    pa.add_argument("--eps", type=float, default=1e-2, help="gradient bound for the multiplier check")
    pa.add_argument("--flow-log", metavar="PATH", help="write a gradient flow line (CSV) from the first loop")
    pa.add_argument("--s-max", type=float, default=0.01)
    pa.add_argument("--out", metavar="PATH")

    pv = sub.add_parser("verify", help="finite-difference check of stored profiles")
    pv.add_argument("--result", required=True, metavar="PATH")
    pv.add_argument("--tol", type=float, default=1e-4)
    pv.add_argument("--bc-tol", type=float, default=verify.BOUNDARY_TOL)
    pv.add_argument("--out", metavar="PATH")
    return parser


# --- helpers --------------------------------------------------------------------------

def _threads(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            v = int(env)
        except ValueError:
            raise UsageError(f"{THREADS_ENV}={env!r} is not an integer") from None
        if v < 1:
            raise UsageError(f"{THREADS_ENV} must be >= 1")
        return v
    return os.cpu_count() or 1


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc


def _system(args) -> tuple[HamiltonianParams, PotentialSpec]:
    spec = parse_potential(_read(args.potential))
    try:
        params = HamiltonianParams(args.energy, args.c, args.n)
    except DomainError as exc:
        raise UsageError(str(exc)) from exc
    m = positivity_margin(params, spec)
    if m <= 0:
        raise PositivityError(m)
    return params, spec


def _emit(doc, out: str | None):
    text = json.dumps(doc, sort_keys=True, indent=1) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load_results(path: str) -> list[dict]:
    try:
        doc = json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    sols = doc.get("solutions", [doc]) if isinstance(doc, dict) else None
    if not isinstance(sols, list) or not sols:
        raise ParseError(f"{path}: expected a result document")
    need = {"kind", "potential", "energy", "c", "n", "tau_star", "psi"}
    for i, s in enumerate(sols):
        if not isinstance(s, dict) or s.get("kind") not in ("ring", "box"):
            raise ParseError(f"{path}: solution {i} is not a ring or box result")
        missing = sorted(need - set(s))
        if missing:
            raise ParseError(f"{path}: solution {i} lacks {missing}")
        rows = s["psi"]
        if not isinstance(rows, list) or not all(isinstance(r, list) and len(r) == 3 for r in rows):
            raise ParseError(f"{path}: solution {i} field 'psi' must be rows of [x, re, im]")
    return sols


def _doc_system(doc: dict) -> tuple[HamiltonianParams, PotentialSpec]:
    spec = potential_from_dict(doc["potential"])
    try:
        return HamiltonianParams(float(doc["energy"]), float(doc["c"]), int(doc["n"])), spec
    except (TypeError, ValueError) as exc:
        raise ParseError(f"result system fields: {exc}") from exc


def _verified(report: dict, tol: float) -> bool:
    return bool(report["bc_pass"]) and report["max_residual_rel"] <= tol


# --- commands ----------------------------------------------------------------------------

def cmd_ring(args) -> int:
    params, spec = _system(args)
    try:
        sols = ring.solve_ring(params, spec, args.tau_range, args.grid, _threads(args),
                               args.profile_k, args.limit)
    except ScanRangeError as exc:
        print(f"floer-eig ring: {exc}", file=sys.stderr)
        return EXIT_NONE
    docs = []
    for s in sols:
        rep = verify.verification_report(s.eigenstate, spec)
        rep["verified"] = _verified(rep, args.residual_tol)
        docs.append(ring.ring_document(s, params, spec, rep))
    _emit({"solutions": docs}, args.out)
    return EXIT_OK if any(d["verification"]["verified"] for d in docs) else EXIT_NONE


def cmd_box(args) -> int:
    params, spec = _system(args)
    try:
        sol = box.solve_box(params, spec, args.k, args.profile_k, args.beta, _threads(args))
    except ScanRangeError as exc:
        print(f"floer-eig box: {exc}", file=sys.stderr)
        return EXIT_NONE
    rep = verify.verification_report(sol.eigenstate, spec)
    rep["verified"] = _verified(rep, args.residual_tol)
    _emit({"solutions": [box.box_document(sol, params, spec, rep)]}, args.out)
    return EXIT_OK if rep["verified"] else EXIT_NONE


def cmd_cz(args) -> int:
    if args.result:
        doc = _load_results(args.result)[0]
        params, spec = _doc_system(doc)
        tau = float(doc["tau_star"])
        doubled = doc["kind"] == "box" or args.doubled
    else:
        if args.potential is None or args.energy is None or args.tau is None:
            raise UsageError("cz needs --result, or --potential, --energy and --tau")
        params, spec = _system(args)
        tau, doubled = args.tau, args.doubled
    if not tau > 0:
        raise UsageError("tau must be positive")
    if doubled:
        flow = doubled_flow(params, spec, tau, args.steps)
    else:
        flow = linearized_flow(params, spec, tau, args.steps or default_steps(params, spec, tau))
    rep = cz_index(flow)
    doc = rep.to_dict()
    doc["certified"] = rep.min_angle_rate > 0
    doc["doubled"] = bool(doubled)
    if doubled:
        doc["chord_index"] = rep.index // 2 if rep.index % 2 == 0 else None
    ok = doc["certified"] and (args.expect is None or args.expect == rep.index)
    _emit(doc, args.out)
    return EXIT_OK if ok else EXIT_FAIL


def _rebuild_trajectory(doc, params, spec):
    tau = float(doc["tau_star"])
    K = len(doc["psi"]) - (1 if doc["kind"] == "box" else 0)
    if doc["kind"] == "ring":
        return ring.build_periodic_orbit(params, spec, tau, K)[0]
    return box.build_chord(params, spec, tau, K)


def cmd_action(args) -> int:
    reports = []
    ok = True
    first_loop = None
    for doc in _load_results(args.result):
        params, spec = _doc_system(doc)
        traj = _rebuild_trajectory(doc, params, spec)
        loop = action.loop_from_trajectory(params, spec, traj, args.N)
        refined = action.newton_refine(params, spec, loop)
        bounds = [action.check_multiplier_bound(params, spec, it, args.eps).holds for it in refined.iterates]
        chk = action.check_action_period(params, spec, refined.loop)
        mb = action.check_multiplier_bound(params, spec, refined.loop, args.eps)
        passed = chk.gap <= args.tol and mb.holds and all(bounds)
        ok &= passed
        reports.append({
            "kind": doc["kind"], "tau_star": doc["tau_star"], "eta": refined.loop.eta,
            "action": chk.action, "eta_c": chk.eta_c, "relative_gap": chk.gap,
            "newton_iterations": refined.iterations, "grad_norm": refined.history[-1].grad_norm,
            "multiplier_bound": {"holds": mb.holds, "alpha": mb.alpha, "lhs": mb.lhs, "rhs": mb.rhs},
            "pass": passed,
        })
        if first_loop is None:
            first_loop = (params, spec, refined.loop)
    if args.flow_log:
        params, spec, loop = first_loop
        line = action.flow_line(params, spec, loop, args.s_max)
        with open(args.flow_log, "w", encoding="utf-8") as fh:
            fh.write(line.to_csv())
    _emit({"reports": reports, "tol": args.tol}, args.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args) -> int:
    reports = []
    for doc in _load_results(args.result):
        params, spec = _doc_system(doc)
        prof = ring.profile_from_document(doc)
        res = verify.schrodinger_residual(prof, spec)
        bc = verify.boundary_check(prof, args.bc_tol)
        reports.append({
            "kind": doc["kind"], "tau_star": doc["tau_star"],
            "max_residual_rel": res.max_rel, "rms_residual_rel": res.rms_rel,
            "bc_pass": bc.passed, "bc_magnitudes": list(bc.magnitudes),
            "norm": verify.l2_norm(prof),
            "pass": bool(bc.passed and res.max_rel <= args.tol),
        })
    _emit({"reports": reports, "tol": args.tol}, args.out)
    return EXIT_OK if all(r["pass"] for r in reports) else EXIT_FAIL


COMMANDS = {"ring": cmd_ring, "box": cmd_box, "cz": cmd_cz, "action": cmd_action, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"floer-eig {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"floer-eig {args.command}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except PositivityError as exc:
        print(f"floer-eig {args.command}: positivity violation, margin {exc.margin:.6g}", file=sys.stderr)
        return EXIT_POSITIVITY
    except FloerEigError as exc:
        print(f"floer-eig {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
