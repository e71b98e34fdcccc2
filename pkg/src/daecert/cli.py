"""Command-line front end.

Subcommands ``check-cq``, ``verify``, ``solve`` and ``report``.  Exit codes:
0 pass/certified, 1 fail/refuted, 2 inconclusive, 3 input error, 4 solver not
converged.  Every report is written as sorted-key JSON, so identical
invocations give byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .certificate import Certificate, CertificateError, VerifyConfig, verify_certificate
from .cq import CqOptions, InfeasiblePointError, check_along_trajectory, check_calmness_sufficient
from .problem import ProblemError, load_problem
from .transcribe import NotConvergedError, SolveOptions, TranscriptionError, solve_and_verify

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2, 3, 4

_SEVERITY = {"fail": 2, "refuted": 2, "inconclusive": 1, "pass": 0, "established": 0, "n/a": -1}


class InputError(Exception):
    """Bad command-line input; mapped to exit code 3."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(message)


def exit_code(report: dict) -> int:
    """Exit code as a pure function of a report's contents."""
    if report.get("kind") == "not-converged":
        return EXIT_NOT_CONVERGED
    status = report.get("overall", report.get("outcome"))
    return {"pass": EXIT_PASS, "established": EXIT_PASS, "fail": EXIT_FAIL, "refuted": EXIT_FAIL,
            "inconclusive": EXIT_INCONCLUSIVE}.get(status, EXIT_INPUT)


def _dump(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def _emit(report: dict, out: str | None):
    text = _dump(report)
    if out:
        Path(out).write_text(text)
    sys.stdout.write(text)


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def _verify_config(args) -> VerifyConfig:
    for name in ("tol_feas", "tol_euler", "tol_weier", "tol_trans"):
        if getattr(args, name) <= 0:
            raise InputError(f"--{name.replace('_', '-')} must be positive")
    if args.samples < 1:
        raise InputError("--samples must be positive")
    return VerifyConfig(
        tol_feas=args.tol_feas, tol_euler=args.tol_euler, tol_trans=args.tol_trans,
        tol_weier=args.tol_weier, seed=args.seed, weier_samples=args.samples,
        multiplier_bound=getattr(args, "multiplier_bound", False),
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_check_cq(args) -> dict:
    problem = load_problem(args.problem)
    sys_ = problem.constraint_system()
    if args.trajectory:
        data = _read_json(args.trajectory)
        if isinstance(data, dict) and "points" in data:
            points = np.asarray(data["points"], dtype=float)
        elif isinstance(data, dict) and "mesh" in data:
            cert = Certificate.from_dict(data, problem)
            cert.check_dims(problem)
            w = cert.w_for(problem)
            points = np.stack([problem.join(cert.x[i], w[i], cert.u[i]) for i in range(cert.mesh.size)])
        else:
            raise InputError("trajectory file needs 'points' or certificate fields")
    elif args.point is not None:
        points = np.atleast_2d(np.asarray(json.loads(args.point), dtype=float))
    else:
        points = np.zeros((1, problem.n))
    if points.ndim != 2 or points.shape[1] != problem.n:
        raise InputError(f"points must have {problem.n} coordinates in layout order {problem.layout.names}")
    opts = CqOptions(seed=args.seed, feas_tol=args.tol_feas)
    try:
        reports, summary = check_along_trajectory(sys_, points, args.mode, opts, tube_samples=args.tube_samples)
    except InfeasiblePointError as exc:
        raise InputError(str(exc)) from None
    out = {
        "kind": "check-cq",
        "problem": problem.name,
        "layout": problem.layout.names,
        "mode": args.mode,
        "outcome": summary["outcome"],
        "points": [r.to_dict() for r in reports],
        "tube": [{"mesh_index": i, **r.to_dict()} for i, r in summary["tube"]],
        "notes": summary["notes"],
        "tolerances": {"feasibility": opts.feas_tol, "cone": opts.tol, "seed": args.seed},
    }
    return out


def _verify_one(problem, cert, cfg):
    return verify_certificate(cert, problem, cfg).to_dict()


def cmd_verify(args) -> dict:
    problem = load_problem(args.problem)
    cert = Certificate.from_dict(_read_json(args.certificate), problem)
    cfg = _verify_config(args)
    if args.lambda0 == "both":
        reports = []
        for l0 in (0, 1):
            c = Certificate(cert.mesh, cert.x, cert.u, cert.p, l0, cert.w, cert.lam, cert.mu, cert.radius)
            reports.append(_verify_one(problem, c, cfg))
        statuses = [r["overall"] for r in reports]
        overall = "pass" if "pass" in statuses else ("inconclusive" if "inconclusive" in statuses else "fail")
        return {"kind": "verify-both", "overall": overall, "reports": reports, "tolerances": cfg.tolerances()}
    if args.lambda0 is not None:
        cert = Certificate(cert.mesh, cert.x, cert.u, cert.p, int(args.lambda0), cert.w, cert.lam, cert.mu, cert.radius)
    return _verify_one(problem, cert, cfg)


def cmd_solve(args) -> dict:
    problem = load_problem(args.problem)
    cfg = _verify_config(args)
    if args.mesh_n < 2:
        raise InputError("--mesh-n must be at least 2")
    try:
        cert, report = solve_and_verify(problem, args.mesh_n, args.scheme, SolveOptions(), cfg)
    except NotConvergedError as exc:
        st = exc.solution.stats if exc.solution is not None else {}
        return {"kind": "not-converged", "overall": "not-converged", "message": str(exc),
                "diagnostics": {k: v for k, v in st.items() if k != "history"},
                "history": st.get("history", [])}
    cert_path = args.certificate_out
    if cert_path is None and args.out:
        cert_path = str(Path(args.out).with_suffix("")) + ".certificate.json"
    if cert_path:
        Path(cert_path).write_text(_dump(cert.to_dict(problem)))
    out = report.to_dict()
    out["certificate"] = cert_path
    return out


def render_table(reports: list) -> str:
    """Text table of condition x status x worst residual x location, worst first."""
    rows = []
    for name, rep in reports:
        if not isinstance(rep, dict):
            raise InputError(f"{name}: not a report object")
        kind = rep.get("kind")
        if kind == "verify":
            for c in rep.get("conditions", []):
                rows.append((name, c["name"], c["status"], c.get("worst"), c.get("location")))
        elif kind == "verify-both":
            for sub in rep["reports"]:
                for c in sub.get("conditions", []):
                    rows.append((f"{name} (lambda0={sub['lambda0']})", c["name"], c["status"], c.get("worst"), c.get("location")))
        elif kind == "check-cq":
            for i, pt in enumerate(rep.get("points", [])):
                for v in pt["verdicts"]:
                    st = {"certified": "pass", "refuted": "fail"}.get(v["status"], "inconclusive")
                    if not v.get("applicable", True):
                        st = "n/a"
                    rows.append((name, v["name"], st, None, f"point {i}"))
        elif kind == "not-converged":
            rows.append((name, "solver", "fail", rep.get("diagnostics", {}).get("feasibility"), None))
        else:
            raise InputError(f"{name}: unknown report kind {kind!r}")

    def sev(st):
        return _SEVERITY.get(st.split(" ")[0], 1)

    def where(loc):
        # mesh indices sort numerically, other labels after them
        text = str(loc)
        digits = text.rsplit(" ", 1)[-1]
        return (0, int(digits), text) if digits.isdigit() else (1, 0, text)

    rows.sort(key=lambda r: (-sev(r[2]), r[0], r[1], where(r[4])))
    header = ("report", "condition", "status", "worst", "location")
    cells = [header] + [
        (r[0], r[1], r[2].upper(), "-" if r[3] is None else (r[3] if isinstance(r[3], str) else f"{r[3]:.3e}"),
         "-" if r[4] is None else str(r[4]))
        for r in rows
    ]
    widths = [max(len(str(c[k])) for c in cells) for k in range(5)]
    lines = ["  ".join(str(c[k]).ljust(widths[k]) for k in range(5)).rstrip() for c in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def cmd_report(args) -> tuple:
    if not args.reports:
        raise InputError("report needs at least one report file")
    reps = [(p, _read_json(p)) for p in args.reports]
    text = render_table(reps)
    worst = max((exit_code(r) for _, r in reps), key=lambda c: {0: 0, 2: 1, 1: 2, 4: 3, 3: 4}[c])
    return text, worst


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for every sampler (default 0)")
    common.add_argument("--tol-feas", type=float, default=1e-8)
    common.add_argument("--tol-euler", type=float, default=1e-6)
    common.add_argument("--tol-trans", type=float, default=1e-8)
    common.add_argument("--tol-weier", type=float, default=1e-6)
    common.add_argument("--samples", type=int, default=100, help="Weierstrass samples per node")
    common.add_argument("--mesh-n", type=int, default=50)
    common.add_argument("--scheme", choices=("trapezoidal", "implicit-euler"), default="trapezoidal")
    common.add_argument("--lambda0", choices=("0", "1", "both"), default=None)
    common.add_argument("--out", default=None, help="also write the report here")

    p = _Parser(prog="daecert", description="Constraint-qualification checks and certificate verification for DAE optimal control.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    c = sub.add_parser("check-cq", parents=[common], help="run the constraint-qualification ladder")
    c.add_argument("problem")
    c.add_argument("--point", help="JSON list of coordinates in layout order (default: origin)")
    c.add_argument("--trajectory", help="certificate file or {'points': [...]} file")
    c.add_argument("--mode", choices=("along", "tube"), default="along")
    c.add_argument("--tube-samples", type=int, default=0)

    v = sub.add_parser("verify", parents=[common], help="verify a certificate")
    v.add_argument("problem")
    v.add_argument("certificate")
    v.add_argument("--multiplier-bound", action="store_true", help="also check the multiplier estimate")

    s = sub.add_parser("solve", parents=[common], help="transcribe, solve, extract and verify")
    s.add_argument("problem")
    s.add_argument("--certificate-out", default=None)
    s.add_argument("--multiplier-bound", action="store_true")

    r = sub.add_parser("report", parents=[common], help="render report files as a table")
    r.add_argument("reports", nargs="*")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise InputError("missing subcommand")
        if args.command == "report":
            text, code = cmd_report(args)
            if args.out:
                Path(args.out).write_text(text)
            sys.stdout.write(text)
            return code
        handler = {"check-cq": cmd_check_cq, "verify": cmd_verify, "solve": cmd_solve}[args.command]
        report = handler(args)
    except (InputError, ProblemError, CertificateError, TranscriptionError) as exc:
        print(f"daecert: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    _emit(report, args.out)
    return exit_code(report)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
