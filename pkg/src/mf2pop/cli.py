"""Command line entry point ``mf2pop``.

Exit codes: 0 success, 1 a check failed, 2 invalid input (schema violation,
missing file, grid mismatch), 3 solver failure, 4 fixed point not converged.
"""

import argparse
import json
import sys
import warnings

from . import __version__
from .errors import MF2PopError
from .fp import BoundaryMassWarning
from .runner import (
    EXIT_CHECK,
    EXIT_INPUT,
    EXIT_OK,
    EXIT_SOLVER,
    InputMismatch,
    compare_dirs,
    run_lq,
    run_particles,
    run_pde,
)
from .scenario import Scenario, ScenarioError, packaged_scenarios


def _parser():
    p = argparse.ArgumentParser(prog="mf2pop", description="Two-population mean field solvers")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default: $MF2POP_OUT/<name> or ./mf2pop_out/<name>)")
    common.add_argument("--strict", action="store_true", help="treat warnings as errors")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="solve the coupled PDE system of a scenario")
    r.add_argument("scenario", help="scenario file, or the name of a packaged scenario")

    lq = sub.add_parser("lq", parents=[common], help="integrate the LQ ODE/Riccati reduction")
    lq.add_argument("scenario")

    pa = sub.add_parser("particles", parents=[common], help="particle validation against the FP solve")
    pa.add_argument("scenario")
    pa.add_argument("--seed", type=int, help="first seed (overrides the scenario)")
    pa.add_argument("--threads", type=int, default=1, help="worker threads across seeds")

    c = sub.add_parser("compare", parents=[common], help="distance between two run directories")
    c.add_argument("run_a")
    c.add_argument("run_b")
    c.add_argument("--tolerance", type=float, default=2e-7)

    sub.add_parser("list-scenarios", help="list packaged scenarios")
    return p


def _list():
    for name, path in sorted(packaged_scenarios().items()):
        desc = json.loads(path.read_text()).get("description", "")
        print(f"{name:<16} {desc}")
    return EXIT_OK


def _dispatch(args):
    if args.command == "list-scenarios":
        return _list()
    if args.command == "compare":
        report = compare_dirs(args.run_a, args.run_b, args.tolerance, out=args.out)
        for name, f in report["fields"].items():
            status = "PASS" if f["passed"] else "FAIL"
            print(f"{name:<4} sup={f['sup']:.6e} l1={f['l1']:.6e} tol={args.tolerance:.3e}  {status}")
        return EXIT_OK if report["passed"] else EXIT_CHECK
    scn = Scenario.load(args.scenario)
    if args.command == "run":
        code, _, _, out = run_pde(scn, out=args.out, strict=args.strict)
    elif args.command == "lq":
        code, _, _, out = run_lq(scn, out=args.out)
    else:
        code, _, _, out = run_particles(scn, out=args.out, seed=args.seed, threads=args.threads, strict=args.strict)
    print(f"wrote {out}")
    return code


def main(argv=None):
    args = _parser().parse_args(argv)
    with warnings.catch_warnings():
        if getattr(args, "strict", False):
            warnings.simplefilter("error", BoundaryMassWarning)
        try:
            return _dispatch(args)
        except ScenarioError as exc:
            print(f"error: schema violation at {exc}", file=sys.stderr)
            return EXIT_INPUT
        except (InputMismatch, FileNotFoundError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
        except (MF2PopError, BoundaryMassWarning) as exc:
            print(f"error: solver failure: {exc}", file=sys.stderr)
            return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
