"""Pipelines behind the command line: solve, check, persist."""

import os
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .coupled import Solution, pde_residuals, solve_system
from .errors import MF2PopError
from .fp import BoundaryMassWarning, check_boundary, first_moment, second_moment
from .grid import integrate
from .io import k_rows, lq_rows, read_field, write_field, write_json, write_table
from .lq import integrate_lq, reconstruct_value, riccati_residual
from .model import NonlocalAD, ProblemKind
from .particles import pooled_moments, simulate_many

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_NOT_CONVERGED = 4

DEFAULT_OUT = "mf2pop_out"


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    relation: str = "<="
    enforced: bool = True

    @classmethod
    def at_most(cls, name, value, threshold, enforced=True):
        value = float(value)
        return cls(name, value, float(threshold), bool(value <= threshold), "<=", enforced)

    @classmethod
    def above(cls, name, value, threshold, enforced=True):
        value = float(value)
        return cls(name, value, float(threshold), bool(value > threshold), ">", enforced)

    def line(self):
        status = "PASS" if self.passed else ("FAIL" if self.enforced else "WARN")
        return f"{self.name:<28} value={self.value:.6e} {self.relation} {self.threshold:.3e}  {status}"


class InputMismatch(MF2PopError):
    """Two result directories do not share a grid."""


def output_dir(name, out=None):
    """``out`` if given, else ``$MF2POP_OUT/<name>`` (default root ``./mf2pop_out``)."""
    if out is not None:
        path = Path(out)
    else:
        path = Path(os.environ.get("MF2POP_OUT", DEFAULT_OUT)) / name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _sup_distance(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def solution_distance(sa, sb):
    """(sup |m_a - m_b|, sup |u_a - u_b| over u_1, u_2)."""
    dm = _sup_distance(sa.m.values, sb.m.values)
    du = max(_sup_distance(sa.u[i], sb.u[i]) for i in (1, 2))
    return dm, du


def lq_value_error(sol, state, grid, fraction=0.8):
    """max |u - u_LQ| / max |u_LQ| over the central ``fraction`` of the domain and all times."""
    half = 0.5 * fraction * (grid.x_max - grid.x_min)
    mid = 0.5 * (grid.x_min + grid.x_max)
    c = np.abs(grid.x - mid) <= half + 1e-12
    err = ref = 0.0
    for i in (1, 2):
        exact = np.stack([reconstruct_value(state, grid.x[c], t, i) for t in grid.t])
        err = max(err, float(np.max(np.abs(sol.u[i][:, c] - exact))))
        ref = max(ref, float(np.max(np.abs(exact))))
    return err / ref


def fp_moments(sol, grid):
    """(nt + 1, 2, 2) first and second moments of the density trajectory."""
    m = sol.m.values
    return np.stack([first_moment(m, grid), second_moment(m, grid)], axis=-1).transpose(1, 0, 2)


def solve_checks(scn, sol, model, strict=False):
    grid, tol = scn.grid, scn.solve.tol
    checks = [Check.at_most("picard_residual", sol.final_residual, tol)]
    masses = integrate(sol.m.values, grid)
    checks.append(Check.at_most("mass_defect", np.max(np.abs(masses - 1.0)), 1e-8))
    checks.append(Check.at_most("negative_density", max(0.0, -float(sol.m.values.min())), 1e-12))
    res = pde_residuals(sol, model, grid)
    checks.append(Check.at_most("fp_discrete_residual", res["fp"], 10 * tol))
    checks.append(Check.at_most("hjb_discrete_residual", res["hjb"], 10 * tol))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryMassWarning)
        edge = check_boundary(sol.m.values, grid)
    checks.append(Check.at_most("boundary_density", edge, 1e-6, enforced=strict))
    if isinstance(model, NonlocalAD):
        defect = max(model.symmetry_defect(sol.m.values[k, n]) for k in range(2) for n in (0, grid.nt))
        checks.append(Check.at_most("kernel_symmetry", defect, 1e-12))
    return checks


def run_pde(scn, out=None, strict=False, log=print):
    """Solve a scenario, run its checks and write the artifact directory.

    Returns ``(exit_code, solution, checks, out_dir)``.
    """
    model = scn.model()
    out_dir = output_dir(scn.name, out)
    sol = solve_system(scn.kind, model, scn.rho0, scn.grid, scn.solve)
    checks = solve_checks(scn, sol, model, strict=strict)
    tol = scn.solve.tol

    if scn.family == "lq" and scn.kind in (ProblemKind.CMFC, ProblemKind.MFG):
        regime = "CMFC" if scn.kind is ProblemKind.CMFC else "CMFG"
        state = integrate_lq(regime, scn.lq_params(), scn.grid.nt)
        lim = scn.config.get("lq", {}).get("value_tolerance", 0.02)
        checks.append(Check.at_most("lq_value_rel_error", lq_value_error(sol, state, scn.grid), lim))
        mom = fp_moments(sol, scn.grid)[:, :, 0]
        rel = np.max(np.abs(mom - state.mbar[:, :, 0])) / max(1e-12, np.max(np.abs(state.mbar)))
        checks.append(Check.at_most("lq_mean_rel_error", rel, 0.01))

    variants = scn.config.get("checks", {})
    if "equivalent_to" in variants:
        other = scn.variant("equivalent_to")
        osol = solve_system(other.kind, other.model(), other.rho0, other.grid, other.solve)
        dm, du = solution_distance(sol, osol)
        factor = variants["equivalent_to"].get("factor", 2.0)
        checks.append(Check.at_most("equivalence_m", dm, factor * tol))
        checks.append(Check.at_most("equivalence_u", du, factor * tol))
    if "distinct_from" in variants:
        other = scn.variant("distinct_from")
        osol = solve_system(other.kind, other.model(), other.rho0, other.grid, other.solve)
        dm, du = solution_distance(sol, osol)
        factor = variants["distinct_from"].get("factor", 10.0)
        checks.append(Check.above("distinct_solution", max(dm, du), factor * tol))

    write_solution(out_dir, scn, sol)
    code = exit_code(sol, checks)
    write_summary(out_dir, scn, checks, code, sol)
    for c in checks:
        log(c.line())
    return code, sol, checks, out_dir


def write_solution(out_dir, scn, sol):
    grid = scn.grid
    for i in (1, 2):
        write_field(out_dir / f"m{i}.csv", grid, sol.m[i])
        write_field(out_dir / f"u{i}.csv", grid, sol.u[i])
        write_field(out_dir / f"v{i}.csv", grid, sol.controls[i - 1])
    for label in (-1, -2):
        if label in sol.u.labels:
            write_field(out_dir / f"u_minus{-label}.csv", grid, sol.u[label])
    hist = np.array(sol.residual_history, dtype=float)
    write_table(out_dir / "residuals.csv", ["iteration", "residual"], np.column_stack([np.arange(1, hist.size + 1), hist]))


def exit_code(sol, checks):
    if sol is not None and not sol.converged:
        return EXIT_NOT_CONVERGED
    if any(c.enforced and not c.passed for c in checks):
        return EXIT_CHECK
    return EXIT_OK


def write_summary(out_dir, scn, checks, code, sol=None, extra=None):
    summary = {
        "name": scn.name,
        "config_sha256": scn.hash,
        "problem": scn.kind.value,
        "family": scn.family,
        "grid": scn.grid.header(),
        "backend": _kernels.BACKEND,
        "checks": [asdict(c) for c in checks],
        "exit_code": code,
    }
    if isinstance(sol, Solution):
        summary.update(
            converged=sol.converged,
            iterations=sol.iterations,
            residual_history=list(sol.residual_history),
            warm_start=sol.warm_started,
        )
    if extra:
        summary.update(extra)
    write_json(out_dir / "summary.json", summary)


def run_lq(scn, out=None, log=print):
    """Integrate the LQ reduction of a scenario and write ``lq.csv``, ``K.csv`` and ``summary.json``."""
    if scn.family != "lq":
        raise InputMismatch("the lq command needs an lq model family")
    section = scn.config.get("lq", {})
    regime = section.get("regime", "CMFC" if scn.kind is ProblemKind.CMFC else "CMFG")
    nt = section.get("nt", scn.grid.nt)
    params = scn.lq_params()
    state = integrate_lq(regime, params, nt)
    checks = [
        Check.at_most("riccati_residual", riccati_residual(regime, params, state.K), 1e-6),
        Check.at_most("nu_relation", state.nu_relation_residual, 1e-6),
        Check.at_most("P_symmetry", np.max(np.abs(state.P - np.swapaxes(state.P, -1, -2))), 1e-12),
    ]
    if regime == "CMFC":
        checks.append(Check.at_most("K_symmetry", state.symmetry_defect(), 1e-8))
    out_dir = output_dir(scn.name, out)
    write_table(out_dir / "lq.csv", *lq_rows(state))
    write_table(out_dir / "K.csv", *k_rows(state))
    code = exit_code(None, checks)
    extra = {
        "regime": regime,
        "lq_nt": nt,
        "method": state.method,
        "picard_iterations": state.picard_iterations,
        "nu_relation_residual_alt": state.nu_relation_residual_alt,
        "k_ill_defined": state.k_ill_defined,
        "K0": state.K[0].tolist(),
    }
    write_summary(out_dir, scn, checks, code, extra=extra)
    for c in checks:
        log(c.line())
    return code, state, checks, out_dir


def run_particles(scn, out=None, seed=None, threads=1, strict=False, log=print):
    """Solve the PDE system, then compare particle and FP moments under the same feedback."""
    section = scn.config.get("particles")
    if section is None:
        raise InputMismatch("scenario has no particles block")
    model = scn.model()
    sol = solve_system(scn.kind, model, scn.rho0, scn.grid, scn.solve)
    base = section.get("seed", 0) if seed is None else seed
    n_seeds = section.get("seeds", 20)
    grid = scn.grid
    snap_steps = sorted({int(round(t / grid.dt)) for t in section.get("snapshots", [0.0, grid.T])})
    runs = simulate_many(model, sol.controls, scn.rho0, section["N"], range(base, base + n_seeds), grid, threads, snap_steps)
    checks = solve_checks(scn, sol, model, strict=strict)[:1]
    mean, se, z = moment_zscores(runs, sol, grid)
    factor = section.get("se_factor", 3.0)
    checks.append(Check.at_most("first_moment_z", np.max(z[1:, :, 0]), factor))
    checks.append(Check.at_most("second_moment_z", np.max(z[1:, :, 1]), factor))
    out_dir = output_dir(scn.name, out)
    fpm = fp_moments(sol, grid)
    cols = [grid.t]
    header = ["t"]
    for k in range(2):
        for j, nm in enumerate(("mean", "second")):
            header += [f"fp_{nm}{k + 1}", f"particle_{nm}{k + 1}", f"se_{nm}{k + 1}"]
            cols += [fpm[:, k, j], mean[:, k, j], se[:, k, j]]
    write_table(out_dir / "particle_moments.csv", header, np.column_stack(cols))
    first = runs[0]
    rows = [
        (grid.t[s], k + 1, p, first.snapshots[s][k, p])
        for s in snap_steps
        for k in range(2)
        for p in range(first.N)
    ]
    write_table(out_dir / "particles.csv", ["t", "population", "particle", "position"], rows)
    code = exit_code(sol, checks)
    write_summary(out_dir, scn, checks, code, sol, extra={"seeds": list(range(base, base + n_seeds)), "N": section["N"]})
    for c in checks:
        log(c.line())
    return code, (sol, runs), checks, out_dir


def moment_zscores(runs, sol, grid):
    """Pooled particle moments, their standard errors and |pooled - FP| / SE."""
    mean, se = pooled_moments(runs)
    fpm = fp_moments(sol, grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(mean - fpm) / se, np.where(np.abs(mean - fpm) > 1e-12, np.inf, 0.0))
    return mean, se, z


def compare_dirs(dir_a, dir_b, tolerance, out=None):
    """Per-field sup and L1 distances between two run directories; writes ``compare.json``."""
    dir_a, dir_b = Path(dir_a), Path(dir_b)
    fields = [f for f in ("m1", "m2", "u1", "u2", "v1", "v2") if (dir_a / f"{f}.csv").exists()]
    if not fields:
        raise InputMismatch(f"{dir_a} holds no field files")
    report = {"a": str(dir_a), "b": str(dir_b), "tolerance": tolerance, "fields": {}}
    for f in fields:
        pb = dir_b / f"{f}.csv"
        if not pb.exists():
            raise InputMismatch(f"{f}.csv missing in {dir_b}")
        ta, xa, va = read_field(dir_a / f"{f}.csv")
        tb, xb, vb = read_field(pb)
        if ta.shape != tb.shape or xa.shape != xb.shape or np.any(ta != tb) or np.any(xa != xb):
            raise InputMismatch(f"grid mismatch in {f}.csv")
        w = np.full(xa.size, xa[1] - xa[0])
        w[0] = w[-1] = 0.5 * w[0]
        diff = np.abs(va - vb)
        sup = float(diff.max())
        l1 = float((diff @ w).max())
        report["fields"][f] = {"sup": sup, "l1": l1, "passed": sup <= tolerance}
    report["passed"] = all(v["passed"] for v in report["fields"].values())
    out_dir = Path(out) if out is not None else dir_a
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "compare.json", report)
    return report
