"""Command-line entry point: ``bose3body <subcommand> [--config FILE] [flags]``.

Every run writes its artifacts, the resolved configuration and a manifest
(config hash, versions, wall time, failures) into the output directory.

Exit codes: 0 success, 1 assertion failure, 2 configuration error,
3 resource or ceiling error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, config_hash, resolve
from .functionals import B_CRIT, ModelParams, interaction_gaps
from .grid import Grid

log = logging.getLogger("bose3body")

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3
WORKERS_ENV = "BOSE3BODY_WORKERS"


# ---------------------------------------------------------------- config -> objects


def make_kernels(cfg):
    from .potentials import ThreeBodyKernel, TwoBodyKernel, load_kernel

    k = cfg["kernel"]
    if k["two_body"] == "gaussian":
        U = TwoBodyKernel.gaussian(k["two_body_sigma"])
    else:
        try:
            U = load_kernel(k["two_body"])
        except (OSError, ValueError) as exc:
            raise ConfigError("kernel.two_body", str(exc)) from None
        if not isinstance(U, TwoBodyKernel):
            raise ConfigError("kernel.two_body", "file holds a three-body kernel")
    if k["three_body"] == "gaussian":
        W = ThreeBodyKernel.gaussian(k["three_body_sigma"])
    else:
        try:
            W = load_kernel(k["three_body"])
        except (OSError, ValueError) as exc:
            raise ConfigError("kernel.three_body", str(exc)) from None
        if not isinstance(W, ThreeBodyKernel):
            raise ConfigError("kernel.three_body", "file holds a two-body kernel")
    return U, W


def make_params(cfg) -> ModelParams:
    U, W = make_kernels(cfg)
    m = cfg["model"]
    return ModelParams(a=m["a"], b=m["b"], s=m["s"], alpha=m["alpha"], beta=m["beta"], N=m["N"],
                       two_body=U, three_body=W, allow_delta=cfg["kernel"]["allow_delta"])


def make_grid(cfg) -> Grid:
    return Grid(cfg["grid"]["L"], cfg["grid"]["M"])


def make_solver(cfg, **kw):
    from .solver import SolverConfig

    s = dict(cfg["solver"])
    s["init_file"] = s["init_file"] or None
    s["kinetic_ceiling"] = s["kinetic_ceiling"] or None
    if s["init"] == "file" and not s["init_file"]:
        raise ConfigError("solver.init_file", "required when solver.init = 'file'")
    s.update(kw)
    return SolverConfig(**s)


def worker_count(cfg) -> int:
    n = cfg["workers"]
    return n if n > 0 else (os.cpu_count() or 1)


def pool_map(fn, items, workers: int):
    """Order-preserving map, across processes when workers > 1."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------- output helpers


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, columns, rows) -> None:
    """CSV with '# name: definition' header lines, then a name row, then data."""
    buf = io.StringIO()
    for name, desc in columns:
        buf.write(f"# {name}: {desc}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([name for name, _ in columns])
    for r in rows:
        w.writerow([fmt(v) for v in r])
    path.write_text(buf.getvalue())


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def write_profile(path: Path, field) -> None:
    g = field.grid
    data = np.column_stack([g.x, field.values.real, field.values.imag, field.density])
    np.savetxt(path, data, fmt="%.17g",
               header="x: grid point | re_u: real part | im_u: imaginary part | density: |u|^2")


class Run:
    def __init__(self, name, cfg, out: Path):
        self.name = name
        self.cfg = cfg
        self.out = out
        self.failures = []
        self.artifacts = []
        self.t0 = time.perf_counter()
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name) -> Path:
        self.artifacts.append(name)
        return self.out / name

    def check(self, ok: bool, what: str, **detail):
        if not ok:
            self.failures.append({"check": what, **detail})
            log.warning("assertion failed: %s %s", what, detail or "")
        return ok

    def finish(self, status_code: int):
        import scipy

        write_json(self.out / "resolved_config.json", self.cfg)
        write_json(self.out / "manifest.json", {
            "subcommand": self.name,
            "config_sha256": config_hash(self.cfg),
            "versions": {"bose3body": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "wall_time_s": round(time.perf_counter() - self.t0, 3),
            "exit_code": status_code,
            "artifacts": sorted(set(self.artifacts)),
            "failures": self.failures,
        })
        return status_code


# ---------------------------------------------------------------- subcommands


def cmd_gns_verify(run: Run):
    from .gns import GnsReference

    rows = GnsReference(make_grid(run.cfg)).certification_rows()
    write_csv(run.path("certification.csv"),
              [("quantity", "checked quantity"), ("computed", "value on the grid"),
               ("reference", "closed-form value"), ("abs_error", "|computed - reference|"),
               ("tolerance", "acceptance tolerance"), ("passed", "true if within tolerance")], rows)
    for r in rows:
        run.check(bool(r[5]), r[0], computed=r[1], reference=r[2])
        print(f"{'PASS' if r[5] else 'FAIL'}  {r[0]:<32} {r[1]:.15g}")


def _solve(run: Run, kind: str):
    from .solver import CollapseDetected, minimize

    cfg = run.cfg
    params = make_params(cfg)
    grid = make_grid(cfg)
    try:
        rep = minimize(kind, params, make_solver(cfg), grid, N=params.N if kind == "hartree" else None)
    except CollapseDetected as exc:
        rep = exc.report
        run.check(False, "collapse", energy=rep.energies[-1], kinetic=rep.kinetics[-1])
    write_profile(run.path("profile.txt"), rep.field)
    info = {"kind": kind, "status": rep.status, "converged": rep.converged, "iterations": rep.iterations,
            "residual": rep.residual, "mu": rep.mu, "energy": rep.breakdown.as_dict()}
    write_json(run.path("energy.json"), info)
    write_csv(run.path("trace.csv"), [("iteration", "descent step"), ("energy", "energy after the step"),
                                      ("kinetic", "||u'||^2 after the step")],
              [(i, e, k) for i, (e, k) in enumerate(zip(rep.energies, rep.kinetics))])
    run.check(rep.converged, "converged", status=rep.status, residual=rep.residual)
    print(f"{kind} ground state: E = {rep.energy:.12g} ({rep.status}, {rep.iterations} iterations)")


def cmd_nls_solve(run):
    _solve(run, "nls")


def cmd_hartree_solve(run):
    _solve(run, "hartree")


def expected_phase(a: float, b: float) -> str:
    if b < B_CRIT or (b == B_CRIT and a > 0):
        return "minimizer"
    if b == B_CRIT and a == 0:
        return "marginal"
    return "collapse"


def _phase_cell(args):
    from .solver import phase_diagram

    a, b, cfg = args
    base = make_params(cfg)
    pt = phase_diagram([a], [b], s=base.s, grid=make_grid(cfg),
                       config=make_solver(cfg, init="gaussian", instability_probe=True), base=base)[0]
    return pt


def cmd_phase_diagram(run: Run):
    cfg = run.cfg
    cells = [(a, b, cfg) for b in cfg["phase"]["b_values"] for a in cfg["phase"]["a_values"]]
    points = pool_map(_phase_cell, cells, worker_count(cfg))
    rows = []
    for pt in points:
        exp = expected_phase(pt.a, pt.b)
        rows.append((pt.a, pt.b, pt.b / B_CRIT, pt.label, exp, pt.energy, pt.kinetic, pt.iterations, pt.status))
        run.check(pt.label == exp, "phase classification", a=pt.a, b=pt.b, label=pt.label, expected=exp)
        print(f"a = {pt.a:+.3f}  b/b* = {pt.b / B_CRIT:.4f}  ->  {pt.label}")
    write_csv(run.path("phase.csv"),
              [("a", "two-body coupling"), ("b", "three-body coupling"), ("b_over_bcrit", "b / (3 pi^2 / 2)"),
               ("label", "observed phase"), ("expected", "phase predicted by the existence theorem"),
               ("energy", "last energy of the descent"), ("kinetic", "last ||u'||^2"),
               ("iterations", "descent steps"), ("status", "solver status")], rows)


def _regime(cfg):
    from .collapse import CollapseRegime

    r = cfg["regime"]
    return CollapseRegime(zeta=r["zeta"], s=cfg["model"]["s"], driver=r["driver"], c=r["c"], p=r["p"],
                          kappa=r["kappa"])


def cmd_collapse_sweep(run: Run):
    from .collapse import fit_rate, hartree_collapse_sweep, nls_collapse_sweep, sweep_csv

    cfg = run.cfg
    r = cfg["regime"]
    regime = _regime(cfg)
    if regime.degenerate:
        log.warning("zeta = 12(s+1)/s: leading energy coefficient vanishes; energy ratio is undefined")
    solver = make_solver(cfg)
    if r["kind"] == "nls":
        rows = nls_collapse_sweep(regime, r["n_values"], solver, L=r["L"], points_per_scale=r["points_per_scale"])
    else:
        m = cfg["model"]
        rows = hartree_collapse_sweep(regime, r["N_values"], r["eta"], alpha=m["alpha"], beta=m["beta"],
                                      ell0=r["ell0"], config=solver, base=make_params(cfg), L=r["L"],
                                      points_per_scale=r["points_per_scale"])
    text = sweep_csv(rows)
    run.path("sweep.csv").write_text(text)
    ok = [x for x in rows if x.ok]
    run.check(len(ok) == len(rows), "all sweep points converged",
              failed=[x.n for x in rows if not x.ok])
    d = [x.h1_to_q0 for x in ok]
    run.check(all(b < a for a, b in zip(d, d[1:])), "H1 distance to Q0 decreasing", distances=d)
    summary = {"zeta": regime.zeta, "s": regime.s, "kind": r["kind"], "degenerate": regime.degenerate,
               "energy_coefficient": regime.energy_coefficient, "points": len(rows)}
    if not regime.degenerate:
        dev = [abs(x.energy_ratio - 1) for x in ok]
        summary["energy_ratio_deviation"] = dev
        run.check(all(b <= a for a, b in zip(dev, dev[1:])), "energy ratio approaching 1", deviations=dev)
    if r["kind"] == "hartree":
        rel = [abs(x.energy / x.energy_nls - 1) for x in ok]
        summary["hartree_nls_relative_gap"] = rel
        run.check(all(b < a for a, b in zip(rel, rel[1:])), "E_H / E_NLS -> 1", gaps=rel)
    if len(ok) >= 3:
        fe = fit_rate([x.ell for x in ok], [abs(x.energy) for x in ok])
        fd = fit_rate([x.ell for x in ok], [max(x.h1_to_q0, 1e-300) for x in ok])
        summary["fit_energy_vs_ell"] = {"exponent": fe.exponent, "prefactor": fe.prefactor, "r2": fe.r2}
        summary["fit_h1_vs_ell"] = {"exponent": fd.exponent, "prefactor": fd.prefactor, "r2": fd.r2}
    write_json(run.path("summary.json"), summary)
    print(text, end="")


def _ed_cell(args):
    from .manybody import run_ed

    N, cfg = args
    mb = cfg["manybody"]
    res = run_ed(make_params(cfg), N, mb["K"], Grid(mb["L"], mb["M"]), solver_config=make_solver(cfg),
                 seed=cfg["seed"])
    return res.summary(), res.gamma1.matrix


def cmd_manybody_ed(run: Run):
    cfg = run.cfg
    mb = cfg["manybody"]
    out = pool_map(_ed_cell, [(N, cfg) for N in mb["N_values"]], worker_count(cfg))
    summaries = []
    for summary, gamma in out:
        summaries.append(summary)
        run.check(summary["E_Q_per_particle"] <= summary["E_H_restricted"] + 1e-8,
                  "E_Q <= E_H restricted", N=summary["N"])
        if mb["dump_gamma"]:
            np.savetxt(run.path(f"gamma1_N{summary['N']}.txt"), gamma, fmt="%.17g",
                       header=f"one-particle density matrix in the mode basis, N = {summary['N']}")
        print(json.dumps(summary))
    write_json(run.path("ed.json"), summaries)


def _compare_cell(args):
    from .solver import minimize

    N, cfg, start = args
    params = make_params(cfg).with_(N=float(N))
    grid = make_grid(cfg)
    rep = minimize("hartree", params, make_solver(cfg, init="previous"), grid, N=N, previous=start)
    from .gns import q0_field

    g2, g3 = interaction_gaps(q0_field(grid), params, N)
    return rep.energy, rep.status, g2, g3


def cmd_compare(run: Run):
    from .solver import minimize

    cfg = run.cfg
    params = make_params(cfg)
    grid = make_grid(cfg)
    rn = minimize("nls", params, make_solver(cfg), grid)
    Ns = cfg["compare"]["N_values"]
    res = pool_map(_compare_cell, [(N, cfg, rn.field) for N in Ns], worker_count(cfg))
    rows = []
    for N, (eh, status, g2, g3) in zip(Ns, res):
        rows.append((N, eh, rn.energy, abs(eh - rn.energy), g2, g3, status))
        print(f"N = {N:g}: E_H = {eh:.12g}  E_NLS = {rn.energy:.12g}  |gap| = {abs(eh - rn.energy):.3e}")
    write_csv(run.path("compare.csv"),
              [("N", "particle number"), ("E_hartree", "Hartree ground-state energy"),
               ("E_nls", "NLS ground-state energy"), ("abs_gap", "|E_hartree - E_nls|"),
               ("gap2_q0", "int Q0^4 - iint U_N Q0^2 Q0^2"), ("gap3_q0", "int Q0^6 - iiint W_N Q0^2 Q0^2 Q0^2"),
               ("status", "Hartree solver status")], rows)
    gaps = [r[3] for r in rows]
    run.check(all(b < a for a, b in zip(gaps, gaps[1:])), "|E_H - E_NLS| decreasing", gaps=gaps)


COMMANDS = {
    "gns-verify": cmd_gns_verify,
    "nls-solve": cmd_nls_solve,
    "hartree-solve": cmd_hartree_solve,
    "phase-diagram": cmd_phase_diagram,
    "collapse-sweep": cmd_collapse_sweep,
    "manybody-ed": cmd_manybody_ed,
    "compare": cmd_compare,
}


# ---------------------------------------------------------------- argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--out", help="output directory (output.dir)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, e.g. --set grid.M=4096 (repeatable)")
    common.add_argument("--seed", help="random seed")
    common.add_argument("--workers", help=f"worker processes (overrides ${WORKERS_ENV}; 0 = all cores)")
    common.add_argument("-v", "--verbose", action="count", default=0)
    for flag in ("a", "b", "s", "alpha", "beta", "N", "L", "M"):
        common.add_argument(f"--{flag}", dest=f"flag_{flag}", metavar="X",
                            help=f"shortcut for the {flag} config key (b accepts e.g. 1.05bcrit)")

    p = argparse.ArgumentParser(prog="bose3body", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gns-verify", parents=[common], help="certify Q0 and its sharp constants")
    sub.add_parser("nls-solve", parents=[common], help="NLS ground state")
    sub.add_parser("hartree-solve", parents=[common], help="Hartree ground state")
    ph = sub.add_parser("phase-diagram", parents=[common], help="classify (a, b) points")
    ph.epilog = "--a and --b take comma-separated lists here"
    cs = sub.add_parser("collapse-sweep", parents=[common], help="blow-up sweep along a collapse regime")
    cs.add_argument("--zeta")
    cs.add_argument("--kind", choices=["nls", "hartree"])
    cs.add_argument("--n-values", dest="n_values")
    cs.add_argument("--N-values", dest="N_values")
    ed = sub.add_parser("manybody-ed", parents=[common], help="exact diagonalization at small N")
    ed.add_argument("--K")
    ed.add_argument("--N-values", dest="N_values")
    cmp_ = sub.add_parser("compare", parents=[common], help="Hartree vs NLS energies over N")
    cmp_.add_argument("--N-values", dest="N_values")
    return p


def overrides_from_args(args) -> dict:
    ov = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(item, "--set expects KEY=VALUE")
        k, v = item.split("=", 1)
        ov[k.strip()] = _literal(v.strip())
    if args.out:
        ov["output.dir"] = args.out
    if args.seed is not None:
        ov["seed"] = args.seed
    cmd = args.command
    for flag in ("a", "b"):
        v = getattr(args, f"flag_{flag}")
        if v is not None:
            ov[f"phase.{flag}_values" if cmd == "phase-diagram" else f"model.{flag}"] = v
    for flag in ("s", "alpha", "beta", "N"):
        v = getattr(args, f"flag_{flag}")
        if v is not None:
            ov[f"model.{flag}"] = v
    for flag in ("L", "M"):
        v = getattr(args, f"flag_{flag}")
        if v is not None:
            ov[f"manybody.{flag}" if cmd == "manybody-ed" else f"grid.{flag}"] = v
    if getattr(args, "zeta", None) is not None:
        ov["regime.zeta"] = args.zeta
    if getattr(args, "kind", None) is not None:
        ov["regime.kind"] = args.kind
    if getattr(args, "n_values", None) is not None:
        ov["regime.n_values"] = args.n_values
    if getattr(args, "K", None) is not None:
        ov["manybody.K"] = args.K
    if getattr(args, "N_values", None) is not None:
        key = {"manybody-ed": "manybody.N_values", "compare": "compare.N_values"}.get(cmd, "regime.N_values")
        ov[key] = args.N_values
    return ov


def _literal(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    from .manybody import CeilingError
    from .potentials import ResolutionError
    from .collapse import RegimeError
    from .solver import UnstableParameters

    try:
        ov = overrides_from_args(args)
        env = os.environ.get(WORKERS_ENV)
        if env is not None and args.workers is None:
            ov["workers"] = env
        if args.workers is not None:
            ov["workers"] = args.workers
        cfg = resolve(args.config, ov)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run = Run(args.command, cfg, Path(cfg["output"]["dir"]))
    try:
        COMMANDS[args.command](run)
    except (ConfigError, UnstableParameters, RegimeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        run.failures.append({"check": "configuration", "error": str(exc)})
        return run.finish(EXIT_CONFIG)
    except (CeilingError, ResolutionError, MemoryError) as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        run.failures.append({"check": "resources", "error": str(exc)})
        return run.finish(EXIT_RESOURCE)
    code = EXIT_ASSERT if run.failures else EXIT_OK
    if run.failures:
        print(f"{len(run.failures)} check(s) failed; see {run.out / 'manifest.json'}", file=sys.stderr)
    return run.finish(code)


if __name__ == "__main__":
    sys.exit(main())
