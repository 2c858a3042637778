"""Command-line experiment runner.

Usage::

    nlwiener SUBCOMMAND [--config PATH] [--out DIR] [--seed N] [--threads N]

Subcommands: ``solve``, ``capacity``, ``wiener``, ``probe``, ``ineq``,
``scaling``. Every run writes ``manifest.json`` (config hash, seed, package
versions, output files, status) next to its CSV/JSON artifacts.

Exit codes:

* 0: success
* 2: usage or configuration error (nothing but possibly the manifest written)
* 3: solver did not converge (partial artifacts and the manifest are kept)
* 4: a check failed (inequality violation or empty feasible frontier)
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import __version__
from .capacity import SolverFailure, capacity_from_weights, write_capacity_report
from .config import ConfigError, ExperimentConfig, build_region, load_config
from .grid_kernel import assemble_weights, node_set, set_fft_workers
from .inequalities import estimate_functional_constants, run_battery
from .potential import ball_capacity_scaling, wiener_integral, wiener_profile
from .probe import probe_regularity
from .solver import ConvergenceError, DirichletProblem, dump_solution, solve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_CHECK_FAILED = 4

SUBCOMMANDS = ("solve", "capacity", "wiener", "probe", "ineq", "scaling")


class CheckFailed(RuntimeError):
    pass


class Run:
    """Output directory plus the list of artifacts written so far."""

    def __init__(self, out: Path):
        self.out = out
        self.files: list = []
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def write_json(self, name: str, obj) -> None:
        self.path(name).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serialisable: {type(x)!r}")


def _r(x) -> str:
    return repr(float(x))


# --------------------------------------------------------------------------
# subcommands


def _weights(cfg: ExperimentConfig):
    cfg.require("params", "grid")
    params = cfg.params.build()
    if params.n != len(cfg.grid.cells):
        raise ConfigError("params.n does not match the grid dimension")
    grid = cfg.grid.build()
    kernel = cfg.kernel.build(grid, params, cfg.seed)
    return params, grid, assemble_weights(grid, kernel, params, exterior=cfg.exterior)


def cmd_solve(cfg: ExperimentConfig, run: Run) -> None:
    """Solve a Dirichlet problem; writes solution.csv and summary.json."""
    cfg.require("solve")
    params, grid, W = _weights(cfg)
    free = node_set(grid, build_region(cfg.solve.domain, params.n))
    g = cfg.solve.boundary.build()(grid.nodes)
    try:
        sol = solve(DirichletProblem(W, free, g), cfg.solver.build())
    except ConvergenceError as exc:
        dump_solution(exc.best, run.path("solution.csv"))
        raise
    dump_solution(sol, run.path("solution.csv"))
    run.write_json("summary.json", {"iterations": sol.iterations, "residual": sol.final_residual,
                                    "energy": sol.final_energy, "free_nodes": free.count})


def cmd_capacity(cfg: ExperimentConfig, run: Run) -> None:
    """Capacity of K relative to Omega; writes capacity.csv and capacity.json."""
    cfg.require("capacity")
    params, grid, W = _weights(cfg)
    K = node_set(grid, build_region(cfg.capacity.K, params.n))
    Om = node_set(grid, build_region(cfg.capacity.Omega, params.n))
    res = capacity_from_weights(K, Om, W, cfg.solver.build())
    write_capacity_report([{"K": cfg.capacity.K.type, "Omega": cfg.capacity.Omega.type, "s": params.s,
                            "p": params.p, "value": res.value, "iterations": res.iterations,
                            "residual": res.residual}], run.path("capacity.csv"))
    run.write_json("capacity.json", {"value": res.value, "energy_breakdown": res.energy_breakdown,
                                     "K_nodes": K.count, "Omega_nodes": Om.count})


def cmd_wiener(cfg: ExperimentConfig, run: Run) -> None:
    """Wiener profile of a domain family; writes wiener_profile.csv and wiener_integral.json."""
    cfg.require("params", "wiener")
    params = cfg.params.build()
    sec = cfg.wiener
    fam = sec.family.build(params.n)
    prof = wiener_profile(fam.omega(), fam.anchor, sec.rho_min, sec.rho_max, params, levels=sec.levels,
                          config=cfg.solver.build(), cells_per_rho=sec.cells_per_rho,
                          spacing=sec.spacing, align=fam.align)
    prof.to_csv(run.path("wiener_profile.csv"))
    wi = wiener_integral(prof)
    run.write_json("wiener_integral.json", {"value": wi.value, "diagnostic": wi.diagnostic,
                                            "spread": wi.spread, "slope": wi.slope, "note": wi.note})


def cmd_probe(cfg: ExperimentConfig, run: Run) -> None:
    """Regularity probe across resolutions; writes oscillation.csv and probe.json."""
    cfg.require("params", "probe")
    params = cfg.params.build()
    sec = cfg.probe
    rep = probe_regularity(sec.family.build(params.n), sec.boundary.build(), params, sec.resolutions,
                           sec.radii, cfg.solver.build(), tuple(sec.wiener_radii))
    rep.to_csv(run.path("oscillation.csv"))
    run.path("probe.json").write_text(rep.to_json() + "\n")


def cmd_ineq(cfg: ExperimentConfig, run: Run) -> None:
    """Inequality battery; writes inequalities.csv/json (and functional.json)."""
    sec = cfg.ineq
    count = sec.count if sec else 100_000
    reports = run_battery(count, cfg.seed)
    with open(run.path("inequalities.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lemma", "params", "samples", "violations", "worst_margin",
                    "estimated_c", "estimated_C", "stability", "ok"])
        for r in reports:
            w.writerow([r.lemma, json.dumps(r.params, sort_keys=True), r.samples, r.violations,
                        _r(r.worst_margin), _r(r.estimated_c), _r(r.estimated_C), _r(r.stability), r.ok])
    run.write_json("inequalities.json", [r.to_dict() for r in reports])
    failed = [r for r in reports if not r.ok]
    if sec is not None and sec.functional is not None:
        cfg.require("params")
        params = cfg.params.build()
        fs = sec.functional
        rows = []
        for which in ("sobolev", "poincare1", "poincare2"):
            if which == "sobolev" and not params.p < params.n / params.s:
                continue
            rep = estimate_functional_constants(which, params, fs.R, fs.cells, fs.samples, cfg.seed)
            rows.append(rep.to_dict())
            if not rep.ok:
                failed.append(rep)
        run.write_json("functional.json", rows)
    if failed:
        raise CheckFailed(f"{len(failed)} inequality check(s) failed")


def cmd_scaling(cfg: ExperimentConfig, run: Run) -> None:
    """Ball capacity scaling; writes scaling.csv (r, cap) and scaling.json."""
    cfg.require("params", "scaling")
    params = cfg.params.build()
    sec = cfg.scaling
    rep = ball_capacity_scaling(params, sec.radii, sec.R, cfg.solver.build(), sec.cells_per_min_radius,
                                sec.exterior)
    with open(run.path("scaling.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "cap"])
        for r, c in zip(rep.radii, rep.caps):
            w.writerow([_r(r), _r(c)])
    run.path("scaling.json").write_text(rep.to_json() + "\n")


HANDLERS = {"solve": cmd_solve, "capacity": cmd_capacity, "wiener": cmd_wiener,
            "probe": cmd_probe, "ineq": cmd_ineq, "scaling": cmd_scaling}


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlwiener", description="Nonlocal Wiener-criterion experiments")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=(HANDLERS[name].__doc__ or name))
        sp.add_argument("--config", type=Path, help="YAML experiment config")
        sp.add_argument("--out", type=Path, help="output directory (overrides config 'output')")
        sp.add_argument("--seed", type=int, help="random seed (overrides config 'seed')")
        sp.add_argument("--threads", type=int, default=1, help="BLAS/FFT threads (default 1)")
    return ap


def _versions() -> dict:
    return {"nlwiener": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg = cfg.model_copy(update={"seed": args.seed})
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or Path(cfg.output or "nlwiener-out")
    r = Run(Path(out))
    manifest = {"subcommand": args.command, "config_hash": cfg.config_hash(), "seed": cfg.seed,
                "config": json.loads(cfg.canonical_json()), "versions": _versions(),
                "threads": args.threads}
    status, code = "ok", EXIT_OK
    set_fft_workers(args.threads)
    try:
        with threadpool_limits(limits=max(1, args.threads)):
            HANDLERS[args.command](cfg, r)
    except ValueError as exc:  # includes ConfigError and invalid domain parameters
        status, code = f"config error: {exc}", EXIT_CONFIG
    except (ConvergenceError, SolverFailure) as exc:
        status, code = f"not converged: {exc}", EXIT_NOT_CONVERGED
    except CheckFailed as exc:
        status, code = f"check failed: {exc}", EXIT_CHECK_FAILED
    manifest["status"] = status
    manifest["outputs"] = list(r.files)
    (r.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if code:
        print(status, file=sys.stderr)
    return code


def main() -> None:  # pragma: no cover - console entry point
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
