"""Command-line driver.

Usage::

    ergodic-mfg SUBCOMMAND CONFIG [--out DIR] [--no-plots] [...]

``CONFIG`` is a YAML file or the name of a built-in config (``ou``,
``lq_mfg``, ``lq_kernel``, ``flat_cubic``).  Every run writes
``manifest.json`` (config echo, package versions, timings, seeds) next to
its artifacts.

Exit status: 0 success, 2 model validation failure, 3 solver
non-convergence (or a failed certificate), 4 configuration or I/O error.
Errors are printed to stderr as a JSON object ``{"code", "message"}``.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, RunConfig, builtin_config_names, load_config
from .ergodic import SolverError, solve_ergodic_hjb
from .grid import MonotonicityError
from .horizon import (
    geometric_ergodicity_fit,
    solve_finite_horizon_mfg,
    turnpike_report,
)
from .io import read_json, write_csv, write_json
from .measures import GridMeasure, wasserstein
from .mfg_stationary import read_checkpoint, solve_mfg, verify_mfg_solution, write_checkpoint
from .model import validate_model
from .nplayer import nash_deviation_check, nplayer_convergence_report, simulate_particles, \
    solve_symmetric_nplayer

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3, 4
HELP = {
    "validate": "sampled checks of the model assumptions on the grid",
    "solve-ergodic": "ergodic HJB at the first initial measure",
    "solve-mfg": "stationary MFG fixed point from every initial measure, with certificate",
    "horizon": "finite-horizon MFG trajectory and turnpike diagnostics for one T",
    "turnpike": "turnpike sweep over all configured horizons",
    "nplayer": "N-player equilibria, deviation checks and particle cross-check",
    "report": "collect existing result artifacts into report.json",
}
SUBCOMMANDS = tuple(HELP)


class RunFailure(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status, self.code = status, code


class Run:
    """Shared state of one invocation: config, model, grid, output directory."""

    def __init__(self, cfg: RunConfig, out: Path, plots: bool):
        self.cfg = cfg
        self.spec = cfg.build_spec()
        self.grid = cfg.build_grid()
        self.out = out
        self.plots = plots and cfg.output.plots and self.grid.dimension == 1
        self.timings: dict[str, float] = {}
        self.seeds = {"solver": cfg.solver.seed, "nplayer": cfg.nplayer.seed}
        self.summary: dict = {}

    def timed(self, label, fn, *args, **kw):
        t = time.perf_counter()
        result = fn(*args, **kw)
        self.timings[label] = self.timings.get(label, 0.0) + time.perf_counter() - t
        return result

    def plot(self, name, fn, *args, **kw):
        if self.plots:
            from . import plots

            getattr(plots, fn)(*args, path=self.out / "plots" / name, **kw)

    def validate(self, strict: bool = True) -> dict:
        report = self.timed("validate", validate_model, self.spec, self.grid)
        d = report.to_dict()
        write_json(self.out / "validation.json", d)
        if strict and not report.passed:
            raise RunFailure(EXIT_VALIDATION, "VALIDATION_FAILED",
                             f"model validation failed: {report.failed()}")
        return d

    def initial_measures(self) -> list[GridMeasure]:
        return [GridMeasure.delta_at(self.grid, np.atleast_1d(np.asarray(x, float))
                                     * np.ones(self.grid.dimension))
                for x in self.cfg.solver.init]

    def stationary(self, resume: bool = False, stop_after: int | None = None, save: bool = True):
        """Solve the stationary MFG from every configured start; returns the first."""
        s = self.cfg.solver
        sols = []
        for i, mu0 in enumerate(self.initial_measures()):
            ckpt = self.out / f"checkpoint_{i}.csv"
            start, hist = 0, []
            if resume and ckpt.exists():
                header, mu0 = read_checkpoint(ckpt, self.grid)
                start, hist = header["iteration"], header["gap_history"]

            def callback(k, mu, history, ckpt=ckpt):
                write_checkpoint(ckpt, mu, k, s.damping, s.mode, s.seed, history)

            sol = self.timed("solve_mfg", solve_mfg, self.spec, self.grid, mu0, s.damping, s.mode,
                             s.tol, s.max_iters, start_iter=start, gap_history=hist,
                             callback=callback if save else None, stop_after=stop_after)
            if sol.stopped_early:
                raise RunFailure(EXIT_SOLVER, "STOPPED_EARLY",
                                 f"stopped after {sol.iterations} iterations; resume with --resume")
            if save and ckpt.exists():
                ckpt.unlink()
            sols.append(sol)
        first = sols[0]
        agreement = max((wasserstein(1, a.mu, b.mu) for a in sols for b in sols), default=0.0)
        cert = self.timed("certificate", verify_mfg_solution, self.spec, self.grid, first,
                          n_probe=s.n_probe, seed=s.seed)
        if save:
            write_json(self.out / "mfg_solution.json", {
                "rho": first.rho, "residual": first.hjb_residual, "iterations": first.iterations,
                "fixed_point_gap": first.fixed_point_gap, "fp_residual": first.fp_residual,
                "converged": all(x.converged for x in sols), "mode": first.mode,
                "damping": first.damping, "mean": first.mu.mean(),
                "init": list(self.cfg.solver.init), "init_agreement_w1": agreement,
                "rho_per_init": [x.rho for x in sols], "certificate": cert.to_dict(),
            })
            first.mu.to_csv(self.out / "mu.csv")
            coords = [self.grid.nodes[:, k] for k in range(self.grid.dimension)]
            names = ["x", "y"][: self.grid.dimension]
            write_csv(self.out / "value.csv", names + ["V"], coords + [first.V.values])
            u = first.policy.controls
            write_csv(self.out / "policy.csv", names + [f"u{k}" for k in range(u.shape[1])],
                      coords + [u[:, k] for k in range(u.shape[1])])
            write_csv(self.out / "gap_history.csv", ["iteration", "gap"],
                      [np.arange(1, len(first.gap_history) + 1), first.gap_history])
            self.plot("mfg_density.svg", "plot_densities", self.grid.nodes[:, 0],
                      float(self.grid.spacing[0]),
                      {f"init {x}": sol.mu.weights for x, sol in zip(self.cfg.solver.init, sols)},
                      title=f"stationary MFG law ({self.spec.name})")
        self.summary["mfg"] = {"rho": first.rho, "fixed_point_gap": first.fixed_point_gap,
                               "certificate_passed": cert.passed, "init_agreement_w1": agreement}
        if not all(x.converged for x in sols) or not cert.passed:
            raise RunFailure(EXIT_SOLVER, "NOT_CONVERGED",
                             "stationary MFG iteration did not converge or failed its certificate")
        return first

    def trajectory(self, stat, T: float, save_dir: Path | None):
        h = self.cfg.horizon
        eta = GridMeasure.delta_at(self.grid, np.full(self.grid.dimension, h.eta))
        phi0 = 0.0 if h.phi0 == "zero" else stat.V.values
        traj = self.timed("horizon", solve_finite_horizon_mfg, self.spec, self.grid, eta, phi0, T,
                          h.dt, stat.rho, h.damping, h.tol, h.max_iters)
        rep = self.timed("turnpike_report", turnpike_report, self.spec, traj, stat,
                         tuple(h.lambdas), h.t0)
        if save_dir is not None:
            traj.save(save_dir, stride=self.cfg.output.stride, report=rep.to_dict())
            write_csv(save_dir / "gamma.csv", ["t", "gamma"],
                      [traj.times, rep.gamma])
        return traj, rep


# ----------------------------------------------------------------------------
# subcommands


def cmd_validate(run: Run, args) -> dict:
    d = run.validate(strict=False)
    out = {"passed": d["passed"], "failed": [k for k, c in d["checks"].items() if not c["passed"]]}
    if run.spec.interaction.kind == "none" and run.spec.control_resolution == (1,):
        fit = geometric_ergodicity_fit(run.spec, run.grid, np.zeros(run.grid.n_total, dtype=int),
                                       lambda x: x[:, 0], [1.0])
        out["geometric_ergodicity"] = {"M0": fit.M0, "gamma": fit.gamma, "passed": fit.passed}
    run.summary["validation"] = out
    if not d["passed"]:
        raise RunFailure(EXIT_VALIDATION, "VALIDATION_FAILED", f"model validation failed: {out['failed']}")
    return out


def cmd_solve_ergodic(run: Run, args) -> dict:
    run.validate()
    mu = run.initial_measures()[0] if run.spec.interaction.kind != "none" else None
    sol = run.timed("solve_ergodic", solve_ergodic_hjb, run.spec, run.grid, mu)
    sol.save(run.out)
    run.plot("ergodic_density.svg", "plot_densities", run.grid.nodes[:, 0], float(run.grid.spacing[0]),
             {"mu_v": sol.mu_v.weights}, title=f"invariant law ({run.spec.name})")
    run.summary["ergodic"] = {"rho": sol.rho, "residual": sol.residual, "converged": sol.converged}
    if not sol.converged:
        raise RunFailure(EXIT_SOLVER, "NOT_CONVERGED", "ergodic HJB residual above tolerance")
    return run.summary["ergodic"]


def cmd_solve_mfg(run: Run, args) -> dict:
    run.validate()
    run.stationary(resume=args.resume, stop_after=args.stop_after)
    return run.summary["mfg"]


def cmd_horizon(run: Run, args) -> dict:
    run.validate()
    stat = run.stationary(save=False)
    T = args.T if args.T is not None else run.cfg.horizon.T[0]
    traj, rep = run.trajectory(stat, T, run.out / f"T_{T:g}")
    run.plot(f"gamma_T{T:g}.svg", "plot_series", traj.times, {f"T={T:g}": rep.gamma},
             xlabel="t", ylabel="Gamma_T(t)", title="comparison functional", marker="")
    run.summary["horizon"] = {"T": T, "converged": traj.converged, "iterations": traj.iterations,
                              **rep.to_dict()}
    if not traj.converged:
        raise RunFailure(EXIT_SOLVER, "NOT_CONVERGED", f"trajectory fixed point (T={T:g}) did not converge")
    return run.summary["horizon"]


def cmd_turnpike(run: Run, args) -> dict:
    run.validate()
    stat = run.stationary(save=False)
    rows, gammas, failed = [], {}, []
    lam_keys = None
    for T in run.cfg.horizon.T:
        traj, rep = run.trajectory(stat, T, run.out / f"T_{T:g}")
        if not traj.converged:
            failed.append(T)
        gammas[f"T={T:g}"] = (traj.times, rep.gamma)
        row = {"T": T, "converged": traj.converged, "min_gamma_increment": rep.min_increment,
               "viloc": traj.viloc}
        for lam, gaps in rep.per_lambda.items():
            for key, val in gaps.items():
                if key != "lambda":
                    row[f"{key}@{lam}"] = val
        lam_keys = lam_keys or [k for k in row if "@" in k and "sign" not in k]
        rows.append(row)
    Ts = [r["T"] for r in rows]
    write_csv(run.out / "turnpike.csv", ["T"] + lam_keys + ["min_gamma_increment", "viloc"],
              [Ts] + [[r[k] for r in rows] for k in lam_keys]
              + [[r["min_gamma_increment"] for r in rows], [r["viloc"] for r in rows]])
    write_json(run.out / "turnpike.json", {"rows": rows, "failed_T": failed})
    if run.plots:
        from . import plots

        plots.plot_series(Ts, {k: [r[k] for r in rows] for k in lam_keys if k.startswith("gap_i")},
                          run.out / "plots" / "turnpike_gaps.svg", xlabel="T", ylabel="gap",
                          title="turnpike gaps", logy=True)
        plots.plot_series({k: v[0] for k, v in gammas.items()}, {k: v[1] for k, v in gammas.items()},
                          run.out / "plots" / "gamma_curves.svg", xlabel="t", ylabel="Gamma_T(t)",
                          title="comparison functional", marker="")
    run.summary["turnpike"] = {"rows": rows, "failed_T": failed}
    if failed:
        raise RunFailure(EXIT_SOLVER, "NOT_CONVERGED", f"trajectory fixed point failed for T in {failed}")
    return run.summary["turnpike"]


def cmd_nplayer(run: Run, args) -> dict:
    run.validate()
    stat = run.stationary(save=False)
    p = run.cfg.nplayer
    rep = run.timed("nplayer", nplayer_convergence_report, run.spec, run.grid, p.N, stat,
                    window=p.window, mode=p.mode)
    rep.to_csv(run.out / "convergence.csv")
    rep.to_json(run.out / "convergence.json")
    deviations = []
    for N in p.N:
        prof = solve_symmetric_nplayer(run.spec, run.grid, N, mu0=stat.mu, mode=p.mode, n_mc=p.n_mc,
                                       seed=p.seed)
        dev = nash_deviation_check(run.spec, run.grid, prof, run.cfg.solver.n_probe, seed=p.seed,
                                   mode=p.mode, n_mc=p.n_mc)
        deviations.append({"N": N, **dev.to_dict()})
        if N == p.particles_N:
            part = run.timed("particles", simulate_particles, run.spec, run.grid, prof.policy, N,
                             p.T_sim, p.dt_sim, seed=p.seed)
            z = (part.mean_J - prof.rho) / part.standard_error if part.standard_error > 0 else 0.0
            particles = {"N": N, "rho_N": prof.rho, **part.summary(), "z_score": z}
            write_json(run.out / "particles.json", particles)
            write_csv(run.out / "particles.csv", ["player", "J"], [np.arange(N), part.J])
    write_json(run.out / "deviation.json", {"profiles": deviations})
    if run.plots and rep.rows:
        from . import plots

        Ns = [r["N"] for r in rep.rows]
        plots.plot_series(Ns, {k: [r[k] for r in rep.rows] for k in ("rho_gap", "V_gap", "W1_gap")},
                          run.out / "plots" / "nplayer_convergence.svg", xlabel="N", ylabel="gap",
                          title="N-player vs mean field", logx=True, logy=True)
    run.summary["nplayer"] = {"slope_rho_gap": rep.slope_rho, "failed_N": rep.failed,
                              "deviation_passed": all(d["passed"] for d in deviations)}
    if rep.failed or not run.summary["nplayer"]["deviation_passed"]:
        raise RunFailure(EXIT_SOLVER, "NOT_CONVERGED", "N-player solve or deviation check failed")
    return run.summary["nplayer"]


def cmd_report(run: Run, args) -> dict:
    """Collect the JSON artifacts already present in the output directory."""
    found = {}
    for name in ("validation", "ergodic", "mfg_solution", "turnpike", "convergence", "deviation",
                 "particles"):
        path = run.out / f"{name}.json"
        if path.exists():
            found[name] = read_json(path)
    if not found:
        raise RunFailure(EXIT_CONFIG, "NO_ARTIFACTS", f"no result artifacts in {run.out}")
    write_json(run.out / "report.json", found)
    if run.plots and (run.out / "mu.csv").exists():
        from . import plots
        from .measures import GridMeasure as GM

        mu = GM.from_csv(run.out / "mu.csv", run.grid)
        plots.plot_densities(run.grid.nodes[:, 0], float(run.grid.spacing[0]), {"mu": mu.weights},
                             run.out / "plots" / "report_density.svg", title="stationary law")
    run.summary["report"] = sorted(found)
    return {"artifacts": sorted(found)}


COMMANDS = {
    "validate": cmd_validate, "solve-ergodic": cmd_solve_ergodic, "solve-mfg": cmd_solve_mfg,
    "horizon": cmd_horizon, "turnpike": cmd_turnpike, "nplayer": cmd_nplayer, "report": cmd_report,
}


def _manifest(run: Run, args, status: int, code: str | None, started: float) -> dict:
    return {
        "subcommand": args.command, "config": run.cfg.to_dict(), "status": status, "code": code,
        "versions": {"ergodic_mfg": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "timings": {**run.timings, "total": time.perf_counter() - started},
        "seeds": run.seeds, "summary": run.summary,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ergodic-mfg", description="Ergodic mean field game solvers.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("config", help=f"YAML file or built-in name ({', '.join(builtin_config_names())})")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--no-plots", action="store_true", help="skip SVG plots")
        if name == "solve-mfg":
            p.add_argument("--resume", action="store_true", help="continue from the checkpoints in --out")
            p.add_argument("--stop-after", type=int, help="interrupt after this many iterations")
        if name == "horizon":
            p.add_argument("--T", type=float, help="horizon (default: first entry of horizon.T)")
    return parser


def _error(code: str, message: str) -> None:
    print(json.dumps({"code": code, "message": message}), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = load_config(args.config)
        out = Path(args.out or cfg.output.directory)
        out.mkdir(parents=True, exist_ok=True)
        run = Run(cfg, out, plots=not args.no_plots)
    except ConfigError as exc:
        _error(exc.code, str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _error("IO_ERROR", str(exc))
        return EXIT_CONFIG

    status, code = EXIT_OK, None
    try:
        result = COMMANDS[args.command](run, args)
        print(json.dumps(result, sort_keys=True, default=float))
    except RunFailure as exc:
        status, code = exc.status, exc.code
        _error(exc.code, str(exc))
    except MonotonicityError as exc:
        status, code = EXIT_VALIDATION, "NOT_MONOTONE"
        _error(code, str(exc))
    except SolverError as exc:
        status, code = EXIT_SOLVER, "SOLVER_ERROR"
        _error(code, str(exc))
    except OSError as exc:
        status, code = EXIT_CONFIG, "IO_ERROR"
        _error(code, str(exc))
    try:
        write_json(run.out / "manifest.json", _manifest(run, args, status, code, started))
    except OSError as exc:
        _error("IO_ERROR", str(exc))
        status = status or EXIT_CONFIG
    return status


if __name__ == "__main__":
    sys.exit(main())
