"""Stationary mean field equilibria as fixed points of the best-response map.

The iteration acts on the environment measure: given ``mu_k``, solve the
ergodic problem with cost frozen at ``mu_k`` and take the invariant law
``mu*_k`` of the optimal policy; then mix it into ``mu_k`` either with a
fixed damping (Picard) or with weights ``1/(k+1)`` (fictitious play).

Because controls are discrete the optimal policy is locally constant in
``mu``, so once the iterates settle the best response stops moving and the
returned measure is an exact fixed point of the discrete map.  Convergence
is not guaranteed in general; every result carries a certificate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .ergodic import (ErgodicOptions, Policy, ValueField, continuous_argmin, policy_value,
                      solve_ergodic_hjb)
from .grid import Discretization, Grid
from .io import fmt
from .measures import GridMeasure, moment, occupation_residual, wasserstein
from .model import ModelSpec, interaction_field

MODES = ("picard", "fictitious_play")


@dataclass(eq=False)
class MfgSolution:
    mu: GridMeasure
    V: ValueField
    rho: float
    policy: Policy
    fixed_point_gap: float
    hjb_residual: float
    fp_residual: float
    iterations: int
    converged: bool
    mode: str = "picard"
    damping: float = 0.5
    gap_history: list[float] = field(default_factory=list)
    moment2_history: list[float] = field(default_factory=list)
    stopped_early: bool = False

    def summary(self) -> dict:
        return {
            "rho": self.rho, "fixed_point_gap": self.fixed_point_gap,
            "hjb_residual": self.hjb_residual, "fp_residual": self.fp_residual,
            "iterations": self.iterations, "converged": self.converged, "mode": self.mode,
            "damping": self.damping, "mean": self.mu.mean().tolist(),
            "stopped_early": self.stopped_early,
        }


@dataclass
class CertificateReport:
    hjb_residual: float
    fp_residual: float
    fixed_point_gap: float
    probe_min_excess: float
    probes_failed: int
    n_probe: int
    tol: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


# ----------------------------------------------------------------------------
# checkpoints


def write_checkpoint(path, mu: GridMeasure, k: int, damping: float, mode: str,
                     seed: int = 0, gap_history=()) -> None:
    """JSON header line followed by the CSV of the current measure."""
    header = {"iteration": k, "damping": damping, "mode": mode, "seed": seed,
              "gap_history": [float(g) for g in gap_history]}
    grid = mu.grid
    names = ["x", "y"][: grid.dimension] + ["weight"]
    lines = [json.dumps(header, sort_keys=True), ",".join(names)]
    for row, w in zip(grid.nodes, mu.weights):
        lines.append(",".join([fmt(c) for c in row] + [fmt(w)]))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tmp.replace(path)


def read_checkpoint(path, grid: Grid) -> tuple[dict, GridMeasure]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    body = np.array([[float(v) for v in line.split(",")] for line in lines[2:]])
    if body.shape[0] != grid.n_total or not np.allclose(body[:, : grid.dimension], grid.nodes):
        raise ValueError(f"{path}: checkpoint grid does not match the configured grid")
    # no renormalisation: the stored weights round-trip bit for bit
    return header, GridMeasure(grid, body[:, -1])


# ----------------------------------------------------------------------------
# fixed point


def solve_mfg(
    spec: ModelSpec,
    grid: Grid,
    mu0: GridMeasure,
    damping: float = 0.5,
    mode: str = "picard",
    tol: float = 1e-10,
    max_iters: int = 500,
    *,
    opts: ErgodicOptions | None = None,
    start_iter: int = 0,
    gap_history=(),
    callback: Callable[[int, GridMeasure, list], None] | None = None,
    stop_after: int | None = None,
) -> MfgSolution:
    """Damped fixed-point iteration ``mu -> A*(mu)``.

    Parameters
    ----------
    damping
        Picard mixing weight ``theta`` in ``(0, 1]``.
    mode
        ``"picard"`` or ``"fictitious_play"``.
    tol
        Stop when ``D1(mu_{k+1}, mu_k) <= tol * theta`` (Picard) or
        ``<= tol / k`` (fictitious play).
    start_iter, gap_history
        Resume state from a checkpoint.
    callback
        Called as ``callback(k, mu_k, gap_history)`` after every iteration.
    stop_after
        Stop (unconverged) once this iteration count is reached.

    Returns
    -------
    MfgSolution
        On non-convergence the best iterate (smallest step) is returned with
        ``converged=False``; nothing is raised.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    disc = Discretization(spec, grid)
    mu = mu0
    history = list(gap_history)
    moments = []
    best = (np.inf, mu0)
    converged = False
    k = start_iter
    stopped = False
    while k < max_iters:
        sol = solve_ergodic_hjb(spec, grid, mu, opts, disc=disc)
        star = sol.mu_v
        k += 1
        if spec.interaction.kind == "none":
            # the best response does not depend on the environment
            history.append(wasserstein(1, star, mu))
            moments.append(moment(2, star))
            best, converged = (0.0, star), True
            break
        if mode == "picard":
            new, threshold = mu.mix(star, damping), tol * damping
        else:
            new, threshold = mu.mix(star, 1.0 / k), tol / k
        gap = wasserstein(1, new, mu)
        history.append(gap)
        moments.append(moment(2, new))
        if gap < best[0]:
            best = (gap, star)
        mu = new
        if callback is not None:
            callback(k, mu, history)
        if gap <= threshold:
            converged = True
            best = (gap, star)
            break
        if stop_after is not None and k >= stop_after:
            stopped = True
            best = (gap, mu)
            break

    final = best[1]
    cert = solve_ergodic_hjb(spec, grid, final, opts, disc=disc)
    fp = occupation_residual(disc.generator(cert.policy), final)
    return MfgSolution(
        mu=final, V=cert.V, rho=cert.rho, policy=cert.policy,
        fixed_point_gap=wasserstein(1, final, cert.mu_v), hjb_residual=cert.residual,
        fp_residual=fp, iterations=k, converged=converged, mode=mode, damping=damping,
        gap_history=history, moment2_history=moments, stopped_early=stopped,
    )


def verify_mfg_solution(spec: ModelSpec, grid: Grid, sol: MfgSolution, n_probe: int = 50,
                        perturb_fraction: float = 0.05, seed: int = 0,
                        tol: float = 1e-8) -> CertificateReport:
    """Certificate for a candidate equilibrium: HJB residual at ``sol.mu``,
    invariance of ``sol.mu`` under the policy, and random perturbed-policy
    probes that must not beat ``sol.rho`` by more than ``tol``."""
    disc = Discretization(spec, grid)
    F = interaction_field(spec, grid, sol.mu.weights)
    V = sol.V.values
    Hmin = (disc.q_values(V) + disc.cost).min(axis=1)
    if sol.policy.index is None:
        Hmin = np.minimum(Hmin, continuous_argmin(disc, V)[1])
    hjb = float(np.abs(Hmin + F - sol.rho).max())
    fp = occupation_residual(disc.generator(sol.policy), sol.mu)
    rho_check, mu_v = policy_value(spec, grid, sol.policy, coupling=F, disc=disc)
    gap = wasserstein(1, sol.mu, mu_v)

    rng = np.random.default_rng(seed)
    base = np.array(sol.policy.controls, dtype=float)
    excess = np.inf
    failed = 0
    n_change = max(1, int(round(perturb_fraction * grid.n_total)))
    for _ in range(n_probe):
        u = base.copy()
        nodes = rng.choice(grid.n_total, size=n_change, replace=False)
        u[nodes] = disc.controls[rng.integers(0, disc.n_controls, size=n_change)]
        rho_p, _ = policy_value(spec, grid, u, coupling=F, disc=disc)
        excess = min(excess, rho_p - sol.rho)
        failed += rho_p < sol.rho - tol
    passed = (hjb <= max(tol, 1e-8) * max(1.0, abs(sol.rho)) and failed == 0
              and abs(rho_check - sol.rho) <= 1e-8 * max(1.0, abs(sol.rho)))
    return CertificateReport(hjb, fp, gap, float(excess), int(failed), n_probe, tol, bool(passed))
