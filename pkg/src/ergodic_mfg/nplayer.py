"""Symmetric N-player ergodic games and their mean field limit.

Player 1 faces the other ``N - 1`` players, each distributed according to
the shared law ``mu``; its running cost is the expectation of
``F(x, empirical law of the others)``.  For the mean-quadratic coupling the
expectation has a closed form (the sample mean of ``N - 1`` draws has
variance ``Var(mu) / (N - 1)``); kernel couplings are linear in the
measure, so the averaged cost does not depend on ``N``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ergodic import (
    ErgodicOptions,
    Policy,
    ValueField,
    policy_value,
    solve_ergodic_hjb,
)
from .grid import Discretization, Grid
from .io import write_csv, write_json
from .measures import GridMeasure, project_truncate, wasserstein
from .model import ModelSpec, interaction_field, interaction_on_points

AVERAGING_MODES = ("exact_moment", "monte_carlo")


@dataclass(eq=False)
class AveragedCost:
    N: int
    mode: str
    coupling: np.ndarray          # nodal averaged interaction term
    table: np.ndarray             # (n, n_u) base cost + coupling
    standard_error: np.ndarray | None = None
    n_mc: int = 0
    seed: int | None = None


def averaged_cost(spec: ModelSpec, grid: Grid, mu: GridMeasure, N: int, mode: str = "exact_moment",
                  *, n_mc: int = 2000, seed: int = 0, R: float | None = None,
                  disc: Discretization | None = None) -> AveragedCost:
    """Averaged running cost of one player when the other ``N - 1`` are
    i.i.d. with law ``mu``.

    ``monte_carlo`` averages over ``n_mc`` draws of ``N - 1`` points from
    the projection of ``mu`` onto the ball of radius ``R``
    (default ``0.9 L``).
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    if mode not in AVERAGING_MODES:
        raise ValueError(f"mode must be one of {AVERAGING_MODES}")
    disc = disc or Discretization(spec, grid)
    inter = spec.interaction
    se = None
    if mode == "exact_moment":
        if inter.kind == "none":
            coupling = np.zeros(grid.n_total)
        elif inter.kind == "kernel":
            coupling = interaction_field(spec, grid, mu.weights)
        elif inter.kind == "mean_quadratic":
            m = mu.mean()
            var = float(mu.weights @ np.sum((grid.nodes - m) ** 2, axis=1))
            coupling = inter.scale * (np.sum((grid.nodes - inter.kappa * m) ** 2, axis=1)
                                      + inter.kappa**2 * var / (N - 1))
        else:
            raise ValueError(f"no closed form for interaction {inter.kind!r}; use mode='monte_carlo'")
    else:
        R = 0.9 * min(grid.half_width) if R is None else R
        src = project_truncate(mu, R)
        rng = np.random.default_rng(seed)
        draws = rng.choice(grid.n_total, size=(n_mc, N - 1), p=src.weights)
        vals = interaction_on_points(spec, grid.nodes, grid.nodes[draws])  # (n_mc, n)
        coupling = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / math.sqrt(n_mc)
    return AveragedCost(N, mode, coupling, disc.cost + coupling[:, None], se,
                        n_mc if mode == "monte_carlo" else 0, seed if mode == "monte_carlo" else None)


# ----------------------------------------------------------------------------
# symmetric equilibria


@dataclass(eq=False)
class NashProfile:
    N: int
    policy: Policy
    mu: GridMeasure
    V: ValueField
    rho: float
    deviation_gap: float
    fixed_point_gap: float
    hjb_residual: float
    iterations: int
    converged: bool
    gap_history: list[float] = field(default_factory=list)

    def summary(self) -> dict:
        return {"N": self.N, "rho": self.rho, "deviation_gap": self.deviation_gap,
                "fixed_point_gap": self.fixed_point_gap, "hjb_residual": self.hjb_residual,
                "iterations": self.iterations, "converged": self.converged}


def solve_symmetric_nplayer(spec: ModelSpec, grid: Grid, N: int, damping: float = 0.5,
                            tol: float = 1e-10, max_iters: int = 500, *,
                            mu0: GridMeasure | None = None, mode: str = "exact_moment",
                            n_mc: int = 2000, seed: int = 0,
                            opts: ErgodicOptions | None = None) -> NashProfile:
    """Damped fixed point ``mu <- (1 - theta) mu + theta mu_v`` where ``v`` is
    optimal for the averaged cost at ``mu``.  Returns the last best response
    as the shared law, re-solved and certified."""
    disc = Discretization(spec, grid)
    mu = mu0 or GridMeasure.delta(grid, grid.anchor_index)

    def respond(m):
        ac = averaged_cost(spec, grid, m, N, mode, n_mc=n_mc, seed=seed, disc=disc)
        return solve_ergodic_hjb(spec, grid, opts=opts, coupling=ac.coupling, disc=disc)

    history: list[float] = []
    converged = False
    best = (np.inf, mu)
    it = 0
    for it in range(1, max_iters + 1):
        star = respond(mu).mu_v
        if spec.interaction.kind == "none":
            best, converged = (0.0, star), True
            history.append(0.0)
            break
        new = mu.mix(star, damping)
        gap = wasserstein(1, new, mu)
        history.append(gap)
        if gap < best[0]:
            best = (gap, star)
        mu = new
        if gap <= tol * damping:
            best, converged = (gap, star), True
            break
    final = best[1]
    sol = respond(final)
    fp_gap = wasserstein(1, final, sol.mu_v)
    return NashProfile(N, sol.policy, final, sol.V, sol.rho, 0.0, fp_gap, sol.residual,
                       it, converged, history)


@dataclass
class DeviationReport:
    rho_profile: float
    rho_best: float
    deviation_gap: float
    probe_min_excess: float
    probes_failed: int
    n_probe: int
    tol: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def nash_deviation_check(spec: ModelSpec, grid: Grid, profile: NashProfile, n_probe: int = 50,
                         *, tol: float = 1e-6, perturb_fraction: float = 0.1, seed: int = 0,
                         mode: str = "exact_moment", n_mc: int = 2000) -> DeviationReport:
    """Unilateral deviation test for player 1 with the others frozen at
    ``(profile.policy, profile.mu)``.

    The profile's own cost is recomputed exactly from its policy, so a
    tampered policy shows up as a positive gap.
    """
    disc = Discretization(spec, grid)
    ac = averaged_cost(spec, grid, profile.mu, profile.N, mode, n_mc=n_mc, seed=seed, disc=disc)
    rho_profile, _ = policy_value(spec, grid, profile.policy, coupling=ac.coupling, disc=disc)
    best = solve_ergodic_hjb(spec, grid, coupling=ac.coupling, disc=disc)
    gap = rho_profile - best.rho

    base = np.array(profile.policy.controls, dtype=float)
    rng = np.random.default_rng(seed)
    k = max(1, int(round(perturb_fraction * grid.n_total)))
    excess, failed = np.inf, 0
    for _ in range(n_probe):
        u = base.copy()
        nodes = rng.choice(grid.n_total, size=k, replace=False)
        u[nodes] = disc.controls[rng.integers(0, disc.n_controls, size=k)]
        r, _ = policy_value(spec, grid, u, coupling=ac.coupling, disc=disc)
        excess = min(excess, r - rho_profile)
        failed += r < rho_profile - tol
    passed = gap <= tol and failed == 0
    return DeviationReport(rho_profile, best.rho, float(gap), float(excess), int(failed),
                           n_probe, tol, bool(passed))


# ----------------------------------------------------------------------------
# N -> infinity


@dataclass
class ConvergenceReport:
    rows: list[dict]
    slope_rho: float | None
    slope_w: float | None
    projection: list[dict]
    projection_slope: float | None
    failed: list[int]

    def to_csv(self, path) -> None:
        keys = ["N", "rho_N", "rho_gap", "V_gap", "W1_gap"]
        write_csv(path, keys, [[r[k] for r in self.rows] for k in keys])

    def to_json(self, path) -> None:
        write_json(path, self.summary())

    def summary(self) -> dict:
        return {"rows": self.rows, "slope_rho_gap": self.slope_rho, "slope_W1_gap": self.slope_w,
                "projection": self.projection, "projection_slope": self.projection_slope,
                "failed_N": self.failed}


def _loglog_slope(x, y) -> float | None:
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = y > 0
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def nplayer_convergence_report(spec: ModelSpec, grid: Grid, Ns, mfg, *, window: float = 3.0,
                               q_bar: int = 1, radii=None, damping: float = 0.5,
                               tol: float = 1e-10, mode: str = "exact_moment") -> ConvergenceReport:
    """Gaps between N-player equilibria and the MFG solution ``mfg``.

    Columns: ``|rho_N - rho|``, ``sup |V_N - V|`` over ``|x| <= window`` and
    ``D_{q_bar}(mu_N, mu)``; log-log slopes are fitted over the solved
    ``N``.  The projection sweep reports ``D_{q_bar}(P_R mu, mu)`` for the
    truncation radii ``radii``.
    """
    mask = np.max(np.abs(grid.nodes), axis=1) <= window + 1e-12
    rows, failed = [], []
    for N in Ns:
        try:
            prof = solve_symmetric_nplayer(spec, grid, N, damping, tol, mu0=mfg.mu, mode=mode)
        except Exception:  # recorded, excluded from fits
            failed.append(int(N))
            continue
        if not prof.converged:
            failed.append(int(N))
            continue
        rows.append({
            "N": int(N), "rho_N": prof.rho, "rho_gap": abs(prof.rho - mfg.rho),
            "V_gap": float(np.max(np.abs(prof.V.values - mfg.V.values)[mask])),
            "W1_gap": wasserstein(q_bar, prof.mu, mfg.mu),
        })
    Nv = [r["N"] for r in rows]
    slope_rho = _loglog_slope(Nv, [r["rho_gap"] for r in rows])
    slope_w = _loglog_slope(Nv, [r["W1_gap"] for r in rows])
    L = min(grid.half_width)
    radii = radii if radii is not None else [L * f for f in (0.2, 0.3, 0.4, 0.5, 0.6, 0.8)]
    proj = [{"R": float(R), "error": wasserstein(q_bar, project_truncate(mfg.mu, R), mfg.mu)}
            for R in radii]
    pslope = _loglog_slope([p["R"] for p in proj], [p["error"] for p in proj])
    return ConvergenceReport(rows, slope_rho, slope_w, proj, pslope, failed)


# ----------------------------------------------------------------------------
# particles


@dataclass
class ParticleResult:
    J: np.ndarray
    mean_J: float
    standard_error: float
    escapes: int
    escape_fraction: float
    passed: bool
    times: np.ndarray
    mean_path: np.ndarray
    second_moment_path: np.ndarray

    def summary(self) -> dict:
        return {"mean_J": self.mean_J, "standard_error": self.standard_error,
                "escapes": self.escapes, "escape_fraction": self.escape_fraction,
                "passed": self.passed}


def _policy_interpolant(grid: Grid, policy: Policy):
    u = np.asarray(policy.controls, float)
    if grid.dimension == 1:
        ax = grid.axes[0]
        return lambda x: np.stack([np.interp(x[:, 0], ax, u[:, k]) for k in range(u.shape[1])], axis=1)
    from scipy.interpolate import RegularGridInterpolator

    interps = [RegularGridInterpolator(grid.axes, u[:, k].reshape(grid.shape)) for k in range(u.shape[1])]
    return lambda x: np.stack([f(x) for f in interps], axis=1)


def simulate_particles(spec: ModelSpec, grid: Grid, policy: Policy, N: int, T_sim: float,
                       dt_sim: float, seed: int = 0, *, mu0: GridMeasure | None = None,
                       batches: int = 20, thin: int = 100, chunk: int = 5000) -> ParticleResult:
    """Euler-Maruyama simulation of ``N`` players under a shared feedback.

    Each particle owns an RNG stream spawned from ``seed``; initial states
    are drawn from ``mu0`` (default: the anchor node).  Positions leaving
    the box are reflected back and counted as escapes.  Player ``i`` pays
    ``base_cost(x_i, u_i) + F(x_i, empirical law of the others)``.  The
    standard error of the mean cost uses batch means over time.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    steps = int(round(T_sim / dt_sim))
    d = grid.dimension
    L = np.array(grid.half_width)
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(N)]
    if mu0 is None:
        x = np.tile(grid.nodes[grid.anchor_index], (N, 1))
    else:
        x = np.array([grid.nodes[g.choice(grid.n_total, p=mu0.weights)] for g in streams])
    control = _policy_interpolant(grid, policy)
    inter = spec.interaction
    per_batch = max(1, steps // batches)
    batch_sums = np.zeros(batches)
    cost_sum = np.zeros(N)
    escapes = 0
    times, mpath, m2path = [], [], []
    for start in range(0, steps, chunk):
        n_here = min(chunk, steps - start)
        noise = np.stack([g.standard_normal((n_here, d)) for g in streams], axis=1)  # (n, N, d)
        for s in range(n_here):
            step = start + s
            u = control(x)
            r = np.asarray(spec.base_cost(x, u), float)
            if inter.kind == "mean_quadratic":
                m_others = (x.sum(axis=0)[None, :] - x) / (N - 1)
                r = r + inter.scale * np.sum((x - inter.kappa * m_others) ** 2, axis=1)
            elif inter.kind == "kernel":
                K = np.asarray(inter.kernel(x[:, None, :] - x[None, :, :]), float)
                np.fill_diagonal(K, 0.0)
                r = r + inter.scale * K.sum(axis=1) / (N - 1)
            cost_sum += r * dt_sim
            b = min(step // per_batch, batches - 1)
            batch_sums[b] += r.mean() * dt_sim
            sig = np.broadcast_to(np.asarray(spec.diffusion(x), float), (N, d, d))
            drift = np.broadcast_to(np.asarray(spec.drift(x, u), float), (N, d))
            x = x + drift * dt_sim + np.sqrt(dt_sim) * np.einsum("nij,nj->ni", sig, noise[s])
            out = np.abs(x) > L
            if out.any():
                escapes += int(out.any(axis=1).sum())
                x = np.where(x > L, 2 * L - x, x)
                x = np.where(x < -L, -2 * L - x, x)
                x = np.clip(x, -L, L)
            if step % thin == 0:
                times.append((step + 1) * dt_sim)
                mpath.append(x.mean(axis=0))
                m2path.append(float(np.mean(np.sum(x**2, axis=1))))
    J = cost_sum / T_sim
    lengths = np.full(batches, per_batch * dt_sim)
    lengths[-1] = (steps - per_batch * (batches - 1)) * dt_sim
    bm = batch_sums / lengths
    se = float(bm.std(ddof=1) / math.sqrt(batches))
    frac = escapes / (N * max(steps, 1))
    return ParticleResult(J, float(J.mean()), se, escapes, frac, frac <= 0.01,
                          np.array(times), np.array(mpath), np.array(m2path))
