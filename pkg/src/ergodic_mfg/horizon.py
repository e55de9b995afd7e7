"""Finite-horizon mean field games and the turnpike diagnostics.

Conventions
-----------
``phi[k]`` is the value-iteration field with ``k * dt`` time to go
(``phi[0]`` is the terminal cost); ``mu[j]`` is the population law at real
time ``j * dt`` (``mu[0]`` is the initial law).  The backward step from
``phi[k]`` to ``phi[k+1]`` is implicit Euler,

    (I - dt Q_v) phi[k+1] = phi[k] + dt (r_v + F(., mu[M-k]) - rho_bar),

with ``v`` the Hamiltonian argmin at ``phi[k+1]`` (Howard sweeps until the
policy is stable).  The forward step ``mu[j] -> mu[j+1]`` solves
``(I - dt Q_v^T) mu[j+1] = mu[j]`` with the policy of backward step
``M-1-j``.  With these index choices the pairing
``Gamma(k) = (mu[M-k] - mu_bar) . (phi[k] - V_bar)`` satisfies
``Gamma(k+1) - Gamma(k) >= dt * Fmon(mu[M-k], mu_bar)`` exactly, where
``Fmon`` is the monotonicity functional.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import splu

from .ergodic import Policy, SolverError, stationary_weights
from .grid import Discretization, Grid
from .io import read_csv, read_json, write_csv, write_json
from .measures import GridMeasure, monotonicity_gap, wasserstein
from .model import ModelSpec, interaction_field

MASS_TOL = 1e-12
MAX_HOWARD_SWEEPS = 50


# ----------------------------------------------------------------------------
# implicit Euler solves


def _implicit_solve(Q: sp.csr_matrix, dt: float, b: np.ndarray, transpose: bool = False,
                    banded: bool = False) -> np.ndarray:
    """Solve ``(I - dt Q) x = b`` (or with ``Q^T``)."""
    if banded:
        lower, diag, upper = Q.diagonal(-1), Q.diagonal(0), Q.diagonal(1)
        if transpose:
            lower, upper = upper, lower
        n = len(diag)
        ab = np.zeros((3, n))
        ab[0, 1:] = -dt * upper
        ab[1] = 1.0 - dt * diag
        ab[2, :-1] = -dt * lower
        x = solve_banded((1, 1), ab, b, check_finite=False)
    else:
        M = Q.T if transpose else Q
        A = (sp.identity(Q.shape[0], format="csc") - dt * M).tocsc()
        try:
            x = splu(A).solve(b)
        except RuntimeError as exc:
            raise SolverError(f"implicit step failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolverError("implicit step produced non-finite values")
    return x


def _banded(grid: Grid) -> bool:
    return grid.dimension == 1


# ----------------------------------------------------------------------------
# backward value iteration


def _howard_step(disc: Discretization, phi_prev: np.ndarray, extra: np.ndarray, dt: float,
                 sweeps: int | None, refine: bool = False):
    """One implicit VI step ``phi = phi_prev + dt * (min_u[Q_u phi + r_u] + extra)``.

    Policies are control indices, or ``(n, m)`` control arrays when
    ``refine`` is set (continuous argmin from :meth:`Discretization.refined_argmin`).
    """
    rows = np.arange(disc.n)
    banded = _banded(disc.grid)
    H = disc.q_values(phi_prev) + disc.cost
    pol = disc.refined_argmin(phi_prev, H)[0] if refine else np.argmin(H, axis=1)
    limit = MAX_HOWARD_SWEEPS if sweeps is None else sweeps
    for sweep in range(limit):
        Q = disc.generator(pol)
        phi = _implicit_solve(Q, dt, phi_prev + dt * (disc.policy_cost(pol) + extra), banded=banded)
        H = disc.q_values(phi) + disc.cost
        if refine:
            cand, cval = disc.refined_argmin(phi, H)
            current = disc.q_values_at(phi, pol) + disc.base_cost_at(pol)
        else:
            cand = np.argmin(H, axis=1)
            cval, current = H[rows, cand], H[rows, pol]
        change = cval < current - 1e-12 * max(1.0, np.abs(current).max())
        if not change.any() or (sweeps is not None and sweep + 1 >= sweeps):
            return phi, pol, Q
        pol = np.where(change[:, None], cand, pol) if refine else np.where(change, cand, pol)
    raise SolverError(f"Howard sweeps did not settle in {limit} iterations")


def backward_vi(spec: ModelSpec, grid: Grid, mu_traj: np.ndarray, phi0, rho_bar: float,
                dt: float, *, policy_sweeps: int | None = None, refine: bool | None = None,
                disc: Discretization | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Implicit value iteration over ``M = len(mu_traj) - 1`` steps.

    Parameters
    ----------
    mu_traj
        Weights ``(M+1, n)`` of the population law in real time.
    policy_sweeps
        ``None`` iterates the policy to a fixed point in every step; ``1``
        freezes the policy at the argmin of the previous iterate.
    refine
        Continuous controls; defaults to ``spec.strictly_convex``.

    Returns
    -------
    phi : ndarray ``(M+1, n)`` indexed by time to go.
    policies : ndarray ``(M, n)`` of control indices (``(M, n, m)`` controls
        when refined); row ``k`` is the policy of the step producing ``phi[k+1]``.
    """
    disc = disc or Discretization(spec, grid)
    mu_traj = np.asarray(mu_traj, float)
    M = mu_traj.shape[0] - 1
    phi = np.empty((M + 1, grid.n_total))
    phi[0] = np.broadcast_to(np.asarray(phi0, float), (grid.n_total,))
    if not np.all(np.isfinite(phi[0])):
        raise ValueError("terminal field phi0 is not finite")
    refine = spec.strictly_convex if refine is None else refine
    pol = _policy_store(M, disc, refine)
    constant_F = spec.interaction.kind == "none"
    F = np.zeros(grid.n_total)
    for k in range(M):
        if not constant_F:
            F = interaction_field(spec, grid, mu_traj[M - k])
        phi[k + 1], pol[k], _ = _howard_step(disc, phi[k], F - rho_bar, dt, policy_sweeps, refine)
    return phi, pol


def _policy_store(M: int, disc: Discretization, refine: bool) -> np.ndarray:
    if refine:
        return np.empty((M, disc.n, disc.spec.control_dim))
    return np.empty((M, disc.n), dtype=np.int64)


def backward_rvi(spec: ModelSpec, grid: Grid, mu_traj: np.ndarray, psi0, dt: float, *,
                 policy_sweeps: int | None = None, refine: bool | None = None,
                 disc: Discretization | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Relative value iteration ``(I - dt Q_v) psi[k+1] = psi[k] + dt (r_v + F - psi[k](anchor))``."""
    disc = disc or Discretization(spec, grid)
    mu_traj = np.asarray(mu_traj, float)
    M = mu_traj.shape[0] - 1
    a = grid.anchor_index
    psi = np.empty((M + 1, grid.n_total))
    psi[0] = np.broadcast_to(np.asarray(psi0, float), (grid.n_total,))
    refine = spec.strictly_convex if refine is None else refine
    pol = _policy_store(M, disc, refine)
    F = np.zeros(grid.n_total)
    for k in range(M):
        if spec.interaction.kind != "none":
            F = interaction_field(spec, grid, mu_traj[M - k])
        psi[k + 1], pol[k], _ = _howard_step(disc, psi[k], F - psi[k, a], dt, policy_sweeps, refine)
    return psi, pol


# ----------------------------------------------------------------------------
# forward Kolmogorov


@dataclass
class ForwardStats:
    max_mass_drift: float
    min_weight_before_clamp: float


def forward_kolmogorov(spec: ModelSpec, grid: Grid, policies, eta: GridMeasure, dt: float,
                       *, disc: Discretization | None = None) -> tuple[np.ndarray, ForwardStats]:
    """Implicit Euler for the law of the controlled chain.

    ``policies`` is a sequence (real-time order) of control-index arrays or
    :class:`Policy` objects, one per step.  Mass drift and the most negative
    weight are recorded before clamping/renormalisation.
    """
    disc = disc or Discretization(spec, grid)
    banded = _banded(grid)
    M = len(policies)
    mu = np.empty((M + 1, grid.n_total))
    mu[0] = eta.weights
    drift, low = 0.0, 0.0
    cache_key, Q = None, None
    for j, p in enumerate(policies):
        key = p.tobytes() if isinstance(p, np.ndarray) else id(p)
        if key != cache_key:
            Q = disc.generator(p)
            cache_key = key
        w = _implicit_solve(Q, dt, mu[j], transpose=True, banded=banded)
        drift = max(drift, abs(w.sum() - mu[j].sum()))
        low = min(low, float(w.min()))
        if w.min() < -MASS_TOL:
            raise SolverError(f"forward step {j}: weight {w.min():.3g} below -{MASS_TOL:g}")
        w = np.maximum(w, 0.0)
        mu[j + 1] = w / w.sum()
    return mu, ForwardStats(drift, low)


# ----------------------------------------------------------------------------
# RVI transform


def rvi_transform(phi: np.ndarray, rho_bar: float, dt: float, anchor: int) -> tuple[np.ndarray, float]:
    """``psi_t = phi_t - int_0^t e^{s-t} phi_s(anchor) ds + rho_bar (1 - e^{-t})``.

    The integral uses the trapezoid rule on the time grid.  Returns ``psi``
    and the largest violation of
    ``psi_t - psi_t(anchor) = phi_t - phi_t(anchor)``.
    """
    phi = np.asarray(phi, float)
    M = phi.shape[0] - 1
    t = dt * np.arange(M + 1)
    g = phi[:, anchor]
    # I_{k+1} = e^{-dt} I_k + dt/2 (e^{-dt} g_k + g_{k+1})
    integral = np.zeros(M + 1)
    decay = np.exp(-dt)
    for k in range(M):
        integral[k + 1] = decay * integral[k] + 0.5 * dt * (decay * g[k] + g[k + 1])
    shift = -integral + rho_bar * (1.0 - np.exp(-t))
    psi = phi + shift[:, None]
    violation = viloc_violation(phi, psi, anchor)
    return psi, violation


def viloc_violation(phi: np.ndarray, psi: np.ndarray, anchor: int) -> float:
    lhs = phi - phi[:, [anchor]]
    rhs = psi - psi[:, [anchor]]
    return float(np.abs(lhs - rhs).max())


# ----------------------------------------------------------------------------
# trajectory fixed point


@dataclass(eq=False)
class TrajectorySolution:
    grid: Grid
    T: float
    dt: float
    mu: np.ndarray        # (M+1, n), real time
    phi: np.ndarray       # (M+1, n), time to go
    psi: np.ndarray       # (M+1, n), time to go
    policies: np.ndarray  # (M, n) indices or (M, n, m) controls, by time to go
    rho_bar: float
    converged: bool
    iterations: int
    gap_history: list[float] = field(default_factory=list)
    viloc: float = 0.0
    forward: ForwardStats | None = None

    @property
    def M(self) -> int:
        return self.mu.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.M + 1)

    def measure(self, j: int) -> GridMeasure:
        return GridMeasure.normalized(self.grid, self.mu[j])

    def save(self, directory, stride: int = 1, report: dict | None = None) -> None:
        """Manifest JSON plus CSV snapshots every ``stride`` steps."""
        d = Path(directory)
        steps = list(range(0, self.M + 1, stride))
        if steps[-1] != self.M:
            steps.append(self.M)
        write_json(d / "trajectory.json", {
            "T": self.T, "dt": self.dt, "M": self.M, "rho_bar": self.rho_bar,
            "half_width": list(self.grid.half_width), "nodes_per_axis": list(self.grid.nodes_per_axis),
            "converged": self.converged, "iterations": self.iterations,
            "gap_history": self.gap_history, "viloc_violation": self.viloc,
            "snapshot_steps": steps, "stride": stride,
            "max_mass_drift": self.forward.max_mass_drift if self.forward else None,
            "report": report or {},
        })
        names = ["x", "y"][: self.grid.dimension]
        coords = [self.grid.nodes[:, k] for k in range(self.grid.dimension)]
        for j in steps:
            write_csv(d / f"step_{j:06d}.csv", names + ["mu", "phi", "psi"],
                      coords + [self.mu[j], self.phi[j], self.psi[j]])

    @classmethod
    def load_snapshots(cls, directory) -> tuple[dict, dict[int, np.ndarray]]:
        d = Path(directory)
        meta = read_json(d / "trajectory.json")
        snaps = {j: read_csv(d / f"step_{j:06d}.csv")[1] for j in meta["snapshot_steps"]}
        return meta, snaps


def solve_finite_horizon_mfg(
    spec: ModelSpec,
    grid: Grid,
    eta: GridMeasure,
    phi0,
    T: float,
    dt: float,
    rho_bar: float,
    damping: float = 0.5,
    tol: float = 1e-10,
    max_iters: int = 300,
    *,
    policy_sweeps: int | None = None,
    mu_init: np.ndarray | None = None,
) -> TrajectorySolution:
    """Forward-backward fixed point over the law trajectory.

    Each pass runs :func:`backward_vi` against the current law trajectory,
    then :func:`forward_kolmogorov` under the resulting policies; the law
    trajectory is then mixed with factor ``damping``.  Stops when
    ``sup_t D1`` between the forward output and the input trajectory is at
    most ``tol``.  The returned laws are the forward output of the last
    pass, so they are exactly consistent with the returned policies.
    """
    M = int(round(T / dt))
    if M < 1 or abs(M * dt - T) > 1e-9 * T:
        raise ValueError(f"T = {T} is not a positive multiple of dt = {dt}")
    disc = Discretization(spec, grid)
    traj = (np.tile(eta.weights, (M + 1, 1)) if mu_init is None else np.array(mu_init, float))
    decoupled = spec.interaction.kind == "none"
    history: list[float] = []
    best = None
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        phi, pol = backward_vi(spec, grid, traj, phi0, rho_bar, dt,
                               policy_sweeps=policy_sweeps, disc=disc)
        mu, stats = forward_kolmogorov(spec, grid, pol[::-1], eta, dt, disc=disc)
        gap = 0.0 if decoupled else _sup_w1(grid, mu, traj)
        history.append(gap)
        if best is None or gap < best[0]:
            best = (gap, mu, phi, pol, stats)
        if gap <= tol:
            converged = True
            best = (gap, mu, phi, pol, stats)
            break
        traj = (1.0 - damping) * traj + damping * mu
    _, mu, phi, pol, stats = best
    psi, viol = rvi_transform(phi, rho_bar, dt, grid.anchor_index)
    return TrajectorySolution(grid, T, dt, mu, phi, psi, pol, rho_bar, converged, it,
                              history, viol, stats)


def _sup_w1(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    if grid.dimension == 1:
        x = grid.nodes[:, 0]
        ca, cb = np.cumsum(a, axis=1), np.cumsum(b, axis=1)
        h = np.diff(x)
        return float(np.max(np.abs(ca - cb)[:, :-1] @ h))
    out = 0.0
    for wa, wb in zip(a, b):
        out = max(out, wasserstein(1, GridMeasure.normalized(grid, wa), GridMeasure.normalized(grid, wb)))
    return out


# ----------------------------------------------------------------------------
# turnpike diagnostics


@dataclass
class TurnpikeReport:
    T: float
    per_lambda: dict
    gamma: np.ndarray
    gamma_increments: np.ndarray
    gamma_lower_bound: np.ndarray
    min_increment: float
    min_increment_slack: float
    growth_constant: float
    relative_value_bound: float
    holder: dict
    comparison_slack: float
    lyapunov_violation: float
    viloc: float

    def to_dict(self) -> dict:
        return {
            "T": self.T, "per_lambda": self.per_lambda, "min_gamma_increment": self.min_increment,
            "min_gamma_increment_minus_bound": self.min_increment_slack,
            "gamma_final": float(self.gamma[-1]), "gamma_initial": float(self.gamma[0]),
            "growth_constant": self.growth_constant, "relative_value_bound": self.relative_value_bound,
            "holder": self.holder, "comparison_slack": self.comparison_slack,
            "lyapunov_violation": self.lyapunov_violation, "viloc_violation": self.viloc,
        }


def weighted_norm(f: np.ndarray, lyap_values: np.ndarray) -> float:
    """``sup |f| / Lyap``."""
    return float(np.max(np.abs(f) / lyap_values))


def _w1_rows(grid: Grid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if grid.dimension == 1:
        x = grid.nodes[:, 0]
        return np.abs(np.cumsum(a, axis=-1) - np.cumsum(b, axis=-1))[..., :-1] @ np.diff(x)
    a2, b2 = np.atleast_2d(a), np.atleast_2d(b)
    a2, b2 = np.broadcast_arrays(a2, b2)
    return np.array([wasserstein(1, GridMeasure.normalized(grid, p), GridMeasure.normalized(grid, q))
                     for p, q in zip(a2, b2)])


def _wp_rows(grid: Grid, p: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if p == 1:
        return _w1_rows(grid, a, b)
    return np.array([wasserstein(p, GridMeasure.normalized(grid, x), GridMeasure.normalized(grid, y))
                     for x, y in zip(a, b)])


def turnpike_report(spec: ModelSpec, traj: TrajectorySolution, stat, lambdas=(0.5,),
                    t0: float = 1.0, holder_p=(1, 2)) -> TurnpikeReport:
    """Turnpike gaps of a finite-horizon solution relative to the stationary
    solution ``stat`` (an :class:`~ergodic_mfg.mfg_stationary.MfgSolution`).

    Gaps per ``lambda``: (i) law distance, (ii) weighted value gap after
    anchoring, (iii) anchor-value oscillation, (iv) RVI gap for both signs,
    (vi) time-averaged law distance.  Global diagnostics: (v) the pairing
    ``Gamma`` and its increments with the monotonicity lower bound, (vii)
    anchor growth constant, (viii) sup_t of the weighted anchored value, (ix) Hoelder
    constants of ``t -> mu_t``, plus the comparison inequality for the
    stationary policy and the discrete Lyapunov moment bound.
    """
    grid = traj.grid
    a = grid.anchor_index
    dt, M = traj.dt, traj.M
    Vbar = stat.V.values
    mubar = stat.mu.weights
    rho = traj.rho_bar
    lyap = np.asarray(spec.lyapunov.value(grid.nodes), float)
    steps0 = int(round(t0 / dt))

    per = {}
    for lam in lambdas:
        c = int(round(lam * M))
        if c - steps0 < 0:
            warnings.warn(f"lambda={lam}: lambda*T - t0 < 0, skipped")
            continue
        win = np.arange(c - steps0, c + 1)
        g1 = float(np.max(_w1_rows(grid, traj.mu[win], mubar[None, :])))
        anchored = traj.phi[win] - traj.phi[win][:, [a]] - Vbar[None, :]
        g2 = float(np.max(np.abs(anchored) / lyap[None, :]))
        g3 = float(np.max(np.abs(traj.phi[c, a] - traj.phi[win, a])))
        plus = weighted_norm(traj.psi[c] - Vbar - rho, lyap)
        minus = weighted_norm(traj.psi[c] - Vbar + rho, lyap)
        avg = traj.mu[c:].mean(axis=0)
        g6 = wasserstein(1, GridMeasure.normalized(grid, avg), stat.mu)
        per[f"{lam:g}"] = {
            "lambda": lam, "gap_i": g1, "gap_ii": g2, "gap_iii": g3,
            "gap_iv_plus": plus, "gap_iv_minus": minus,
            "gap_iv_best_sign": "+1" if plus <= minus else "-1", "gap_vi": g6,
        }

    # (v) Gamma(k) = (mu[M-k] - mubar) . (phi[k] - Vbar)
    ks = np.arange(M + 1)
    gamma = np.einsum("kn,kn->k", traj.mu[M - ks] - mubar, traj.phi - Vbar)
    inc = np.diff(gamma)
    bound = np.array([dt * monotonicity_gap(spec, GridMeasure.normalized(grid, traj.mu[M - k]), stat.mu)
                      for k in range(M)]) if spec.interaction.kind != "none" else np.zeros(M)

    # (vii) |phi_t(a) - phi_{t-tau}(a)| <= C (1 + tau)
    anchor_vals = traj.phi[:, a]
    stride = max(1, M // 400)
    sub = anchor_vals[::stride]
    tsub = dt * np.arange(0, M + 1, stride)
    diff = np.abs(sub[:, None] - sub[None, :])
    tau = np.abs(tsub[:, None] - tsub[None, :])
    growth = float(np.max(diff / (1.0 + tau)))

    # (viii)
    rel_bound = float(np.max(np.abs(traj.phi - traj.phi[:, [a]]) / lyap[None, :]))

    # (ix) D_p(mu_t, mu_s) <= M_p sqrt|t - s| over dyadic lags
    holder = {}
    lags = [2**i for i in range(int(np.log2(max(M, 1))) + 1) if 2**i <= M]
    for p in holder_p:
        best = 0.0
        for lag in lags:
            idx = np.arange(0, M + 1 - lag, max(1, (M + 1 - lag) // 200))
            d = _wp_rows(grid, p, traj.mu[idx], traj.mu[idx + lag])
            best = max(best, float(np.max(d)) / np.sqrt(lag * dt))
        holder[f"p{p}"] = best

    # comparison inequality for the stationary policy
    disc = Discretization(spec, grid)
    rbar = disc.policy_cost(stat.policy)
    lhs = mubar @ traj.phi[M]
    Fterm = np.array([mubar @ interaction_field(spec, grid, traj.mu[M - k]) for k in range(M)])
    rhs = mubar @ traj.phi[0] + dt * np.sum(mubar @ rbar + Fterm - rho)
    comparison = float(rhs - lhs)

    # discrete Lyapunov moment recursion
    c0, c1 = spec.lyapunov.c0, spec.lyapunov.c1
    m = traj.mu @ lyap
    allowed = (m[:-1] + dt * c0) / (1.0 + dt * c1)
    lyap_violation = float(np.max(m[1:] - allowed))

    return TurnpikeReport(
        T=traj.T, per_lambda=per, gamma=gamma, gamma_increments=inc, gamma_lower_bound=bound,
        min_increment=float(inc.min()) if M else 0.0,
        min_increment_slack=float(np.min(inc - bound)) if M else 0.0,
        growth_constant=growth, relative_value_bound=rel_bound, holder=holder,
        comparison_slack=comparison, lyapunov_violation=lyap_violation, viloc=traj.viloc,
    )


# ----------------------------------------------------------------------------
# geometric ergodicity


@dataclass
class ErgodicityFit:
    M0: float
    gamma: float
    passed: bool
    degenerate: bool
    n_points: int
    detail: str = ""


def geometric_ergodicity_fit(spec: ModelSpec, grid: Grid, policy, h, x_list, dt: float = 0.01,
                             t_max: float = 20.0, floor: float = 1e-8) -> ErgodicityFit:
    """Fit ``|E_x h(X_t) - mu_v(h)| ~ M0 ||h||_V (1 + V(x)) e^{-gamma t}``.

    The semigroup is propagated with implicit Euler on the policy generator
    and ``gamma`` comes from a pooled least-squares fit of ``log|e_t(x)|``
    on ``t`` (one intercept per starting point) over the samples above
    ``floor``.
    """
    disc = Discretization(spec, grid)
    Q = disc.generator(policy)
    hv = np.asarray(h(grid.nodes) if callable(h) else h, float)
    mu = stationary_weights(Q, grid.anchor_index)
    lyap = np.asarray(spec.lyapunov.value(grid.nodes), float)
    idx = [grid.nearest_index(np.atleast_1d(x)) for x in x_list]
    f = hv - mu @ hv
    if np.max(np.abs(f[idx])) <= floor:
        return ErgodicityFit(0.0, np.inf, True, True, 0, "degenerate: h is constant under mu_v")
    banded = _banded(grid)
    steps = int(round(t_max / dt))
    samples = [f[idx]]
    for _ in range(steps):
        f = _implicit_solve(Q, dt, f, banded=banded)
        samples.append(f[idx])
        if np.max(np.abs(f[idx])) <= floor:
            break
    E = np.abs(np.array(samples))  # (steps+1, len(x))
    t = dt * np.arange(E.shape[0])
    rows, cols = np.nonzero(E > floor)
    if rows.size < 3:
        return ErgodicityFit(0.0, 0.0, False, False, int(rows.size), "too few points above the floor")
    n_x = len(idx)
    A = np.zeros((rows.size, n_x + 1))
    A[np.arange(rows.size), cols] = 1.0
    A[:, -1] = -t[rows]
    coef, *_ = np.linalg.lstsq(A, np.log(E[rows, cols]), rcond=None)
    gamma = float(coef[-1])
    hnorm = weighted_norm(hv, lyap)
    M0 = float(max(np.exp(coef[c]) / (hnorm * (1.0 + lyap[i])) for c, i in enumerate(idx)
                   if np.any(cols == c)))
    return ErgodicityFit(M0, gamma, gamma > 0, False, int(rows.size))
