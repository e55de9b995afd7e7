"""Ergodic control for a frozen environment measure.

Policy iteration on the upwind Markov chain: each evaluation solves the
augmented linear system for ``(V, rho)`` with ``V(anchor) = 0``; each
improvement takes the nodewise argmin of ``(Q_u V)_i + r(x_i, u) + F_i``
over the control grid.  A policy is only changed at nodes where another
control is strictly better, which rules out cycling between tied controls.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .grid import DiscreteGenerator, Discretization, Grid
from .io import read_csv, read_json, write_csv, write_json
from .measures import GridMeasure
from .model import ModelSpec, golden_min, interaction_field

NEGATIVE_WEIGHT_TOL = 1e-12


class SolverError(RuntimeError):
    """Singular system or failure to converge."""


@dataclass(frozen=True, eq=False)
class ValueField:
    grid: Grid
    values: np.ndarray

    @classmethod
    def normalized(cls, grid: Grid, values) -> ValueField:
        v = np.asarray(values, float)
        return cls(grid, v - v[grid.anchor_index])

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True, eq=False)
class Policy:
    """Control per node, ``controls`` of shape ``(n, m)``.  ``index`` points
    into the discrete control grid when every control is a grid point."""

    grid: Grid
    controls: np.ndarray
    index: np.ndarray | None = None

    @classmethod
    def from_index(cls, grid: Grid, control_grid: np.ndarray, index) -> Policy:
        index = np.asarray(index, dtype=np.int64)
        return cls(grid, control_grid[index], index)

    def in_box(self, spec: ModelSpec) -> bool:
        lo, hi = spec.control_bounds
        return bool(np.all(self.controls >= lo - 1e-12) and np.all(self.controls <= hi + 1e-12))


@dataclass
class ErgodicOptions:
    tol: float = 1e-9
    max_iters: int = 200
    refine: bool | None = None  # None: follow spec.strictly_convex
    refine_rounds: int = 20


@dataclass(eq=False)
class ErgodicSolution:
    V: ValueField
    rho: float
    policy: Policy
    mu_v: GridMeasure
    residual: float
    iterations: int
    converged: bool = True
    rho_history: list[float] = field(default_factory=list)

    @property
    def rho_monotone(self) -> bool:
        """Policy improvement never increased ``rho`` by more than 1e-10."""
        h = np.asarray(self.rho_history)
        return bool(np.all(np.diff(h) <= 1e-10 * max(1.0, np.abs(h).max(initial=0.0))))

    def save(self, directory) -> None:
        d = Path(directory)
        grid = self.V.grid
        coords = [grid.nodes[:, k] for k in range(grid.dimension)]
        names = ["x", "y"][: grid.dimension]
        write_json(d / "ergodic.json", {
            "rho": self.rho, "residual": self.residual, "iterations": self.iterations,
            "converged": self.converged, "rho_history": self.rho_history,
        })
        write_csv(d / "value.csv", names + ["V"], coords + [self.V.values])
        u = self.policy.controls
        write_csv(d / "policy.csv", names + [f"u{k}" for k in range(u.shape[1])],
                  coords + [u[:, k] for k in range(u.shape[1])])
        self.mu_v.to_csv(d / "mu.csv")

    @classmethod
    def load(cls, directory, grid: Grid) -> ErgodicSolution:
        d = Path(directory)
        meta = read_json(d / "ergodic.json")
        _, value = read_csv(d / "value.csv")
        _, pol = read_csv(d / "policy.csv")
        return cls(
            V=ValueField(grid, value[:, -1]),
            rho=meta["rho"],
            policy=Policy(grid, pol[:, grid.dimension:]),
            mu_v=GridMeasure.from_csv(d / "mu.csv", grid),
            residual=meta["residual"],
            iterations=meta["iterations"],
            converged=meta["converged"],
            rho_history=meta["rho_history"],
        )


# ----------------------------------------------------------------------------
# linear algebra


def _matrix(Q):
    return Q.matrix if isinstance(Q, DiscreteGenerator) else sp.csr_matrix(Q)


def evaluate_policy(Q, cost: np.ndarray, anchor: int) -> tuple[np.ndarray, float]:
    """Solve ``Q V - rho 1 = -cost`` with ``V(anchor) = 0``."""
    Q = _matrix(Q)
    n = Q.shape[0]
    col = sp.csr_matrix(-np.ones((n, 1)))
    row = sp.csr_matrix(([1.0], ([0], [anchor])), shape=(1, n + 1))
    A = sp.vstack([sp.hstack([Q, col]), row]).tocsc()
    try:
        sol = splu(A).solve(np.concatenate([-np.asarray(cost, float), [0.0]]))
    except RuntimeError as exc:
        raise SolverError(f"singular policy-evaluation system (disconnected chain?): {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise SolverError("policy evaluation produced non-finite values")
    V, rho = sol[:n], float(sol[n])
    V[anchor] = 0.0
    return V, rho


def stationary_weights(Q, anchor: int = 0) -> np.ndarray:
    """Weights of the invariant law of a rate matrix: ``mu^T Q = 0``, ``sum mu = 1``."""
    Q = _matrix(Q)
    n = Q.shape[0]
    keep = np.ones(n)
    keep[anchor] = 0.0
    A = sp.diags(keep) @ Q.T.tocsr() + sp.csr_matrix(
        (np.ones(n), (np.full(n, anchor), np.arange(n))), shape=(n, n)
    )
    rhs = np.zeros(n)
    rhs[anchor] = 1.0
    try:
        w = splu(A.tocsc()).solve(rhs)
    except RuntimeError as exc:
        raise SolverError(f"singular stationary system: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise SolverError("stationary solve produced non-finite weights")
    if w.min() < -NEGATIVE_WEIGHT_TOL:
        raise SolverError(f"stationary weight {w.min():.3g} below -{NEGATIVE_WEIGHT_TOL:g}")
    w = np.maximum(w, 0.0)
    return w / w.sum()


def stationary_distribution(Q, grid: Grid | None = None):
    """Invariant probability of a policy generator.

    Returns a :class:`GridMeasure` on ``grid`` (or on the generator's own
    grid); a bare matrix with no grid attached yields the weight vector.
    """
    grid = grid or getattr(Q, "grid", None)
    n = _matrix(Q).shape[0]
    if grid is None:
        return stationary_weights(Q)
    if grid.n_total != n:
        raise ValueError(f"generator has {n} states but the grid has {grid.n_total} nodes")
    return GridMeasure(grid, stationary_weights(Q, grid.anchor_index))


# ----------------------------------------------------------------------------
# policy iteration


def _coupling(spec: ModelSpec, grid: Grid, mu: GridMeasure | None, coupling) -> np.ndarray:
    if coupling is not None:
        return np.broadcast_to(np.asarray(coupling, float), (grid.n_total,)).copy()
    if mu is None or spec.interaction.kind == "none":
        return np.zeros(grid.n_total)
    return interaction_field(spec, grid, mu.weights)


def continuous_argmin(disc: Discretization, V: np.ndarray, polish: bool = True
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Minimiser of ``(Q_u V)_i + base_cost(x_i, u)`` over the control box:
    parabolic step from the grid argmin, then (``polish``) a golden-section
    search per control axis within one grid step of it.

    A polished control replaces the parabolic one only if it lowers the
    objective by more than the rounding error of evaluating it; otherwise
    near a flat minimum the golden search would follow round-off and the
    control would depend on, e.g., an additive constant in the cost.
    """
    u, val = disc.refined_argmin(V)
    if not polish:
        return u, val
    noise = disc.rounding_error(V, u, val)
    lo_box, hi_box = disc.spec.control_bounds
    for axis, ax in enumerate(disc.spec.control_axes):
        if len(ax) < 2:
            continue
        step = ax[1] - ax[0]
        lo = np.maximum(u[:, axis] - step, lo_box[axis])
        hi = np.minimum(u[:, axis] + step, hi_box[axis])

        def objective(s, axis=axis):
            trial = u.copy()
            trial[:, axis] = s
            return disc.q_values_at(V, trial) + disc.base_cost_at(trial)

        s_opt, v_opt = golden_min(objective, lo, hi)
        better = v_opt < val - noise
        u[better, axis] = s_opt[better]
        val = np.where(better, v_opt, val)
    return u, val


def solve_ergodic_hjb(
    spec: ModelSpec,
    grid: Grid,
    mu: GridMeasure | None = None,
    opts: ErgodicOptions | None = None,
    *,
    coupling=None,
    disc: Discretization | None = None,
    initial_policy=None,
) -> ErgodicSolution:
    """Ergodic HJB ``min_u [(Q_u V)_i + r(x_i, u, mu)] = rho``, ``V(anchor) = 0``.

    Parameters
    ----------
    mu
        Environment measure entering ``F(., mu)``; ignored when ``coupling``
        (a nodal vector added to the running cost) is given.
    opts
        Tolerance, iteration cap and continuous refinement switch.
    disc
        Reusable :class:`Discretization` for repeated calls.
    initial_policy
        Starting control indices; defaults to the greedy argmin at ``V = 0``.

    Returns
    -------
    ErgodicSolution
        Raises :class:`SolverError` if the policy does not settle within
        ``max_iters`` improvement steps.
    """
    opts = opts or ErgodicOptions()
    disc = disc or Discretization(spec, grid)
    F = _coupling(spec, grid, mu, coupling)
    anchor = grid.anchor_index
    rows = np.arange(disc.n)
    cost = disc.cost + F[:, None]

    idx = (np.argmin(cost, axis=1) if initial_policy is None
           else np.asarray(initial_policy, dtype=np.int64))
    history: list[float] = []
    converged = False
    for it in range(1, opts.max_iters + 1):
        Q = disc.generator(idx)
        V, rho = evaluate_policy(Q, cost[rows, idx], anchor)
        history.append(rho)
        H = disc.q_values(V) + cost
        cand = np.argmin(H, axis=1)
        current = H[rows, idx]
        scale = 1e-12 * max(1.0, np.abs(current).max())
        change = H[rows, cand] < current - scale
        if not change.any():
            converged = True
            break
        idx = np.where(change, cand, idx)
    if not converged:
        raise SolverError(f"policy iteration did not settle after {opts.max_iters} steps")

    policy = Policy(grid, disc.controls[idx], idx)
    Hmin = H.min(axis=1)
    refine = spec.strictly_convex if opts.refine is None else opts.refine
    if refine:
        for _ in range(opts.refine_rounds):
            u, _ = continuous_argmin(disc, V)
            Qr = disc.generator(u)
            Vr, rho_r = evaluate_policy(Qr, disc.base_cost_at(u) + F, anchor)
            if rho_r > rho + 1e-13 * max(1.0, abs(rho)):
                break
            done = rho - rho_r <= opts.tol * 1e-2
            policy, V, rho, Q = Policy(grid, u), Vr, rho_r, Qr
            history.append(rho)
            if done:
                break
        on_grid = (disc.q_values(V) + disc.cost).min(axis=1)
        Hmin = np.minimum(on_grid, continuous_argmin(disc, V)[1]) + F

    residual = float(np.abs(Hmin - rho).max())
    mu_v = GridMeasure(grid, stationary_weights(Q, anchor))
    return ErgodicSolution(
        V=ValueField(grid, V), rho=rho, policy=policy, mu_v=mu_v, residual=residual,
        iterations=it, converged=residual <= opts.tol * max(1.0, abs(rho)) or not refine,
        rho_history=history,
    )


def best_response(spec: ModelSpec, grid: Grid, mu: GridMeasure,
                  opts: ErgodicOptions | None = None, **kw) -> tuple[Policy, GridMeasure, float]:
    """The discrete maps ``A(mu)`` / ``A*(mu)``: optimal policy, its invariant
    law and the optimal ergodic value for the cost frozen at ``mu``."""
    sol = solve_ergodic_hjb(spec, grid, mu, opts, **kw)
    return sol.policy, sol.mu_v, sol.rho


def policy_value(spec: ModelSpec, grid: Grid, policy, coupling=None,
                 disc: Discretization | None = None) -> tuple[float, GridMeasure]:
    """Exact ergodic cost of a fixed policy: ``rho = sum_i mu_i r_i`` with
    ``mu`` its invariant law."""
    disc = disc or Discretization(spec, grid)
    if not isinstance(policy, Policy):
        arr = np.asarray(policy)
        policy = (Policy(grid, arr.reshape(disc.n, -1)) if arr.dtype.kind == "f"
                  else Policy.from_index(grid, disc.controls, arr))
    Q = disc.generator(policy)
    w = stationary_weights(Q, grid.anchor_index)
    r = disc.policy_cost(policy) + _coupling(spec, grid, None, coupling)
    return float(w @ r), GridMeasure(grid, w)


def lyapunov_drift_excess(spec: ModelSpec, grid: Grid, policy: Policy,
                          disc: Discretization | None = None) -> float:
    """``max_i [(Q_v Lyap)_i - c0 + c1 Lyap_i] / ||Lyap||_inf``; nonpositive
    when the discrete Lyapunov inequality holds for ``policy``."""
    disc = disc or Discretization(spec, grid)
    lyap = spec.lyapunov
    W = np.asarray(lyap.value(grid.nodes), float)
    QW = disc.generator(policy) @ W
    return float(np.max(QW - lyap.c0 + lyap.c1 * W) / np.abs(W).max())
