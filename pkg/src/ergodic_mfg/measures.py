"""Probability measures on grid nodes and the distances between them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment, linprog
from scipy.stats import norm

from .grid import Grid
from .io import read_csv, write_csv
from .model import ModelSpec, interaction_field

MASS_TOL = 1e-12
MAX_LP_SUPPORT = 4000


@dataclass(frozen=True, eq=False)
class GridMeasure:
    grid: Grid
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.grid.n_total,):
            raise ValueError(f"expected {self.grid.n_total} weights, got shape {w.shape}")
        if np.any(w < 0):
            raise ValueError(f"negative weight {w.min():.3g}")
        if abs(w.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"weights sum to {w.sum():.17g}, not 1")
        object.__setattr__(self, "weights", w)

    @classmethod
    def normalized(cls, grid: Grid, w) -> GridMeasure:
        w = np.maximum(np.asarray(w, dtype=float), 0.0)
        return cls(grid, w / w.sum())

    @classmethod
    def delta(cls, grid: Grid, index: int) -> GridMeasure:
        w = np.zeros(grid.n_total)
        w[index] = 1.0
        return cls(grid, w)

    @classmethod
    def delta_at(cls, grid: Grid, x) -> GridMeasure:
        return cls.delta(grid, grid.nearest_index(x))

    @classmethod
    def uniform(cls, grid: Grid) -> GridMeasure:
        return cls(grid, np.full(grid.n_total, 1.0 / grid.n_total))

    @classmethod
    def gaussian(cls, grid: Grid, mean=0.0, var=1.0) -> GridMeasure:
        """Normal law (independent axes) projected on the grid cells; the
        tails beyond the box go to the boundary cells."""
        mean = np.broadcast_to(np.asarray(mean, float), (grid.dimension,))
        var = np.broadcast_to(np.asarray(var, float), (grid.dimension,))
        masses = []
        for ax, h, m, v in zip(grid.axes, grid.spacing, mean, var):
            edges = np.concatenate([[-np.inf], 0.5 * (ax[1:] + ax[:-1]), [np.inf]])
            masses.append(np.diff(norm.cdf(edges, loc=m, scale=np.sqrt(v))))
        w = masses[0]
        for extra in masses[1:]:
            w = np.outer(w, extra).ravel()
        return cls.normalized(grid, w)

    @property
    def n(self) -> int:
        return self.grid.n_total

    def mean(self) -> np.ndarray:
        return self.weights @ self.grid.nodes

    def integrate(self, f) -> float:
        return float(self.weights @ np.asarray(f, float))

    def mix(self, other: GridMeasure, theta: float) -> GridMeasure:
        """``(1 - theta) self + theta other``."""
        _same_grid(self, other)
        return GridMeasure.normalized(self.grid, (1 - theta) * self.weights + theta * other.weights)

    def to_csv(self, path) -> None:
        names = ["x", "y"][: self.grid.dimension]
        cols = [self.grid.nodes[:, k] for k in range(self.grid.dimension)]
        write_csv(path, names + ["weight"], cols + [self.weights])

    @classmethod
    def from_csv(cls, path, grid: Grid) -> GridMeasure:
        header, data = read_csv(path)
        if data.shape[0] != grid.n_total or not np.allclose(data[:, : grid.dimension], grid.nodes):
            raise ValueError(f"{path}: node coordinates do not match the grid")
        return cls(grid, data[:, header.index("weight")])


def _same_grid(mu: GridMeasure, nu: GridMeasure) -> None:
    if not mu.grid.compatible(nu.grid):
        raise ValueError("measures live on different grids")


def _wasserstein_1d(x: np.ndarray, a: np.ndarray, b: np.ndarray, p: float) -> float:
    ca, cb = np.cumsum(a), np.cumsum(b)
    ca[-1] = cb[-1] = 1.0
    qs = np.union1d(ca, cb)
    qs = qs[(qs > 0) & (qs <= 1.0)]
    lo = np.concatenate([[0.0], qs[:-1]])
    dq = qs - lo
    mid = 0.5 * (lo + qs)
    n = len(x)
    xa = x[np.minimum(np.searchsorted(ca, mid, side="left"), n - 1)]
    xb = x[np.minimum(np.searchsorted(cb, mid, side="left"), n - 1)]
    return float(np.sum(dq * np.abs(xa - xb) ** p)) ** (1.0 / p)


def _transport_lp(xa, a, xb, b, p: float) -> float:
    na, nb = len(a), len(b)
    cost = np.sum(np.abs(xa[:, None, :] - xb[None, :, :]) ** 2, axis=-1) ** (p / 2)
    rows = sp.kron(sp.identity(na), np.ones((1, nb)))
    cols = sp.kron(np.ones((1, na)), sp.identity(nb))
    A = sp.vstack([rows, cols]).tocsr()
    res = linprog(cost.ravel(), A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return max(float(res.fun), 0.0) ** (1.0 / p)


def wasserstein(p: float, mu: GridMeasure, nu: GridMeasure) -> float:
    """Wasserstein-``p`` distance between two grid measures.

    1D: exact quantile coupling.  2D: exact transport LP on the joint support
    (at most ``MAX_LP_SUPPORT`` nodes).
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    _same_grid(mu, nu)
    if mu.grid.dimension == 1:
        return _wasserstein_1d(mu.grid.nodes[:, 0], mu.weights, nu.weights, p)
    sa = np.flatnonzero(mu.weights > 0)
    sb = np.flatnonzero(nu.weights > 0)
    if len(np.union1d(sa, sb)) > MAX_LP_SUPPORT:
        raise ValueError(
            f"joint support of {len(np.union1d(sa, sb))} nodes exceeds {MAX_LP_SUPPORT}; coarsen the grid"
        )
    nodes = mu.grid.nodes
    return _transport_lp(nodes[sa], mu.weights[sa], nodes[sb], nu.weights[sb], p)


def empirical_wasserstein(p: float, xs, ys) -> float:
    """Exact ``D_p`` between two equal-size uniform empirical measures."""
    xs = np.asarray(xs, float).reshape(len(xs), -1)
    ys = np.asarray(ys, float).reshape(len(ys), -1)
    if xs.shape != ys.shape:
        raise ValueError("point lists must have the same shape")
    cost = np.sum((xs[:, None, :] - ys[None, :, :]) ** 2, axis=-1) ** (p / 2)
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].mean()) ** (1.0 / p)


def total_variation(mu: GridMeasure, nu: GridMeasure) -> float:
    _same_grid(mu, nu)
    return 0.5 * float(np.abs(mu.weights - nu.weights).sum())


def moment(p: float, mu: GridMeasure) -> float:
    if p < 1:
        raise ValueError("p must be >= 1")
    return float(mu.weights @ mu.grid.norms**p)


def monotonicity_gap(spec: ModelSpec, mu: GridMeasure, nu: GridMeasure) -> float:
    """``sum_x (F(x, mu) - F(x, nu)) (mu(x) - nu(x))``; zero without interaction."""
    _same_grid(mu, nu)
    if spec.interaction.kind == "none":
        return 0.0
    dw = mu.weights - nu.weights
    dF = interaction_field(spec, mu.grid, mu.weights) - interaction_field(spec, mu.grid, nu.weights)
    return float(dF @ dw)


def _hat_responses(g: np.ndarray, grid: Grid, stride: int) -> np.ndarray:
    """``sum_k g_k f_j(k)`` for tensor hats ``f_j`` of half-width ``stride``
    centred on every ``stride``-th node."""
    from scipy.ndimage import convolve1d

    hat = 1.0 - np.abs(np.arange(-stride + 1, stride)) / stride
    G = g.reshape(grid.shape)
    for axis in range(grid.dimension):
        G = convolve1d(G, hat, axis=axis, mode="constant", cval=0.0)
    sl = tuple(slice(0, None, stride) for _ in range(grid.dimension))
    return G[sl].ravel()


def occupation_residual(Q_v, mu: GridMeasure, test_count: int | None = None) -> float:
    """Largest ``|sum_i mu_i (Q_v f)_i| / ||f||_inf`` over hat functions on a
    strided subgrid plus the monomials ``x, x^2`` (and ``xy`` in 2D)."""
    Q = getattr(Q_v, "matrix", Q_v)
    grid = mu.grid
    g = Q.T @ mu.weights
    if test_count is None:
        stride = 1
    else:
        per_axis = max(1.0, test_count ** (1.0 / grid.dimension))
        stride = max(1, int(min(grid.shape) // per_axis))
    out = np.abs(_hat_responses(g, grid, stride)).max()
    x = grid.nodes
    monomials = [x[:, k] for k in range(grid.dimension)] + [x[:, k] ** 2 for k in range(grid.dimension)]
    if grid.dimension == 2:
        monomials.append(x[:, 0] * x[:, 1])
    for f in monomials:
        out = max(out, abs(float(g @ f)) / np.abs(f).max())
    return float(out)


def project_truncate(mu: GridMeasure, R: float) -> GridMeasure:
    """Move the mass outside the closed ball ``B_R`` to the anchor node."""
    grid = mu.grid
    if not 0 < R <= max(grid.half_width) * np.sqrt(grid.dimension) + 1e-12:
        raise ValueError(f"truncation radius {R} outside (0, L]")
    w = mu.weights.copy()
    outside = grid.norms > R + 1e-12
    moved = w[outside].sum()
    w[outside] = 0.0
    w[grid.anchor_index] += moved
    return GridMeasure(grid, w)
