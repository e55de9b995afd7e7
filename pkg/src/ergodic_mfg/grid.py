"""Truncated-box grids and monotone rate-matrix approximations of the
controlled generator ``L^u f = a^{ij} d_ij f + b . grad f``.

Drift is upwinded (first order) by default; the ``central_monotone``
scheme uses central drift differences wherever the diffusion rates keep the
row monotone and falls back to upwinding elsewhere.  Diffusion uses central differences and the
2D cross derivative uses the seven-point monotone splitting.  Transitions
that would leave the box are dropped, which gives a reflecting (mass
preserving) boundary.  Every assembled matrix is a conservative rate matrix:
nonnegative off-diagonal entries, zero row sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

DEFAULT_MAX_NODES = 250_000

# neighbour offsets in multi-index space; axis moves first, then diagonals
_OFFSETS = {
    1: [(1,), (-1,)],
    2: [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)],
}


class MonotonicityError(ValueError):
    """The cross-diffusion term is too large for a monotone stencil."""

    def __init__(self, node: int, coordinate: np.ndarray, message: str):
        super().__init__(f"node {node} at {np.round(coordinate, 6).tolist()}: {message}")
        self.node = node
        self.coordinate = coordinate


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on the box ``[-L_1, L_1] x ... x [-L_d, L_d]``."""

    half_width: tuple[float, ...]
    nodes_per_axis: tuple[int, ...]
    max_nodes: int = DEFAULT_MAX_NODES

    def __post_init__(self):
        hw = tuple(float(v) for v in np.atleast_1d(self.half_width))
        n = tuple(int(v) for v in np.atleast_1d(self.nodes_per_axis))
        if len(n) == 1 and len(hw) > 1:
            n = n * len(hw)
        if len(hw) == 1 and len(n) > 1:
            hw = hw * len(n)
        object.__setattr__(self, "half_width", hw)
        object.__setattr__(self, "nodes_per_axis", n)
        if len(n) not in (1, 2):
            raise ValueError(f"only d in {{1, 2}} is supported, got d={len(n)}")
        if any(L <= 0 or not np.isfinite(L) for L in hw):
            raise ValueError(f"half widths must be positive and finite, got {hw}")
        if any(k < 3 for k in n):
            raise ValueError(f"need at least 3 nodes per axis, got {n}")
        if int(np.prod(n)) > self.max_nodes:
            raise ValueError(
                f"grid has {int(np.prod(n))} nodes, above the cap of {self.max_nodes}"
            )

    @classmethod
    def uniform(cls, half_width: float, n: int, dimension: int = 1, **kw) -> Grid:
        return cls((half_width,) * dimension, (n,) * dimension, **kw)

    @classmethod
    def from_spacing(cls, half_width: float, h: float, dimension: int = 1, **kw) -> Grid:
        """Grid with spacing ``h``; ``2L/h`` must be (close to) an integer."""
        steps = 2.0 * half_width / h
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError(f"2L/h = {steps} is not an integer")
        return cls.uniform(half_width, int(round(steps)) + 1, dimension, **kw)

    @property
    def dimension(self) -> int:
        return len(self.nodes_per_axis)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nodes_per_axis

    @property
    def n_total(self) -> int:
        return int(np.prod(self.nodes_per_axis))

    @cached_property
    def spacing(self) -> np.ndarray:
        return np.array([2 * L / (n - 1) for L, n in zip(self.half_width, self.nodes_per_axis)])

    @cached_property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(-L, L, n) for L, n in zip(self.half_width, self.nodes_per_axis)]

    @cached_property
    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``(n_total, d)``, row-major ordering."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def anchor_index(self) -> int:
        idx = [int(np.argmin(np.abs(ax))) for ax in self.axes]
        for ax, i, h in zip(self.axes, idx, self.spacing):
            if abs(ax[i]) > h / 2 + 1e-12 * h:
                raise ValueError("origin is not within h/2 of a grid node")
        return int(np.ravel_multi_index(idx, self.shape))

    @cached_property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.nodes, axis=1)

    def index(self, multi_index) -> int:
        return int(np.ravel_multi_index(tuple(multi_index), self.shape))

    def nearest_index(self, x) -> int:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = [
            int(np.clip(np.rint((xi + L) / h), 0, n - 1))
            for xi, L, h, n in zip(x, self.half_width, self.spacing, self.nodes_per_axis)
        ]
        return self.index(idx)

    @cached_property
    def offsets(self) -> list[tuple[int, ...]]:
        return _OFFSETS[self.dimension]

    @cached_property
    def neighbors(self) -> np.ndarray:
        """Neighbour index per (direction, node); ``-1`` outside the box."""
        multi = np.array(np.unravel_index(np.arange(self.n_total), self.shape))
        out = np.empty((len(self.offsets), self.n_total), dtype=np.int64)
        for k, off in enumerate(self.offsets):
            target = multi + np.array(off)[:, None]
            inside = np.all((target >= 0) & (target < np.array(self.shape)[:, None]), axis=0)
            flat = np.full(self.n_total, -1, dtype=np.int64)
            flat[inside] = np.ravel_multi_index(tuple(target[:, inside]), self.shape)
            out[k] = flat
        return out

    def compatible(self, other: Grid) -> bool:
        return self.half_width == other.half_width and self.nodes_per_axis == other.nodes_per_axis


DRIFT_SCHEMES = ("upwind", "central_monotone")


def drift_split(b, rate_fwd, rate_bwd, h: float, scheme: str = "upwind"):
    """Forward/backward rate contributions of drift component ``b``.

    ``upwind``: ``b+/h`` forward, ``b-/h`` backward.  ``central_monotone``:
    ``+-b/(2h)`` where the diffusion rates of both neighbours dominate
    ``|b|/(2h)`` (so the row stays a rate matrix), upwind elsewhere.
    """
    up_f, up_b = np.maximum(b, 0.0) / h, np.maximum(-b, 0.0) / h
    if scheme == "upwind":
        return up_f, up_b
    if scheme != "central_monotone":
        raise ValueError(f"unknown drift scheme {scheme!r}; choose from {DRIFT_SCHEMES}")
    half = b / (2.0 * h)
    ok = np.abs(half) <= np.minimum(rate_fwd, rate_bwd)
    return np.where(ok, half, up_f), np.where(ok, -half, up_b)


def _diffusion_rates(grid: Grid, a: np.ndarray, check: bool = True) -> np.ndarray:
    d = grid.dimension
    h = grid.spacing
    rates = np.zeros((len(grid.offsets), grid.n_total))
    for k in range(d):
        rates[2 * k] = rates[2 * k + 1] = a[:, k, k] / h[k] ** 2
    if d == 2:
        cross = a[:, 0, 1] / (h[0] * h[1])
        if check:
            slack = np.minimum(a[:, 0, 0] / h[0] ** 2, a[:, 1, 1] / h[1] ** 2) - np.abs(cross)
            bad = np.flatnonzero(slack < -1e-12 * np.abs(cross))
            if bad.size:
                i = int(bad[0])
                raise MonotonicityError(
                    i,
                    grid.nodes[i],
                    f"|a12|/(h1 h2) = {abs(cross[i]):.6g} exceeds the diagonal diffusion "
                    f"{min(a[i, 0, 0] / h[0] ** 2, a[i, 1, 1] / h[1] ** 2):.6g}",
                )
        pos, neg = np.maximum(cross, 0.0), np.maximum(-cross, 0.0)
        rates[:4] -= np.abs(cross)
        rates[4] = pos
        rates[5] = pos
        rates[6] = neg
        rates[7] = neg
        np.maximum(rates, 0.0, out=rates)
    rates[grid.neighbors < 0] = 0.0
    return rates


def _rates(grid: Grid, drift: np.ndarray, a: np.ndarray, check: bool = True,
           scheme: str = "upwind") -> np.ndarray:
    """Transition rates per (direction, node) for nodal drift ``(n, d)`` and
    diffusion matrix ``a = sigma sigma^T / 2`` of shape ``(n, d, d)``."""
    rates = _diffusion_rates(grid, a, check)
    for k in range(grid.dimension):
        fwd, bwd = drift_split(drift[:, k], rates[2 * k], rates[2 * k + 1], grid.spacing[k], scheme)
        rates[2 * k] += fwd
        rates[2 * k + 1] += bwd
    rates[grid.neighbors < 0] = 0.0
    return rates


@dataclass(frozen=True)
class DiscreteGenerator:
    """Conservative rate matrix approximating ``L^u`` (or ``L^v`` for a policy)."""

    matrix: sp.csr_matrix
    control: np.ndarray | None = None
    from_policy: bool = False
    grid: Grid | None = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def transpose_system(self, dt: float) -> sp.csc_matrix:
        return (sp.identity(self.n, format="csc") - dt * self.matrix.T).tocsc()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def export_triplets(self, path) -> None:
        """Write ``row col value`` lines, sorted row-major, 17 significant digits."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(Path(path), "w") as fh:
            for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                fh.write(f"{r} {c} {v:.17g}\n")


def read_triplets(path, n: int) -> sp.csr_matrix:
    data = np.loadtxt(path, ndmin=2)
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, n))


@dataclass
class _Pattern:
    """Fixed CSR sparsity pattern of the nearest-neighbour stencil."""

    indptr: np.ndarray
    indices: np.ndarray
    perm: np.ndarray
    valid: np.ndarray = field(repr=False)


def _pattern(grid: Grid) -> _Pattern:
    nbr = grid.neighbors
    valid = nbr >= 0
    rows = [np.flatnonzero(v) for v in valid]
    cols = [nbr[k][valid[k]] for k in range(len(rows))]
    rows.append(np.arange(grid.n_total))
    cols.append(np.arange(grid.n_total))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    perm = np.lexsort((cols, rows))
    indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=grid.n_total))])
    return _Pattern(indptr, cols[perm], perm, valid)


def _assemble(grid: Grid, pattern: _Pattern, rates: np.ndarray) -> sp.csr_matrix:
    off = [rates[k][pattern.valid[k]] for k in range(rates.shape[0])]
    diag = -rates.sum(axis=0)
    data = np.concatenate(off + [diag])[pattern.perm]
    n = grid.n_total
    return sp.csr_matrix((data, pattern.indices, pattern.indptr), shape=(n, n))


def _diffusion_a(spec, grid: Grid) -> np.ndarray:
    sigma = np.asarray(spec.diffusion(grid.nodes), dtype=float)
    sigma = np.broadcast_to(sigma, (grid.n_total, grid.dimension, grid.dimension))
    a = 0.5 * np.einsum("nij,nkj->nik", sigma, sigma)
    if not np.all(np.isfinite(a)):
        bad = int(np.flatnonzero(~np.isfinite(a).all(axis=(1, 2)))[0])
        raise ValueError(f"diffusion is not finite at node {bad} ({grid.nodes[bad]})")
    return a


def _scheme(spec) -> str:
    return getattr(spec, "drift_scheme", "upwind")


def _check_dim(spec, grid: Grid) -> None:
    if spec.dimension != grid.dimension:
        raise ValueError(
            f"dimension mismatch: model has d={spec.dimension}, grid has d={grid.dimension}"
        )


def _nodal_drift(spec, grid: Grid, controls: np.ndarray) -> np.ndarray:
    controls = np.broadcast_to(np.asarray(controls, float), (grid.n_total, spec.control_dim))
    b = np.asarray(spec.drift(grid.nodes, controls), dtype=float)
    b = np.broadcast_to(b, (grid.n_total, grid.dimension))
    if not np.all(np.isfinite(b)):
        bad = int(np.flatnonzero(~np.isfinite(b).all(axis=1))[0])
        raise ValueError(f"drift is not finite at node {bad} ({grid.nodes[bad]})")
    return b


def build_generator(spec, grid: Grid, u) -> DiscreteGenerator:
    """Rate matrix of ``L^u`` for a single control value ``u``."""
    _check_dim(spec, grid)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    lo, hi = spec.control_bounds
    if np.any(u < lo - 1e-12) or np.any(u > hi + 1e-12):
        raise ValueError(f"control {u} outside the control box [{lo}, {hi}]")
    rates = _rates(grid, _nodal_drift(spec, grid, u), _diffusion_a(spec, grid), scheme=_scheme(spec))
    return DiscreteGenerator(_assemble(grid, _pattern(grid), rates), control=u, grid=grid)


def apply_generator(Q: DiscreteGenerator, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (Q.n,):
        raise ValueError(f"expected a node vector of length {Q.n}, got shape {f.shape}")
    return Q.matrix @ f


def assemble_policy_generator(spec, grid: Grid, policy) -> DiscreteGenerator:
    """Generator whose row ``i`` is row ``i`` of ``build_generator`` at ``policy(i)``."""
    _check_dim(spec, grid)
    controls = np.asarray(getattr(policy, "controls", policy), dtype=float)
    controls = controls.reshape(grid.n_total, spec.control_dim)
    lo, hi = spec.control_bounds
    if np.any(controls < lo - 1e-12) or np.any(controls > hi + 1e-12):
        bad = int(np.flatnonzero(np.any((controls < lo - 1e-12) | (controls > hi + 1e-12), axis=1))[0])
        raise ValueError(f"policy control {controls[bad]} at node {bad} is outside the control box")
    rates = _rates(grid, _nodal_drift(spec, grid, controls), _diffusion_a(spec, grid), scheme=_scheme(spec))
    return DiscreteGenerator(_assemble(grid, _pattern(grid), rates), from_policy=True, grid=grid)


class Discretization:
    """Tables shared by the solvers for one (model, grid) pair.

    Holds drift and base cost over the whole discrete control grid, so that
    ``(Q_u V)_i + r(x_i, u)`` can be evaluated for every node and control at
    once, and assembles policy generators on a fixed sparsity pattern.
    """

    def __init__(self, spec, grid: Grid):
        _check_dim(spec, grid)
        self.spec = spec
        self.grid = grid
        self.controls = spec.control_grid()
        x = grid.nodes[:, None, :]
        u = self.controls[None, :, :]
        self.drift = np.broadcast_to(
            np.asarray(spec.drift(x, u), float), (grid.n_total, len(self.controls), grid.dimension)
        )
        self.cost = np.broadcast_to(
            np.asarray(spec.base_cost(x, u), float), (grid.n_total, len(self.controls))
        )
        for name, arr in (("drift", self.drift), ("base cost", self.cost)):
            if not np.all(np.isfinite(arr)):
                i, j = np.argwhere(~np.isfinite(arr.reshape(grid.n_total, len(self.controls), -1)))[0][:2]
                raise ValueError(
                    f"{name} is not finite at node {i} ({grid.nodes[i]}), control {self.controls[j]}"
                )
        self.a = _diffusion_a(spec, grid)
        self.scheme = _scheme(spec)
        self.diffusion_rates = _diffusion_rates(grid, self.a)
        self._pattern = _pattern(grid)

    @property
    def n(self) -> int:
        return self.grid.n_total

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    def differences(self, V: np.ndarray) -> np.ndarray:
        """``V[neighbour] - V`` per direction, zero where the move is dropped."""
        nbr = self.grid.neighbors
        D = V[np.where(nbr >= 0, nbr, 0)] - V[None, :]
        D[nbr < 0] = 0.0
        return D

    def _drift_part(self, drift: np.ndarray, D: np.ndarray) -> np.ndarray:
        h = self.grid.spacing
        out = 0.0
        for k in range(self.grid.dimension):
            bk = drift[..., k]
            shape = (-1, *([1] * (bk.ndim - 1)))
            fwd, bwd = drift_split(bk, self.diffusion_rates[2 * k].reshape(shape),
                                   self.diffusion_rates[2 * k + 1].reshape(shape), h[k], self.scheme)
            out = out + fwd * D[2 * k].reshape(shape) + bwd * D[2 * k + 1].reshape(shape)
        return out

    def q_values(self, V: np.ndarray) -> np.ndarray:
        """``(Q_u V)_i`` for every node ``i`` and every grid control ``u``: ``(n, n_u)``."""
        D = self.differences(V)
        out = np.sum(self.diffusion_rates * D, axis=0)[:, None]
        for k, (fwd, bwd) in enumerate(self._split_table):
            out = out + fwd * D[2 * k][:, None] + bwd * D[2 * k + 1][:, None]
        return out

    @cached_property
    def _split_table(self) -> list[tuple[np.ndarray, np.ndarray]]:
        h = self.grid.spacing
        return [drift_split(self.drift[..., k], self.diffusion_rates[2 * k][:, None],
                            self.diffusion_rates[2 * k + 1][:, None], h[k], self.scheme)
                for k in range(self.grid.dimension)]

    def q_values_at(self, V: np.ndarray, controls: np.ndarray) -> np.ndarray:
        """``(Q_{u_i} V)_i`` for per-node controls ``(n, m)`` (or ``(n, k, m)``)."""
        controls = np.asarray(controls, float)
        x = self.grid.nodes.reshape(self.n, *([1] * (controls.ndim - 2)), self.grid.dimension)
        drift = np.asarray(self.spec.drift(x, controls), float)
        D = self.differences(V)
        diffusion = np.sum(self.diffusion_rates * D, axis=0)
        return diffusion.reshape(-1, *([1] * (controls.ndim - 2))) + self._drift_part(drift, D)

    def base_cost_at(self, controls: np.ndarray) -> np.ndarray:
        controls = np.asarray(controls, float)
        x = self.grid.nodes.reshape(self.n, *([1] * (controls.ndim - 2)), self.grid.dimension)
        return np.asarray(self.spec.base_cost(x, controls), float)

    def _resolve(self, policy) -> tuple[np.ndarray | None, np.ndarray | None]:
        """``(index, controls)`` of a Policy, an index array or an ``(n, m)``
        float array of controls."""
        if isinstance(policy, np.ndarray):
            if policy.dtype.kind in "iu":
                return policy, None
            return None, policy.reshape(self.n, -1)
        index = getattr(policy, "index", None)
        if index is not None:
            return np.asarray(index), None
        return None, np.asarray(policy.controls, float)

    def generator(self, policy) -> sp.csr_matrix:
        """Policy generator; ``policy`` is a :class:`~ergodic_mfg.ergodic.Policy`,
        an index array into the control grid or an ``(n, m)`` control array."""
        index, controls = self._resolve(policy)
        if index is not None:
            drift = self.drift[np.arange(self.n), index]
        else:
            drift = _nodal_drift(self.spec, self.grid, controls)
        return _assemble(self.grid, self._pattern, _rates(self.grid, drift, self.a, scheme=self.scheme))

    def policy_cost(self, policy) -> np.ndarray:
        index, controls = self._resolve(policy)
        if index is not None:
            return self.cost[np.arange(self.n), index]
        return self.base_cost_at(controls)

    def rounding_error(self, V: np.ndarray, controls: np.ndarray, values: np.ndarray) -> np.ndarray:
        """Per-node bound on the round-off in evaluating
        ``(Q_u V)_i + base_cost(x_i, u)``: a few ulps of the summed magnitudes."""
        magnitude = abs(self.generator(controls)) @ np.abs(V) + np.abs(self.base_cost_at(controls))
        return 16 * np.finfo(float).eps * (magnitude + np.abs(values))

    def refined_argmin(self, V: np.ndarray, H: np.ndarray | None = None,
                       index: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Minimise ``(Q_u V)_i + base_cost(x_i, u)`` over the control box.

        Starts from the grid argmin (or ``index``) and takes, per control
        axis, the vertex of the parabola through the grid values at the
        neighbouring controls, clipped to that bracket; a vertex is kept only
        where it lowers the objective.  Exact when the objective is quadratic
        in the control.  Returns controls ``(n, m)`` and values ``(n,)``.
        """
        if H is None:
            H = self.q_values(V) + self.cost
        rows = np.arange(self.n)
        j = np.argmin(H, axis=1) if index is None else np.asarray(index)
        u = self.controls[j].copy()
        best = H[rows, j].copy()
        res = self.spec.control_resolution
        strides = np.cumprod((1,) + tuple(res[::-1]))[:-1][::-1]
        for axis, ax in enumerate(self.spec.control_axes):
            if len(ax) < 3:
                continue
            step = ax[1] - ax[0]
            pos = (j // strides[axis]) % res[axis]
            inner = (pos > 0) & (pos < res[axis] - 1)
            lo = np.where(inner, j - strides[axis], j)
            hi = np.where(inner, j + strides[axis], j)
            f0, fl, fh = H[rows, j], H[rows, lo], H[rows, hi]
            curv = fh - 2.0 * f0 + fl
            ok = inner & (curv > 0)
            shift = np.where(ok, 0.5 * step * (fl - fh) / np.where(ok, curv, 1.0), 0.0)
            cand = u.copy()
            cand[:, axis] = np.clip(u[:, axis] + np.clip(shift, -step, step), ax[0], ax[-1])
            val = self.q_values_at(V, cand) + self.base_cost_at(cand)
            # the vertex is exact for a quadratic objective: keep it unless it
            # is worse by more than round-off (a strict comparison would let
            # rounding decide between the vertex and the grid point)
            better = ok & (val <= best + self.rounding_error(V, cand, val))
            u[better] = cand[better]
            best = np.where(better, val, best)
        return u, best
