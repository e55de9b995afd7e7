"""Continuous-space problem definitions and their sampled validity checks.

All model callables are vectorised over leading axes:

* ``drift(x, u)`` with ``x`` of shape ``(..., d)`` and ``u`` of shape
  ``(..., m)`` returns ``(..., d)``;
* ``diffusion(x)`` returns ``sigma(x)`` of shape ``(..., d, d)``;
* ``base_cost(x, u)`` returns ``(...)``;
* ``InteractionSpec.kernel(z)`` returns ``(...)`` for ``z`` of shape ``(..., d)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .grid import Grid, build_generator, _diffusion_a

EPS_NONDEGENERATE = 1e-8
INEQUALITY_TOL = 1e-8

Array = np.ndarray


@dataclass(frozen=True)
class InteractionSpec:
    """Coupling term ``F(x, mu)`` of the running cost.

    ``kernel``: ``F(x, mu) = scale * sum_y phi(x - y) mu(y)``.
    ``mean_quadratic``: ``F(x, mu) = scale * |x - kappa m_1(mu)|^2``.
    """

    kind: str = "none"
    kernel: Callable[[Array], Array] | None = None
    kappa: float = 0.0
    scale: float = 1.0
    monotone_expected: bool = False

    def __post_init__(self):
        if self.kind not in ("kernel", "mean_quadratic", "none"):
            raise ValueError(f"unknown interaction kind {self.kind!r}")
        if self.kind == "kernel" and self.kernel is None:
            raise ValueError("kernel interaction needs a kernel function")


@dataclass(frozen=True)
class Lyapunov:
    value: Callable[[Array], Array]
    grad: Callable[[Array], Array]
    hess: Callable[[Array], Array]
    c0: float
    c1: float

    def __post_init__(self):
        if self.c0 <= 0 or self.c1 <= 0:
            raise ValueError("Lyapunov constants c0, c1 must be positive")


def quadratic_lyapunov(c0: float, c1: float, weight: float = 1.0) -> Lyapunov:
    """``V(x) = 1 + weight |x|^2``."""
    return Lyapunov(
        value=lambda x: 1.0 + weight * np.sum(np.asarray(x) ** 2, axis=-1),
        grad=lambda x: 2.0 * weight * np.asarray(x),
        hess=lambda x: 2.0 * weight * np.broadcast_to(
            np.eye(np.shape(x)[-1]), np.shape(x) + (np.shape(x)[-1],)
        ),
        c0=c0,
        c1=c1,
    )


@dataclass(frozen=True)
class CostClass:
    """Running-cost class tag with its parameters.

    ``C2`` uses the growth exponent ``p``; ``C3`` uses ``h(x, u)`` (default
    ``|x|^q``) and the constants of the stability inequality
    ``L^u V <= us_c1 - us_c2 h`` (defaults: the Lyapunov constants).
    """

    tag: str = "C1"
    p: float = 1.0
    q: float = 2.0
    h: Callable[[Array, Array], Array] | None = None
    us_c1: float | None = None
    us_c2: float | None = None

    def __post_init__(self):
        if self.tag not in ("C1", "C2", "C3"):
            raise ValueError(f"unknown cost class {self.tag!r}")

    def h_fn(self):
        if self.h is not None:
            return self.h
        q = self.q
        return lambda x, u: np.linalg.norm(x, axis=-1) ** q


@dataclass(frozen=True)
class ModelSpec:
    """Controlled diffusion ``dX = b(X, U) dt + sigma(X) dW`` with running
    cost ``r(x, u, mu) = base_cost(x, u) + F(x, mu)`` on a control box."""

    dimension: int
    drift: Callable[[Array, Array], Array]
    diffusion: Callable[[Array], Array]
    control_box: tuple[tuple[float, float], ...]
    control_resolution: tuple[int, ...]
    base_cost: Callable[[Array, Array], Array]
    lyapunov: Lyapunov
    interaction: InteractionSpec = field(default_factory=InteractionSpec)
    cost_class: CostClass = field(default_factory=CostClass)
    strictly_convex: bool = False
    growth_constant: float = 1e3
    drift_scheme: str = "upwind"
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if self.drift_scheme not in ("upwind", "central_monotone"):
            raise ValueError(f"unknown drift scheme {self.drift_scheme!r}")
        box = tuple((float(lo), float(hi)) for lo, hi in self.control_box)
        res = tuple(int(k) for k in np.atleast_1d(self.control_resolution))
        if len(res) == 1 and len(box) > 1:
            res = res * len(box)
        if len(res) != len(box):
            raise ValueError("control_resolution must give one count per control axis")
        if any(lo > hi for lo, hi in box):
            raise ValueError(f"empty control interval in {box}")
        if any(k < 1 for k in res) or any(k == 1 and lo != hi for k, (lo, hi) in zip(res, box)):
            raise ValueError("a nondegenerate control interval needs at least 2 points")
        object.__setattr__(self, "control_box", box)
        object.__setattr__(self, "control_resolution", res)

    @property
    def control_dim(self) -> int:
        return len(self.control_box)

    @property
    def control_bounds(self) -> tuple[Array, Array]:
        box = np.array(self.control_box)
        return box[:, 0], box[:, 1]

    @property
    def control_axes(self) -> list[Array]:
        return [np.linspace(lo, hi, k) for (lo, hi), k in zip(self.control_box, self.control_resolution)]

    def control_grid(self) -> Array:
        """All discrete controls, shape ``(n_u, m)``; index order is lexicographic."""
        return np.array(list(itertools.product(*self.control_axes)), dtype=float)

    def with_params(self, **changes) -> ModelSpec:
        from dataclasses import replace

        return replace(self, **changes)


# ----------------------------------------------------------------------------
# interaction fields


def interaction_field(spec: ModelSpec, grid: Grid, weights: Array) -> Array:
    """Nodal values of ``F(., mu)`` for a grid measure with the given weights."""
    inter = spec.interaction
    w = np.asarray(weights, dtype=float)
    if inter.kind == "none":
        return np.zeros(grid.n_total)
    if inter.kind == "mean_quadratic":
        m1 = w @ grid.nodes
        return inter.scale * np.sum((grid.nodes - inter.kappa * m1) ** 2, axis=1)
    return inter.scale * _kernel_convolve(inter.kernel, grid, w)


def _kernel_convolve(kernel, grid: Grid, w: Array) -> Array:
    if grid.n_total <= 4000:
        z = grid.nodes[:, None, :] - grid.nodes[None, :, :]
        return np.asarray(kernel(z)) @ w
    from scipy.signal import fftconvolve

    # offsets (i - j) h on the doubled grid
    lags = [np.arange(-(n - 1), n) * h for n, h in zip(grid.shape, grid.spacing)]
    mesh = np.stack(np.meshgrid(*lags, indexing="ij"), axis=-1)
    kern = np.asarray(kernel(mesh))
    full = fftconvolve(w.reshape(grid.shape), kern, mode="full")
    sl = tuple(slice(n - 1, 2 * n - 1) for n in grid.shape)
    return full[sl].ravel()


def interaction_on_points(spec: ModelSpec, x: Array, samples: Array) -> Array:
    """``F(x, empirical measure of samples)`` for nodes ``x (n, d)`` and one or
    more sample clouds ``samples (..., k, d)``; returns ``(..., n)``."""
    inter = spec.interaction
    x = np.asarray(x, float)
    samples = np.asarray(samples, float)
    lead = samples.shape[:-2]
    if inter.kind == "none":
        return np.zeros(lead + (x.shape[0],))
    if inter.kind == "mean_quadratic":
        m1 = samples.mean(axis=-2)[..., None, :]
        return inter.scale * np.sum((x - inter.kappa * m1) ** 2, axis=-1)
    z = x[..., :, None, :] - samples[..., None, :, :]
    return inter.scale * np.asarray(inter.kernel(z)).mean(axis=-1)


# ----------------------------------------------------------------------------
# Hamiltonian


def golden_min(f, lo: Array, hi: Array, iters: int = 60) -> tuple[Array, Array]:
    """Vectorised golden-section search of ``f`` on ``[lo, hi]`` (elementwise)."""
    g = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = np.array(lo, float), np.array(hi, float)
    c = b - g * (b - a)
    d = a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        left = fc <= fd
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        new_c = b - g * (b - a)
        new_d = a + g * (b - a)
        f_new = f(np.where(left, new_c, new_d))
        c, d = np.where(left, new_c, d), np.where(left, c, new_d)
        fc, fd = np.where(left, f_new, fd), np.where(left, fc, f_new)
    x = 0.5 * (a + b)
    return x, f(x)


def hamiltonian_min(spec: ModelSpec, x, p) -> tuple[float, Array]:
    """``min_u b(x, u) . p + base_cost(x, u)`` over the control grid.

    Ties go to the smallest control index.  With ``spec.strictly_convex`` one
    bracketed scalar refinement is done per control axis around the grid
    minimiser.
    """
    x = np.atleast_1d(np.asarray(x, float))
    p = np.atleast_1d(np.asarray(p, float))
    controls = spec.control_grid()
    if controls.size == 0:
        raise ValueError("empty control grid")
    xs = np.broadcast_to(x, (len(controls), spec.dimension))
    vals = np.sum(np.asarray(spec.drift(xs, controls)) * p, axis=-1) + np.asarray(
        spec.base_cost(xs, controls)
    )
    vals = np.broadcast_to(vals, (len(controls),))
    if not np.all(np.isfinite(vals)):
        j = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise ValueError(f"non-finite Hamiltonian term at control {controls[j].tolist()}")
    j = int(np.argmin(vals))
    best_u, best = controls[j].copy(), float(vals[j])
    if not spec.strictly_convex:
        return best, best_u

    def objective(u):
        return float(np.dot(spec.drift(x, u), p) + spec.base_cost(x, u))

    for axis, grid_axis in enumerate(spec.control_axes):
        if len(grid_axis) < 2:
            continue
        k = int(np.argmin(np.abs(grid_axis - best_u[axis])))
        lo, hi = grid_axis[max(k - 1, 0)], grid_axis[min(k + 1, len(grid_axis) - 1)]

        def along(s, axis=axis):
            u = best_u.copy()
            u[axis] = s
            return objective(u)

        res = minimize_scalar(along, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        if res.fun < best:
            best_u[axis] = res.x
            best = float(res.fun)
    return best, best_u


# ----------------------------------------------------------------------------
# validation


@dataclass
class CheckResult:
    passed: bool
    value: float
    detail: str = ""
    violations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "passed": bool(self.passed),
            "value": float(self.value),
            "detail": self.detail,
            "violations": [int(v) for v in self.violations[:50]],
        }


@dataclass
class ValidationReport:
    checks: dict[str, CheckResult]
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failed(self) -> list[str]:
        return [k for k, c in self.checks.items() if not c.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": {k: c.to_dict() for k, c in sorted(self.checks.items())},
            "warnings": list(self.warnings),
        }


def _finite_or_raise(name: str, arr: Array, grid: Grid) -> Array:
    arr = np.asarray(arr, float)
    if not np.all(np.isfinite(arr)):
        flat = arr.reshape(grid.n_total, -1)
        i = int(np.flatnonzero(~np.isfinite(flat).all(axis=1))[0])
        raise ValueError(f"{name} is not finite at node {i} ({grid.nodes[i].tolist()})")
    return arr


def _random_measure(rng: np.random.Generator, n: int) -> Array:
    w = rng.exponential(size=n) * (rng.random(n) < rng.uniform(0.05, 1.0))
    if w.sum() == 0:
        w[rng.integers(n)] = 1.0
    return w / w.sum()


def validate_model(
    spec: ModelSpec,
    grid: Grid,
    n_pairs: int = 100,
    seed: int = 0,
    eps_nd: float = EPS_NONDEGENERATE,
    tol: float = INEQUALITY_TOL,
) -> ValidationReport:
    """Sampled checks of the standing assumptions on ``grid``.

    Inequality violations are reported, not raised.  Dimension mismatch and
    non-finite function values raise ``ValueError``.
    """
    if spec.dimension != grid.dimension:
        raise ValueError(
            f"dimension mismatch: model has d={spec.dimension}, grid has d={grid.dimension}"
        )
    x = grid.nodes
    checks: dict[str, CheckResult] = {}
    warns: list[str] = []

    a = _diffusion_a(spec, grid)
    eig = np.linalg.eigvalsh(a)[:, 0]
    bad = np.flatnonzero(eig < eps_nd)
    checks["nondegeneracy"] = CheckResult(
        bad.size == 0, float(eig.min()), f"min eigenvalue of a = sigma sigma^T/2 (need >= {eps_nd})", list(bad)
    )

    controls = spec.control_grid()
    xs = x[:, None, :]
    us = controls[None, :, :]
    b = _finite_or_raise("drift", np.broadcast_to(spec.drift(xs, us), (grid.n_total, len(controls), spec.dimension)), grid)
    sigma = _finite_or_raise("diffusion", np.broadcast_to(spec.diffusion(x), (grid.n_total, spec.dimension, spec.dimension)), grid)
    r0 = _finite_or_raise("base cost", np.broadcast_to(spec.base_cost(xs, us), (grid.n_total, len(controls))), grid)
    growth = np.max(np.sum(b**2, axis=-1), axis=1) + np.sum(sigma**2, axis=(1, 2))
    ratio = growth / (1.0 + np.sum(x**2, axis=1))
    bad = np.flatnonzero(ratio > spec.growth_constant)
    checks["growth"] = CheckResult(
        bad.size == 0, float(ratio.max()), f"max (|b|^2+|sigma|^2)/(1+|x|^2), bound {spec.growth_constant}", list(bad)
    )

    lyap = spec.lyapunov
    Vx = _finite_or_raise("Lyapunov function", lyap.value(x), grid)
    bad = np.flatnonzero(Vx < 1.0 - tol)
    checks["lyapunov_lower_bound"] = CheckResult(bad.size == 0, float(Vx.min()), "min V (need >= 1)", list(bad))

    worst = -np.inf
    violating: set[int] = set()
    for u in controls:
        QV = build_generator(spec, grid, u).matrix @ Vx
        excess = QV - (lyap.c0 - lyap.c1 * Vx)
        worst = max(worst, float(excess.max()))
        violating.update(np.flatnonzero(excess > tol).tolist())
    checks["lyapunov_drift"] = CheckResult(
        not violating,
        worst,
        f"max over (node, control) of Q_u V - (c0 - c1 V), c0={lyap.c0}, c1={lyap.c1}",
        sorted(violating),
    )
    L_edge = float(lyap.value(np.array(grid.half_width)))
    if lyap.c0 / lyap.c1 >= L_edge / 10.0:
        warns.append(
            f"c0/c1 = {lyap.c0 / lyap.c1:.4g} >= V(L)/10 = {L_edge / 10:.4g}: "
            "box truncation may not be negligible"
        )

    checks.update(_cost_class_checks(spec, grid, r0, Vx, controls, tol))

    if spec.interaction.kind != "none":
        from .measures import monotonicity_gap, GridMeasure

        rng = np.random.default_rng(seed)
        gaps = np.array(
            [
                monotonicity_gap(
                    spec,
                    GridMeasure(grid, _random_measure(rng, grid.n_total)),
                    GridMeasure(grid, _random_measure(rng, grid.n_total)),
                )
                for _ in range(n_pairs)
            ]
        )
        neg = np.flatnonzero(gaps < -tol)
        name = "interaction_monotonicity"
        passed = neg.size == 0 or not spec.interaction.monotone_expected
        detail = f"min of F(mu, nu) over {n_pairs} random pairs"
        if neg.size and not spec.interaction.monotone_expected:
            detail += " (not monotone; not required by the model)"
        checks[name] = CheckResult(passed, float(gaps.min()), detail, list(neg))
    return ValidationReport(checks, warns)


def _cost_class_checks(spec, grid, r0, Vx, controls, tol) -> dict[str, CheckResult]:
    cc = spec.cost_class
    norms = grid.norms
    L = min(grid.half_width)
    edge = norms >= L - 1e-9 * L
    # nodes on the sphere of radius ~L/2 (nearest shell)
    mid_r = norms[np.argmin(np.abs(norms - L / 2))]
    mid = np.abs(norms - mid_r) <= 0.5 * min(grid.spacing) + 1e-12
    out = {}
    if cc.tag == "C1":
        from .measures import GridMeasure

        delta = GridMeasure.delta(grid, grid.anchor_index)
        uniform = GridMeasure.uniform(grid)
        tables = [
            r0 + interaction_field(spec, grid, m.weights)[:, None] for m in (delta, uniform)
        ]
        inf_r = [t.min(axis=1) for t in tables]
        grows = all(ir[edge].min() > ir[grid.anchor_index] + tol for ir in inf_r)
        with np.errstate(divide="ignore", invalid="ignore"):
            theta = np.min(tables[0][edge] / tables[1][edge])
        out["cost_class"] = CheckResult(
            bool(grows),
            float(min(ir[edge].min() - ir[grid.anchor_index] for ir in inf_r)),
            f"C1: inf_u r grows from the anchor to the box edge; sampled edge ratio theta={theta:.4g}",
        )
    elif cc.tag == "C2":
        p = cc.p
        ratio = r0.min(axis=1) / (1.0 + norms**p)
        grows = ratio[edge].min() > ratio[mid].max() - tol
        nonneg = True
        if spec.interaction.kind != "none":
            from .measures import GridMeasure

            for m in (GridMeasure.delta(grid, grid.anchor_index), GridMeasure.uniform(grid)):
                nonneg &= bool(interaction_field(spec, grid, m.weights).min() >= -tol)
        out["cost_class"] = CheckResult(
            bool(grows and nonneg),
            float(ratio[edge].min() - ratio[mid].max()),
            f"C2 (p={p}): min_u r(x,u)/(1+|x|^p) at the edge exceeds its value at |x|~L/2; F >= 0",
        )
    else:
        hfun = cc.h_fn()
        c_a = cc.us_c1 if cc.us_c1 is not None else spec.lyapunov.c0
        c_b = cc.us_c2 if cc.us_c2 is not None else spec.lyapunov.c1
        worst = -np.inf
        for j, u in enumerate(controls):
            QV = build_generator(spec, grid, u).matrix @ Vx
            hv = np.broadcast_to(hfun(grid.nodes, np.broadcast_to(u, (grid.n_total, len(u)))), (grid.n_total,))
            worst = max(worst, float(np.max(QV - (c_a - c_b * hv))))
        hv = np.broadcast_to(hfun(grid.nodes[:, None, :], controls[None]), r0.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            small = np.nanmax(np.where(hv > 0, r0 / hv, np.nan)[edge]) <= np.nanmax(
                np.where(hv > 0, r0 / hv, np.nan)[mid]
            ) + tol
        out["cost_class"] = CheckResult(
            bool(worst <= tol and small),
            worst,
            "C3: Q_u V <= c1 - c2 h(x,u) at all (node, control); r/h decreasing toward the edge",
        )
    return out


# ----------------------------------------------------------------------------
# asymptotic flatness


@dataclass
class FlatnessReport:
    passed: bool
    max_ratio: float
    r: float
    sigma_lipschitz: float
    n_samples: int

    def to_dict(self) -> dict:
        return {k: (float(v) if not isinstance(v, bool) else v) for k, v in self.__dict__.items()}


def asymptotic_flatness_check(
    spec: ModelSpec,
    grid: Grid,
    Q: Array | None = None,
    n_samples: int = 20000,
    seed: int = 0,
    lipschitz_bound: float = 1e3,
) -> FlatnessReport:
    """Sample ``2 D_z b^T Q z - |D_z sigma^T Q z|^2 / z^T Q z + tr(a~ Q)`` over
    triples ``(x, z, u)`` with ``x, x+z`` grid nodes; pass when the maximum of
    the expression divided by ``|z|^2`` is negative (``r`` = minus that)."""
    d = spec.dimension
    Q = np.eye(d) if Q is None else np.asarray(Q, float)
    if Q.shape != (d, d) or not np.allclose(Q, Q.T) or np.linalg.eigvalsh(Q)[0] <= 0:
        raise ValueError("Q must be a symmetric positive definite d x d matrix")
    rng = np.random.default_rng(seed)
    n = grid.n_total
    i = rng.integers(n, size=n_samples)
    j = rng.integers(n, size=n_samples)
    keep = i != j
    i, j = i[keep], j[keep]
    xs, ys = grid.nodes[i], grid.nodes[j]
    z = ys - xs
    controls = spec.control_grid()
    u = controls[rng.integers(len(controls), size=len(i))]

    sig_x = np.broadcast_to(spec.diffusion(xs), (len(i), d, d))
    sig_y = np.broadcast_to(spec.diffusion(ys), (len(i), d, d))
    dsig = sig_y - sig_x
    znorm = np.linalg.norm(z, axis=1)
    lip = float(np.max(np.linalg.norm(dsig.reshape(len(i), -1), axis=1) / znorm))
    if lip > lipschitz_bound:
        raise ValueError(f"sigma Lipschitz estimate {lip:.4g} exceeds the bound {lipschitz_bound}")

    db = np.asarray(spec.drift(ys, u)) - np.asarray(spec.drift(xs, u))
    Qz = z @ Q
    zQz = np.sum(z * Qz, axis=1)
    term1 = 2.0 * np.sum(db * Qz, axis=1)
    sQz = np.einsum("nji,nj->ni", dsig, Qz)  # dsig^T Q z
    term2 = np.sum(sQz**2, axis=1) / zQz
    a_tilde = np.einsum("nij,nkj->nik", dsig, dsig)
    term3 = np.einsum("nij,ji->n", a_tilde, Q)
    ratio = (term1 - term2 + term3) / znorm**2
    m = float(ratio.max())
    return FlatnessReport(passed=m < 0, max_ratio=m, r=-m, sigma_lipschitz=lip, n_samples=len(i))


# ----------------------------------------------------------------------------
# built-in models


def _scalar_sigma(sigma: float, d: int):
    mat = sigma * np.eye(d)
    return lambda x: np.broadcast_to(mat, np.shape(x)[:-1] + (d, d))


def gaussian_kernel(width: float = 1.0):
    return lambda z: np.exp(-np.sum(np.asarray(z) ** 2, axis=-1) / width**2)


def _interaction(kind: str, kappa: float, scale: float, width: float) -> InteractionSpec:
    if kind == "none":
        return InteractionSpec()
    if kind == "mean_quadratic":
        return InteractionSpec("mean_quadratic", kappa=kappa, scale=scale, monotone_expected=kappa <= 0)
    if kind == "kernel":
        return InteractionSpec("kernel", kernel=gaussian_kernel(width), scale=scale, monotone_expected=True)
    raise ValueError(f"unknown interaction kind {kind!r}")


def ou_model(dimension: int = 1, sigma: float = np.sqrt(2.0), theta: float = 1.0,
             c0: float | None = None, c1: float = 1.0, drift_scheme: str = "upwind") -> ModelSpec:
    """Uncontrolled Ornstein-Uhlenbeck process ``dX = -theta X dt + sigma dW``
    with cost ``|x|^2`` (class C2, p = 1)."""
    d = dimension
    if c0 is None:
        c0 = sigma**2 * d + c1 + 1.0
    return ModelSpec(
        dimension=d,
        drift=lambda x, u: -theta * np.asarray(x) + 0.0 * np.asarray(u)[..., :1],
        diffusion=_scalar_sigma(sigma, d),
        control_box=((0.0, 0.0),),
        control_resolution=(1,),
        base_cost=lambda x, u: np.sum(np.asarray(x) ** 2, axis=-1) + 0.0 * np.asarray(u)[..., 0],
        lyapunov=quadratic_lyapunov(c0, c1),
        cost_class=CostClass("C2", p=1.0),
        drift_scheme=drift_scheme,
        name="ou",
        params=dict(dimension=d, sigma=sigma, theta=theta, c0=c0, c1=c1, drift_scheme=drift_scheme),
    )


def lq_model(sigma: float = 1.0, u_max: float = 4.0, n_controls: int = 161,
             interaction: str = "mean_quadratic", kappa: float = -0.5,
             interaction_scale: float = 0.5, kernel_width: float = 1.0,
             state_cost: float = 0.0, c0: float = 100.0, c1: float = 1.0,
             strictly_convex: bool = False, drift_scheme: str = "upwind") -> ModelSpec:
    """1D linear-quadratic model ``dX = U dt + sigma dW``,
    ``r = u^2/2 + state_cost x^2/2 + F(x, mu)``.

    The default coupling is ``F = |x - kappa m_1(mu)|^2 / 2``."""
    return ModelSpec(
        dimension=1,
        drift=lambda x, u: np.asarray(u) + 0.0 * np.asarray(x),
        diffusion=_scalar_sigma(sigma, 1),
        control_box=((-u_max, u_max),),
        control_resolution=(n_controls,),
        base_cost=lambda x, u: 0.5 * np.asarray(u)[..., 0] ** 2
        + 0.5 * state_cost * np.asarray(x)[..., 0] ** 2,
        lyapunov=quadratic_lyapunov(c0, c1),
        interaction=_interaction(interaction, kappa, interaction_scale, kernel_width),
        cost_class=CostClass("C1"),
        strictly_convex=strictly_convex,
        drift_scheme=drift_scheme,
        name="lq_mfg",
        params=dict(sigma=sigma, u_max=u_max, n_controls=n_controls, interaction=interaction,
                    kappa=kappa, interaction_scale=interaction_scale, kernel_width=kernel_width,
                    state_cost=state_cost, c0=c0, c1=c1, strictly_convex=strictly_convex,
                    drift_scheme=drift_scheme),
    )


def flat_cubic_model(sigma: float = 1.0, u_max: float = 1.0, n_controls: int = 21,
                     interaction: str = "none", kappa: float = -0.5,
                     interaction_scale: float = 0.5, kernel_width: float = 1.0,
                     c0: float = 4.0, c1: float = 1.0, drift_scheme: str = "upwind") -> ModelSpec:
    """Asymptotically flat model ``dX = (-X - X^3 + U) dt + sigma dW`` with
    ``r = u^2/2 + x^2/2 + F``."""
    return ModelSpec(
        dimension=1,
        drift=lambda x, u: -np.asarray(x) - np.asarray(x) ** 3 + np.asarray(u),
        diffusion=_scalar_sigma(sigma, 1),
        control_box=((-u_max, u_max),),
        control_resolution=(n_controls,),
        base_cost=lambda x, u: 0.5 * np.asarray(u)[..., 0] ** 2 + 0.5 * np.asarray(x)[..., 0] ** 2,
        lyapunov=quadratic_lyapunov(c0, c1),
        interaction=_interaction(interaction, kappa, interaction_scale, kernel_width),
        cost_class=CostClass("C2", p=1.0),
        drift_scheme=drift_scheme,
        name="flat_cubic",
        params=dict(sigma=sigma, u_max=u_max, n_controls=n_controls, interaction=interaction,
                    kappa=kappa, interaction_scale=interaction_scale, kernel_width=kernel_width,
                    c0=c0, c1=c1, drift_scheme=drift_scheme),
    )


BUILTIN_MODELS = {"ou": ou_model, "lq_mfg": lq_model, "flat_cubic": flat_cubic_model}


def builtin_model(name: str, **params) -> ModelSpec:
    try:
        factory = BUILTIN_MODELS[name]
    except KeyError:
        raise ValueError(f"unknown built-in model {name!r}; choose from {sorted(BUILTIN_MODELS)}") from None
    return factory(**params)
