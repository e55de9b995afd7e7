import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linear_sum_assignment
from scipy.stats import wasserstein_distance

from ergodic_mfg.ergodic import stationary_distribution
from ergodic_mfg.grid import Grid, build_generator
from ergodic_mfg.measures import (
    GridMeasure,
    empirical_wasserstein,
    moment,
    monotonicity_gap,
    occupation_residual,
    project_truncate,
    total_variation,
    wasserstein,
)
from ergodic_mfg.model import lq_model, ou_model

from conftest import make_spec

G1 = Grid.uniform(3.0, 13)  # nodes -3, -2.5, ..., 3
UNIT = Grid.uniform(2.0, 5)  # nodes -2..2


def delta(grid, x):
    return GridMeasure.delta_at(grid, [x])


weights = st.lists(st.floats(0, 1), min_size=13, max_size=13).filter(lambda w: sum(w) > 1e-3)


def measure(w, grid=G1):
    return GridMeasure.normalized(grid, np.array(w))


def test_measure_validation():
    with pytest.raises(ValueError):
        GridMeasure(UNIT, np.array([0.5, 0.5, 0.1, 0, 0]))
    with pytest.raises(ValueError):
        GridMeasure(UNIT, np.array([1.5, -0.5, 0, 0, 0]))
    with pytest.raises(ValueError):
        GridMeasure(UNIT, np.ones(3) / 3)


def test_wasserstein_examples():
    assert wasserstein(1, delta(UNIT, 0), delta(UNIT, 1)) == pytest.approx(1.0, abs=1e-15)
    mu = GridMeasure(UNIT, np.array([0, 0, 0.5, 0, 0.5]))
    assert wasserstein(2, mu, delta(UNIT, 1)) == pytest.approx(1.0, abs=1e-15)
    for p in (1, 2, 3):
        assert wasserstein(p, mu, mu) == 0.0


@given(a=weights, b=weights)
def test_w1_matches_scipy(a, b):
    mu, nu = measure(a), measure(b)
    x = G1.nodes[:, 0]
    ref = wasserstein_distance(x, x, mu.weights, nu.weights)
    assert wasserstein(1, mu, nu) == pytest.approx(ref, abs=1e-10)


def brute_transport(x, a, y, b, p):
    """Exact transport between integer-mass measures by expanding atoms."""
    xs = np.repeat(x, a)
    ys = np.repeat(y, b)
    C = np.abs(xs[:, None] - ys[None, :]) ** p
    r, c = linear_sum_assignment(C)
    return (C[r, c].mean()) ** (1 / p)


@given(a=st.lists(st.integers(0, 4), min_size=5, max_size=5).filter(lambda v: sum(v) > 0),
       p=st.sampled_from([1, 2, 3]), seed=st.integers(0, 1000))
def test_wp_1d_matches_assignment(a, p, seed):
    a = np.array(a)
    b = np.random.default_rng(seed).multinomial(a.sum(), np.ones(5) / 5)
    mu, nu = GridMeasure(UNIT, a / a.sum()), GridMeasure(UNIT, b / b.sum())
    ref = brute_transport(UNIT.nodes[:, 0], a, UNIT.nodes[:, 0], b, p)
    assert wasserstein(p, mu, nu) == pytest.approx(ref, abs=1e-10)


def test_w_2d_matches_assignment():
    g = Grid.uniform(1.0, 4, dimension=2)
    rng = np.random.default_rng(3)
    for p in (1, 2):
        a = rng.multinomial(6, np.ones(16) / 16)
        b = rng.multinomial(6, np.ones(16) / 16)
        xs = np.repeat(g.nodes, a, axis=0)
        ys = np.repeat(g.nodes, b, axis=0)
        C = np.linalg.norm(xs[:, None] - ys[None], axis=-1) ** p
        r, c = linear_sum_assignment(C)
        ref = C[r, c].mean() ** (1 / p)
        got = wasserstein(p, GridMeasure(g, a / 6), GridMeasure(g, b / 6))
        assert got == pytest.approx(ref, abs=1e-9)


def test_w_2d_support_limit():
    g = Grid.uniform(1.0, 70, dimension=2)
    with pytest.raises(ValueError, match="coarsen"):
        wasserstein(1, GridMeasure.uniform(g), GridMeasure.delta(g, 0))


def test_grid_mismatch():
    with pytest.raises(ValueError):
        wasserstein(1, delta(UNIT, 0), delta(G1, 0))
    with pytest.raises(ValueError):
        total_variation(delta(UNIT, 0), delta(G1, 0))


@given(a=weights, b=weights, c=weights, p=st.sampled_from([1, 2]))
def test_wasserstein_metric_axioms(a, b, c, p):
    mu, nu, xi = measure(a), measure(b), measure(c)
    d = lambda s, t: wasserstein(p, s, t)  # noqa: E731
    assert d(mu, nu) == pytest.approx(d(nu, mu), abs=1e-9)
    assert d(mu, xi) <= d(mu, nu) + d(nu, xi) + 1e-9
    assert d(mu, nu) >= 0


@given(a=weights, b=weights)
def test_wasserstein_p_ordering(a, b):
    mu, nu = measure(a), measure(b)
    assert wasserstein(1, mu, nu) <= wasserstein(2, mu, nu) + 1e-12
    assert wasserstein(2, mu, nu) <= wasserstein(3, mu, nu) + 1e-12


@given(xs=st.lists(st.integers(-6, 6), min_size=4, max_size=4),
       ys=st.lists(st.integers(-6, 6), min_size=4, max_size=4), q=st.sampled_from([1, 2]))
def test_empirical_diagonal_coupling_bound(xs, ys, q):
    # D_q(empirical(x), empirical(y)) <= ((1/N) sum |x^j - y^j|^q)^(1/q)
    x = np.array(xs, float)[:, None] * 0.5
    y = np.array(ys, float)[:, None] * 0.5
    bound = np.mean(np.abs(x - y) ** q) ** (1 / q)
    assert empirical_wasserstein(q, x, y) <= bound + 1e-12
    mu = GridMeasure.normalized(G1, np.bincount([G1.nearest_index(v) for v in x], minlength=13))
    nu = GridMeasure.normalized(G1, np.bincount([G1.nearest_index(v) for v in y], minlength=13))
    assert wasserstein(q, mu, nu) <= bound + 1e-12


def test_total_variation_examples():
    assert total_variation(delta(UNIT, 0), delta(UNIT, 1)) == 1.0
    assert total_variation(delta(UNIT, 0), delta(UNIT, 0)) == 0.0
    half = GridMeasure(UNIT, np.array([0, 0, 0.5, 0.5, 0]))
    assert total_variation(half, delta(UNIT, 0)) == 0.5


def test_moment_examples():
    assert moment(1, delta(UNIT, 0)) == 0.0
    assert moment(2, delta(UNIT, 2)) == 4.0
    pm = GridMeasure(UNIT, np.array([0, 0.5, 0, 0.5, 0]))
    assert moment(1, pm) == 1.0
    with pytest.raises(ValueError):
        moment(0.5, pm)


def test_monotonicity_examples():
    kernel = lq_model(interaction="kernel", interaction_scale=1.0)
    mq = lq_model(kappa=1.0, interaction_scale=1.0)
    mu, nu = delta(UNIT, 0), delta(UNIT, 1)
    assert monotonicity_gap(kernel, mu, mu) == 0.0
    assert monotonicity_gap(kernel, mu, nu) == pytest.approx(2 * (1 - np.exp(-1)), abs=1e-12)
    assert monotonicity_gap(mq, mu, nu) == pytest.approx(-2.0, abs=1e-12)
    assert monotonicity_gap(lq_model(interaction="none"), mu, nu) == 0.0


@given(a=weights, b=weights)
def test_kernel_monotonicity_nonnegative(a, b):
    spec = lq_model(interaction="kernel", interaction_scale=1.0)
    mu, nu = measure(a), measure(b)
    # brute-force double sum of phi(x - y) dw(x) dw(y)
    x = G1.nodes[:, 0]
    dw = mu.weights - nu.weights
    ref = dw @ np.exp(-(x[:, None] - x[None, :]) ** 2) @ dw
    got = monotonicity_gap(spec, mu, nu)
    assert got == pytest.approx(ref, abs=1e-12)
    assert got >= -1e-10


def test_occupation_residual_examples():
    g = Grid.from_spacing(4.0, 0.1)
    Q = build_generator(ou_model(), g, [0.0])
    mu = GridMeasure(g, stationary_distribution(Q.matrix, g).weights)
    assert occupation_residual(Q, mu) <= 1e-9
    Qd = build_generator(make_spec(sigma=1.0), g, [0.0])
    assert occupation_residual(Qd, GridMeasure.uniform(g)) <= 1e-9
    assert occupation_residual(Q, GridMeasure.delta_at(g, [1.0])) > 0.1
    assert occupation_residual(Q, GridMeasure.delta_at(g, [1.0]), test_count=10) > 0.1


def test_project_truncate_examples():
    g = Grid.from_spacing(4.0, 0.1)
    inside = GridMeasure.gaussian(g, 0.0, 0.01)
    inside = project_truncate(inside, 4.0)
    assert np.array_equal(project_truncate(inside, 4.0).weights, inside.weights)
    edge = GridMeasure.delta(g, g.n_total - 1)
    assert np.array_equal(project_truncate(edge, 3.0).weights, GridMeasure.delta(g, g.anchor_index).weights)
    gauss = GridMeasure.gaussian(g, 0.0, 4.0)
    out = gauss.weights[g.norms > 2.0 + 1e-12].sum()
    proj = project_truncate(gauss, 2.0)
    assert proj.weights[g.anchor_index] - gauss.weights[g.anchor_index] == pytest.approx(out, abs=1e-15)
    assert proj.weights.sum() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        project_truncate(gauss, 0.0)


def test_gaussian_moments_and_csv(tmp_path):
    g = Grid.from_spacing(6.0, 0.01)
    mu = GridMeasure.gaussian(g, 0.5, 0.25)
    assert mu.mean()[0] == pytest.approx(0.5, abs=1e-6)
    assert mu.integrate((g.nodes[:, 0] - 0.5) ** 2) == pytest.approx(0.25, abs=1e-4)
    mu.to_csv(tmp_path / "mu.csv")
    back = GridMeasure.from_csv(tmp_path / "mu.csv", g)
    assert np.array_equal(back.weights, mu.weights)
    with pytest.raises(ValueError):
        GridMeasure.from_csv(tmp_path / "mu.csv", Grid.from_spacing(6.0, 0.02))
