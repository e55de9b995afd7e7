import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from ergodic_mfg.ergodic import solve_ergodic_hjb
from ergodic_mfg.grid import (
    Discretization,
    Grid,
    MonotonicityError,
    apply_generator,
    assemble_policy_generator,
    build_generator,
    read_triplets,
)
from ergodic_mfg.model import ModelSpec, lq_model, quadratic_lyapunov

from conftest import make_spec

SQRT2 = np.sqrt(2.0)  # sigma = sqrt(2)  <=>  a = sigma^2 / 2 = 1


def const_drift(b):
    return lambda x, u: b + 0.0 * np.asarray(x)


def test_grid_basics():
    g = Grid.from_spacing(1.0, 0.5)
    assert g.n_total == 5 and g.spacing[0] == 0.5
    assert np.allclose(g.nodes[:, 0], [-1, -0.5, 0, 0.5, 1])
    assert g.anchor_index == 2
    g2 = Grid.uniform(1.0, 4, dimension=2)
    assert g2.n_total == 16
    assert np.linalg.norm(g2.nodes[g2.anchor_index]) <= np.linalg.norm(g2.spacing) / 2 + 1e-12


@given(L=st.floats(0.5, 10), n=st.integers(3, 60), d=st.sampled_from([1, 2]))
def test_anchor_near_origin(L, n, d):
    g = Grid.uniform(L, n if d == 1 else min(n, 20), dimension=d)
    assert np.all(np.abs(g.nodes[g.anchor_index]) <= g.spacing / 2 + 1e-12)


def test_grid_errors():
    with pytest.raises(ValueError):
        Grid.uniform(1.0, 2)
    with pytest.raises(ValueError):
        Grid.uniform(-1.0, 5)
    with pytest.raises(ValueError, match="cap"):
        Grid.uniform(1.0, 600, dimension=2)
    with pytest.raises(ValueError):
        Grid.from_spacing(1.0, 0.3)
    with pytest.raises(ValueError):
        Grid.uniform(1.0, 5, dimension=3)


def test_pure_diffusion_row():
    g = Grid.from_spacing(1.0, 0.5)
    Q = build_generator(make_spec(sigma=SQRT2), g, [0.0]).matrix.toarray()
    assert Q[2, 1] == pytest.approx(4.0) and Q[2, 3] == pytest.approx(4.0)
    assert Q[2, 2] == pytest.approx(-8.0)


def test_upwind_drift_row():
    g = Grid.from_spacing(1.0, 0.5)
    Q = build_generator(make_spec(drift=const_drift(1.0), sigma=SQRT2), g, [0.0]).matrix.toarray()
    assert Q[2, 3] == pytest.approx(6.0) and Q[2, 1] == pytest.approx(4.0)
    assert Q[2, 2] == pytest.approx(-10.0)


def test_central_monotone_drift_row():
    g = Grid.from_spacing(1.0, 0.5)
    spec = make_spec(drift=const_drift(1.0), sigma=SQRT2, drift_scheme="central_monotone")
    Q = build_generator(spec, g, [0.0]).matrix.toarray()
    assert Q[2, 3] == pytest.approx(5.0) and Q[2, 1] == pytest.approx(3.0)
    # too much drift for the diffusion: falls back to upwind
    spec = make_spec(drift=const_drift(20.0), sigma=SQRT2, drift_scheme="central_monotone")
    Q = build_generator(spec, g, [0.0]).matrix.toarray()
    assert Q[2, 3] == pytest.approx(44.0) and Q[2, 1] == pytest.approx(4.0)


def test_reflecting_boundary_rows():
    g = Grid.from_spacing(1.0, 0.5)
    Q = build_generator(make_spec(drift=const_drift(1.0), sigma=SQRT2), g, [0.0]).matrix.toarray()
    assert Q[0, 1] == pytest.approx(6.0) and Q[0, 0] == pytest.approx(-6.0)
    assert Q[4, 3] == pytest.approx(4.0) and Q[4, 4] == pytest.approx(-4.0)


def random_1d_spec(coefs, sigma, scheme):
    c0, c1, c2 = coefs
    return make_spec(drift=lambda x, u: c0 + c1 * np.asarray(x) + c2 * np.sin(np.asarray(x)) + 0 * np.asarray(u),
                     sigma=sigma, drift_scheme=scheme)


@given(coefs=st.tuples(*[st.floats(-3, 3)] * 3), sigma=st.floats(0.2, 3),
       scheme=st.sampled_from(["upwind", "central_monotone"]))
def test_generator_is_rate_matrix(coefs, sigma, scheme):
    g = Grid.from_spacing(3.0, 0.1)
    Q = build_generator(random_1d_spec(coefs, sigma, scheme), g, [0.0])
    M = Q.matrix.toarray()
    off = M - np.diag(np.diag(M))
    assert off.min() >= 0.0
    assert np.abs(Q.row_sums()).max() <= 1e-12 * max(1.0, np.abs(M).max())
    assert max(np.count_nonzero(off[i]) for i in range(g.n_total)) <= 2
    tau = 0.99 / np.abs(np.diag(M)).max()
    P = np.eye(g.n_total) + tau * M
    assert P.min() >= -1e-15 and np.allclose(P.sum(axis=1), 1.0, atol=1e-12)


@given(coefs=st.tuples(*[st.floats(-3, 3)] * 3), slope=st.floats(-5, 5))
def test_exact_on_affine(coefs, slope):
    g = Grid.from_spacing(3.0, 0.1)
    spec = random_1d_spec(coefs, 1.0, "upwind")
    x = g.nodes[:, 0]
    Qf = apply_generator(build_generator(spec, g, [0.0]), 1.0 + slope * x)
    b = spec.drift(g.nodes, np.zeros((g.n_total, 1)))[:, 0]
    assert np.allclose(Qf[1:-1], slope * b[1:-1], atol=1e-10 * max(1, abs(slope)) * 10)


def test_apply_generator_examples():
    g = Grid.from_spacing(2.0, 0.1)
    x = g.nodes[:, 0]
    Q1 = build_generator(make_spec(drift=const_drift(1.0), sigma=SQRT2), g, [0.0])
    assert np.allclose(apply_generator(Q1, np.full(g.n_total, 3.0)), 0.0, atol=1e-12)
    assert np.allclose(apply_generator(Q1, x)[1:-1], 1.0, atol=1e-10)
    Q0 = build_generator(make_spec(sigma=SQRT2), g, [0.0])
    assert np.allclose(apply_generator(Q0, x**2)[1:-1], 2.0, atol=1e-10)
    with pytest.raises(ValueError):
        apply_generator(Q0, x[:-1])


def test_quadratic_exact_2d_with_cross_term():
    g = Grid.uniform(1.0, 11, dimension=2)
    S = np.array([[1.0, 0.0], [0.4, 0.8]])
    spec = ModelSpec(2, lambda x, u: 0.0 * np.asarray(x), lambda x: np.broadcast_to(S, np.shape(x)[:-1] + (2, 2)),
                     ((0.0, 0.0),), (1,), lambda x, u: 0.0 * np.asarray(x)[..., 0],
                     quadratic_lyapunov(4.0, 1.0))
    a = 0.5 * S @ S.T
    Q = build_generator(spec, g, [0.0]).matrix
    M = Q.toarray()
    assert (M - np.diag(np.diag(M))).min() >= 0
    x, y = g.nodes[:, 0], g.nodes[:, 1]
    interior = (np.abs(x) < 1 - 1e-9) & (np.abs(y) < 1 - 1e-9)
    for f, expected in ((x * y, 2 * a[0, 1]), (x**2, 2 * a[0, 0]), (y**2, 2 * a[1, 1])):
        assert np.allclose((Q @ f)[interior], expected, atol=1e-10)


def test_cross_term_too_large():
    g = Grid.uniform(1.0, 11, dimension=2)
    S = np.array([[1.0, 0.0], [2.0, 0.1]])  # a11 = 0.5 < |a12| = 1.0
    spec = ModelSpec(2, lambda x, u: 0.0 * np.asarray(x), lambda x: np.broadcast_to(S, np.shape(x)[:-1] + (2, 2)),
                     ((0.0, 0.0),), (1,), lambda x, u: 0.0 * np.asarray(x)[..., 0],
                     quadratic_lyapunov(4.0, 1.0))
    with pytest.raises(MonotonicityError) as exc:
        build_generator(spec, g, [0.0])
    assert exc.value.node >= 0


def test_control_outside_box():
    with pytest.raises(ValueError, match="outside"):
        build_generator(lq_model(), Grid.uniform(2.0, 9), [5.0])


def test_policy_generator_rows():
    spec = lq_model(n_controls=9)
    g = Grid.from_spacing(2.0, 0.25)
    const = assemble_policy_generator(spec, g, np.full((g.n_total, 1), 1.0))
    assert (const.matrix != build_generator(spec, g, [1.0]).matrix).nnz == 0
    pol = np.full((g.n_total, 1), 1.0)
    pol[7] = -2.0
    diff = (assemble_policy_generator(spec, g, pol).matrix - const.matrix).toarray()
    assert set(np.flatnonzero(np.abs(diff).sum(axis=1))) == {7}
    for i in (0, 7, g.n_total - 1):
        row = build_generator(spec, g, pol[i]).matrix.getrow(i).toarray()
        assert np.array_equal(assemble_policy_generator(spec, g, pol).matrix.getrow(i).toarray(), row)


def test_policy_generator_reproduces_hjb_residual():
    spec = lq_model(interaction="none", state_cost=1.0, n_controls=41)
    g = Grid.from_spacing(4.0, 0.1)
    sol = solve_ergodic_hjb(spec, g)
    Q = assemble_policy_generator(spec, g, sol.policy)
    disc = Discretization(spec, g)
    lhs = Q.matrix @ sol.V.values + disc.policy_cost(sol.policy)
    assert np.abs(lhs - sol.rho).max() <= 1e-9
    H = disc.q_values(sol.V.values) + disc.cost
    assert np.allclose(H.min(axis=1), lhs, atol=1e-9)


def test_discretization_tables_match_generators():
    spec = lq_model(n_controls=5, drift_scheme="central_monotone")
    g = Grid.from_spacing(2.0, 0.25)
    disc = Discretization(spec, g)
    V = np.cos(g.nodes[:, 0])
    H = disc.q_values(V)
    for j, u in enumerate(disc.controls):
        assert np.allclose(H[:, j], build_generator(spec, g, u).matrix @ V, atol=1e-12)


def test_refined_argmin_exact_for_quadratic():
    spec = lq_model(n_controls=9, state_cost=1.0, drift_scheme="central_monotone")
    g = Grid.from_spacing(2.0, 0.1)
    disc = Discretization(spec, g)
    V = 0.5 * g.nodes[:, 0] ** 2
    u, val = disc.refined_argmin(V)
    # central difference of x^2/2 is exact: optimal u = -x (inside the box)
    interior = slice(1, -1)
    assert np.allclose(u[interior, 0], -g.nodes[interior, 0], atol=1e-10)
    grid_min = (disc.q_values(V) + disc.cost).min(axis=1)
    assert np.all(val <= grid_min + 1e-14)


def test_triplet_export_roundtrip(tmp_path):
    g = Grid.from_spacing(1.0, 0.25)
    Q = build_generator(lq_model(n_controls=5), g, [1.0])
    path = tmp_path / "q.txt"
    Q.export_triplets(path)
    lines = path.read_text().splitlines()
    keys = [tuple(map(int, ln.split()[:2])) for ln in lines]
    assert keys == sorted(keys)
    assert (read_triplets(path, g.n_total) != Q.matrix).nnz == 0
    assert sp.issparse(Q.matrix)
