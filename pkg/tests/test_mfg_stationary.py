import numpy as np
import pytest

from ergodic_mfg.ergodic import Policy, policy_value, solve_ergodic_hjb
from ergodic_mfg.grid import Grid
from ergodic_mfg.measures import GridMeasure, moment, wasserstein
from ergodic_mfg.mfg_stationary import (
    MfgSolution,
    read_checkpoint,
    solve_mfg,
    verify_mfg_solution,
    write_checkpoint,
)
from ergodic_mfg.model import interaction_field, lq_model

KERNEL = dict(interaction="kernel", interaction_scale=1.0, state_cost=1.0)


@pytest.fixture(scope="module")
def grid():
    return Grid.from_spacing(6.0, 0.1)


@pytest.fixture(scope="module")
def lq_solution(grid):
    # discrete controls on this grid settle into a 2-cycle of Picard iterates;
    # the strictly convex refinement removes it
    spec = lq_model(kappa=-0.5, strictly_convex=True, drift_scheme="central_monotone")
    return spec, solve_mfg(spec, grid, GridMeasure.delta_at(grid, [2.0]), tol=1e-10)


def test_decoupled_one_step(grid):
    spec = lq_model(interaction="none", state_cost=1.0)
    sol = solve_mfg(spec, grid, GridMeasure.delta_at(grid, [1.0]))
    assert sol.converged and sol.iterations == 1
    ref = solve_ergodic_hjb(spec, grid)
    assert np.array_equal(sol.mu.weights, ref.mu_v.weights)
    assert sol.rho == ref.rho
    assert sol.fixed_point_gap == 0.0


def test_lq_mfg_solution(lq_solution, grid):
    _, sol = lq_solution
    assert sol.converged
    assert abs(sol.mu.mean()[0]) <= 1e-3
    assert sol.rho == pytest.approx(0.5, rel=0.02)
    var = sol.mu.integrate(grid.nodes[:, 0] ** 2) - sol.mu.mean()[0] ** 2
    assert var == pytest.approx(0.5, rel=0.05)
    assert sol.fixed_point_gap <= 1e-8
    assert sol.hjb_residual <= 1e-8
    assert sol.fp_residual <= 1e-8


def test_lq_value_occupation_consistency(lq_solution, grid):
    spec, sol = lq_solution
    F = interaction_field(spec, grid, sol.mu.weights)
    rho, _ = policy_value(spec, grid, sol.policy, coupling=F)
    assert abs(rho - sol.rho) <= 1e-8


def test_discrete_controls_cycle_is_reported(grid):
    sol = solve_mfg(lq_model(kappa=-0.5), grid, GridMeasure.delta_at(grid, [2.0]), max_iters=80)
    assert not sol.converged
    assert sol.gap_history[-1] == sol.gap_history[-3] > 1e-4


def test_certificate_passes(lq_solution, grid):
    spec, sol = lq_solution
    cert = verify_mfg_solution(spec, grid, sol, n_probe=30)
    assert cert.passed and cert.probes_failed == 0
    assert cert.probe_min_excess >= -1e-8
    assert cert.fp_residual <= 1e-8


def test_certificate_detects_perturbed_policy(lq_solution, grid):
    spec, sol = lq_solution
    rng = np.random.default_rng(1)
    u = sol.policy.controls.copy()
    nodes = rng.choice(grid.n_total, size=int(0.05 * grid.n_total), replace=False)
    u[nodes] = spec.control_bounds[1]
    F = interaction_field(spec, grid, sol.mu.weights)
    rho_bad, _ = policy_value(spec, grid, Policy(grid, u), coupling=F)
    assert rho_bad > sol.rho
    bad = MfgSolution(**{**sol.__dict__, "policy": Policy(grid, u)})
    cert = verify_mfg_solution(spec, grid, bad, n_probe=10)
    assert not cert.passed
    assert cert.fp_residual > 1e-3 and cert.fixed_point_gap > 1e-3


def test_certificate_flags_noninvariant_measure(lq_solution, grid):
    spec, sol = lq_solution
    bad = MfgSolution(**{**sol.__dict__, "mu": GridMeasure.delta_at(grid, [1.0])})
    cert = verify_mfg_solution(spec, grid, bad, n_probe=5)
    assert cert.fp_residual > 0.1
    assert cert.fixed_point_gap > 0.5


def test_kernel_three_inits_agree(grid):
    spec = lq_model(**KERNEL)
    tol = 1e-10
    sols = [solve_mfg(spec, grid, GridMeasure.delta_at(grid, [x0]), tol=tol) for x0 in (-2.0, 0.0, 2.0)]
    assert all(s.converged for s in sols)
    for s in sols[1:]:
        assert wasserstein(1, s.mu, sols[0].mu) <= 10 * tol
    assert abs(sols[0].mu.mean()[0]) < 1e-8


def test_moment_bound_along_iterates(grid):
    spec = lq_model(**KERNEL)
    sol = solve_mfg(spec, grid, GridMeasure.delta_at(grid, [2.0]), max_iters=10)
    bound = spec.lyapunov.c0 / spec.lyapunov.c1
    assert max(m**2 for m in sol.moment2_history) <= bound + 1e-10


def test_fictitious_play_converges(grid):
    spec = lq_model(kappa=-0.5, strictly_convex=True, drift_scheme="central_monotone")
    picard = solve_mfg(spec, grid, GridMeasure.delta_at(grid, [2.0]), tol=1e-10)
    fp = solve_mfg(spec, grid, GridMeasure.delta_at(grid, [2.0]), mode="fictitious_play",
                   tol=1e-4, max_iters=200)
    assert fp.mode == "fictitious_play"
    assert wasserstein(1, fp.mu, picard.mu) <= 1e-2


def test_nonconvergence_returns_flag(grid):
    spec = lq_model(**KERNEL)
    sol = solve_mfg(spec, grid, GridMeasure.delta_at(grid, [2.0]), max_iters=2)
    assert not sol.converged
    assert len(sol.gap_history) == 2


def test_bad_arguments(grid):
    spec = lq_model()
    mu = GridMeasure.uniform(grid)
    with pytest.raises(ValueError):
        solve_mfg(spec, grid, mu, damping=0.0)
    with pytest.raises(ValueError):
        solve_mfg(spec, grid, mu, mode="newton")


def test_checkpoint_resume_is_exact(grid, tmp_path):
    spec = lq_model(**KERNEL)
    mu0 = GridMeasure.delta_at(grid, [2.0])
    full = solve_mfg(spec, grid, mu0, tol=1e-10)
    saved = {}

    def cb(k, mu, hist):
        if k == 5:
            write_checkpoint(tmp_path / "ck.csv", mu, k, 0.5, "picard", gap_history=hist)
            saved["w"] = mu.weights.copy()

    solve_mfg(spec, grid, mu0, tol=1e-10, callback=cb, stop_after=5)
    header, mu5 = read_checkpoint(tmp_path / "ck.csv", grid)
    assert np.array_equal(mu5.weights, saved["w"])
    assert header["iteration"] == 5
    resumed = solve_mfg(spec, grid, mu5, tol=1e-10, start_iter=header["iteration"],
                        gap_history=header["gap_history"])
    assert resumed.iterations == full.iterations
    assert np.array_equal(resumed.mu.weights, full.mu.weights)
    assert resumed.gap_history == full.gap_history
    assert resumed.rho == full.rho


def test_checkpoint_grid_mismatch(grid, tmp_path):
    write_checkpoint(tmp_path / "ck.csv", GridMeasure.uniform(grid), 1, 0.5, "picard")
    with pytest.raises(ValueError):
        read_checkpoint(tmp_path / "ck.csv", Grid.from_spacing(6.0, 0.2))


def test_summary_fields(lq_solution):
    s = lq_solution[1].summary()
    assert {"rho", "fixed_point_gap", "hjb_residual", "fp_residual", "iterations"} <= set(s)
    assert moment(2, lq_solution[1].mu) > 0
