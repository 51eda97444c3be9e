"""Test the pseudo-parabolic time-stepping method."""
import numpy as np
import pytest
import scipy.sparse as sp
from structlog.testing import capture_logs

from app.core.exceptions import ConfigurationError, InvalidParameterError
from app.models.enums import MethodTag
from app.models.problem import TimeSchemeParams
from app.pipelines.experiments import (
    SweepGrid,
    compute_errors,
    convergence_sweep,
    mean_order,
    observed_orders,
    run_method,
    solve_spectral,
)
from app.pipelines.method_pseudoparabolic import (
    boundary_scheme_step,
    count_norm_increases,
    initial_state,
    resolve_delta,
    solve_method2,
    step,
)
from app.pipelines.steklov import schur_complement


@pytest.fixture
def two_node_problem():
    """All-boundary problem with A = 2·M_Γ, so S = 2I and S^{-α}1 = 2^{-α}."""
    M_gamma = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0)
    A = 2.0 * M_gamma
    return A, M_gamma, M_gamma @ np.ones(2)


class TestTimeSchemeParams:
    """Test the step-size model."""

    def test_pseudo_time_levels(self):
        """Test τ, t^n and t_σ."""
        params = TimeSchemeParams(N=4, sigma=0.75)
        assert params.tau == 0.25
        assert params.t(2) == 0.5
        assert params.t_sigma(1) == pytest.approx(0.4375)

    def test_low_weight_warns(self):
        """Test σ < 0.5 is accepted with a warning."""
        with capture_logs() as logs:
            params = TimeSchemeParams(N=10, sigma=0.3)
        assert not params.stable
        assert any(entry["event"] == "sigma_below_stability_threshold" for entry in logs)

    @pytest.mark.parametrize("kwargs", [{"N": 0}, {"N": 5, "sigma": 0.0}, {"N": 5, "sigma": 1.5},
                                        {"N": 5, "delta": -1.0}])
    def test_invalid(self, kwargs):
        """Test N, σ and δ ranges."""
        with pytest.raises(ValueError):
            TimeSchemeParams(**kwargs)


class TestInitialState:
    """Test w⁰ = δ^{-α} ĝ extended harmonically."""

    def test_unit_delta(self, coarse_setup):
        """Test δ = 1 leaves the trace at ĝ = 1."""
        state = initial_state(coarse_setup.A, coarse_setup.M_gamma, coarse_setup.b_g, 1.0, 0.5)
        assert np.allclose(state.w[coarse_setup.op.boundary_nodes], 1.0, atol=1e-12)
        assert state.n == 0
        assert state.harmonic_residuals[0] < 1e-12

    def test_scaled_delta(self, coarse_setup):
        """Test δ = 0.9 scales the trace by 0.9^{-1/2}."""
        state = initial_state(coarse_setup.A, coarse_setup.M_gamma, coarse_setup.b_g, 0.9, 0.5)
        assert np.allclose(state.w[coarse_setup.op.boundary_nodes], 1.054093, atol=1e-6)

    @pytest.mark.parametrize("alpha, delta", [(0.0, 1.0), (1.0, 1.0), (0.5, 0.0), (0.5, -1.0)])
    def test_invalid_inputs(self, coarse_setup, alpha, delta):
        """Test α and δ ranges."""
        with pytest.raises(InvalidParameterError):
            initial_state(coarse_setup.A, coarse_setup.M_gamma, coarse_setup.b_g, delta, alpha)


class TestStepping:
    """Test single steps and whole runs."""

    @pytest.mark.parametrize("N", [1, 3, 10])
    def test_scalar_operator_is_exact(self, two_node_problem, N):
        """Test D = 0 keeps w⁰ = δ^{-α}ĝ, the exact answer, for any N."""
        A, M_gamma, b_g = two_node_problem
        y, report = solve_method2(A, M_gamma, b_g, 0.5, TimeSchemeParams(N=N), delta=2.0)
        assert np.allclose(y, 2.0 ** -0.5, rtol=1e-10)
        assert report.monotone

    def test_step_past_end(self, coarse_setup):
        """Test stepping beyond N."""
        params = TimeSchemeParams(N=1)
        state = initial_state(coarse_setup.A, coarse_setup.M_gamma, coarse_setup.b_g, 0.5, 0.5)
        state = step(state, params, coarse_setup.A, coarse_setup.M_gamma)
        with pytest.raises(InvalidParameterError):
            step(state, params, coarse_setup.A, coarse_setup.M_gamma)

    def test_steps_stay_harmonic(self, coarse_setup):
        """Test every state satisfies (A w)_I = 0 to 1e-9."""
        _, report = run_method(coarse_setup, MethodTag.METHOD2, 0.5, N=20)
        assert len(report.harmonic_residuals) == 21
        assert max(report.harmonic_residuals) <= 1e-9

    @pytest.mark.parametrize("sigma", [0.5, 0.75, 1.0])
    def test_norm_nonincreasing(self, coarse_setup, sigma):
        """Test σ ≥ 0.5 never increases the boundary norm."""
        _, report = run_method(coarse_setup, MethodTag.METHOD2, 0.5, N=20, sigma=sigma)
        assert report.monotone
        assert report.stability_violations == 0
        assert len(report.norm_history) == 21

    def test_report_parameters(self, coarse_setup):
        """Test δ defaults to a margin below λ₁."""
        _, report = run_method(coarse_setup, MethodTag.METHOD2, 0.5, N=5)
        params = report.parameters
        assert params["delta"] < params["lambda1"]
        assert params["lambda1"] == pytest.approx(coarse_setup.eigs.lambda1, rel=1e-8)
        assert len(report.iteration_counts) == 5

    def test_report_residual_is_worst_step(self, coarse_setup):
        """Test the reported residual is the largest final CG residual over the steps."""
        state = initial_state(coarse_setup.A, coarse_setup.M_gamma, coarse_setup.b_g, 0.5, 0.5)
        params = TimeSchemeParams(N=3)
        for _ in range(params.N):
            state = step(state, params, coarse_setup.A, coarse_setup.M_gamma, tol=1e-10)
        assert len(state.step_residuals) == 3
        assert all(0.0 < r <= 1e-10 for r in state.step_residuals)

        _, report = run_method(coarse_setup, MethodTag.METHOD2, 0.5, N=5, tol=1e-10)
        assert 0.0 < report.residual <= 1e-10

    def test_matches_boundary_scheme(self, coarse_setup):
        """Test full-space steps reproduce the dense boundary recursion."""
        op = coarse_setup.op
        params = TimeSchemeParams(N=5)
        delta, _ = resolve_delta(op, None)
        S_B, M_B = schur_complement(op)
        state = initial_state(op.A, op.M_gamma, coarse_setup.b_g, delta, 0.5, op=op)
        y_B = state.w[op.boundary_nodes].copy()
        for n in range(params.N):
            state = step(state, params, op.A, op.M_gamma, op=op, tol=1e-13)
            y_B = boundary_scheme_step(y_B, S_B, M_B, n, params, delta, 0.5)
            trace = state.w[op.boundary_nodes]
            assert np.abs(trace - y_B).max() <= 1e-10 * np.abs(y_B).max()

    def test_delta_above_lambda1(self, coarse_setup):
        """Test δ = 2λ₁ is a configuration error."""
        lam = coarse_setup.eigs.lambda1
        with pytest.raises(ConfigurationError):
            solve_method2(coarse_setup.A, coarse_setup.M_gamma, coarse_setup.b_g, 0.5,
                          TimeSchemeParams(N=5), delta=2.0 * lam)

    def test_delta_near_lambda1_warns(self, coarse_setup):
        """Test δ within 1% of λ₁ runs with a warning."""
        lam = coarse_setup.eigs.lambda1
        with capture_logs() as logs:
            resolve_delta(coarse_setup.op, 0.995 * lam)
        assert any(entry["event"] == "delta_close_to_lambda1" for entry in logs)

    def test_count_norm_increases(self):
        """Test the monotonicity counter with slack."""
        assert count_norm_increases([3.0, 2.0, 2.0 * (1 + 1e-14), 2.5]) == 1
        assert count_norm_increases([1.0]) == 0


class TestSecondOrderConvergence:
    """Test accuracy and observed orders against the oracle."""

    @pytest.mark.slow
    def test_fine_time_grid_matches_oracle(self, coarse_setup):
        """Test N = 2000 is within 1e-4 of the spectral solution and of method I at M = 200."""
        y, _ = run_method(coarse_setup, MethodTag.METHOD2, 0.5, N=2000)
        ref = solve_spectral(coarse_setup, 0.5)
        assert compute_errors(y, ref, coarse_setup.M_gamma, coarse_setup.M_omega).e2_gamma <= 1e-4
        y1, _ = run_method(coarse_setup, MethodTag.METHOD1, 0.5, M=200)
        assert compute_errors(y, y1, coarse_setup.M_gamma, coarse_setup.M_omega).e2_gamma <= 2e-4

    @pytest.fixture(scope="class")
    def crank_nicolson_records(self, coarse_mesh):
        grid = SweepGrid(methods=[MethodTag.METHOD2], params=[5, 10, 20, 40, 80, 160],
                         alphas=[0.25, 0.5, 0.75], c0s=[1.0, 5.0, 25.0], sigma=0.5)
        return convergence_sweep(grid, mesh=coarse_mesh)

    @pytest.mark.slow
    @pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
    def test_second_order_at_half_weight(self, crank_nicolson_records, alpha):
        """Test σ = 0.5 converges at order two."""
        orders = observed_orders(crank_nicolson_records)
        assert 1.7 <= mean_order(orders, "method2", alpha, 5.0) <= 2.3

    @pytest.mark.slow
    def test_norm_monotone_over_sweep(self, crank_nicolson_records):
        """Test no sweep point ever increased the boundary norm."""
        assert all(r.monotone for r in crank_nicolson_records)

    @pytest.mark.slow
    def test_boundary_and_domain_orders_agree(self, crank_nicolson_records):
        """Test boundary and domain errors show the same order."""
        gamma = mean_order(observed_orders(crank_nicolson_records, "e2_gamma"), "method2", 0.5, 5.0)
        omega = mean_order(observed_orders(crank_nicolson_records, "e2_omega"), "method2", 0.5, 5.0)
        assert abs(gamma - omega) <= 0.3

    @pytest.mark.slow
    @pytest.mark.parametrize("c0", [1.0, 25.0])
    def test_order_insensitive_to_reaction(self, crank_nicolson_records, c0):
        """Test the order holds for weak and strong reaction."""
        orders = observed_orders(crank_nicolson_records)
        assert 1.5 <= mean_order(orders, "method2", 0.5, c0) <= 2.5

    @pytest.mark.slow
    def test_first_order_implicit(self, coarse_mesh):
        """Test σ = 1 converges at order one."""
        grid = SweepGrid(methods=[MethodTag.METHOD2], params=[10, 20, 40, 80, 160],
                         alphas=[0.5], c0s=[5.0], sigma=1.0)
        orders = observed_orders(convergence_sweep(grid, mesh=coarse_mesh))
        assert 0.8 <= mean_order(orders, "method2", 0.5, 5.0) <= 1.2
