import numpy as np
import pytest
from scipy.linalg import block_diag, solve_continuous_are

from app.models.cost_weights import CostWeights
from app.models.system_dynamics import SystemDynamics
from app.utils.errors import InvalidArgumentError, StabilityViolationError
from app.utils.matops import (
    bilinear_regressor,
    gare_residual,
    hat_from_gram,
    hat_vec,
    is_hurwitz,
    psd_order,
    solve_gare,
    solve_lyapunov,
    sym_pack,
    sym_unpack,
    vec_row,
)
from tests.conftest import REF_K_T, REF_L_T, REF_P_T, random_game


class TestQuadraticBasis:
    def test_hat_vec_expansion(self):
        np.testing.assert_allclose(hat_vec([1.0, 2.0]), [1.0, 4.0, 4.0])
        np.testing.assert_allclose(hat_vec([1.0, 0.0, 0.0]), [1.0, 0, 0, 0, 0, 0])

    def test_hat_vec_quadratic_form(self):
        x = np.array([3.0, -1.0])
        W = np.array([[2.0, 1.0], [1.0, 5.0]])
        assert hat_vec(x) @ sym_pack(W) == pytest.approx(17.0)
        assert x @ W @ x == pytest.approx(17.0)

    def test_hat_vec_random_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            x = rng.normal(size=4)
            M = rng.normal(size=(4, 4))
            W = M + M.T
            assert hat_vec(x) @ sym_pack(W) == pytest.approx(x @ W @ x)

    def test_hat_vec_empty_rejected(self):
        with pytest.raises(InvalidArgumentError):
            hat_vec([])

    def test_hat_from_gram_of_constant_state(self):
        x = np.array([1.0, 0.0])
        np.testing.assert_allclose(hat_from_gram(0.008 * np.outer(x, x)), [0.008, 0.0, 0.0])

    def test_sym_unpack_is_exactly_symmetric(self):
        W = sym_unpack([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3)
        assert np.array_equal(W, W.T)
        np.testing.assert_array_equal(sym_pack(W), [1.0, 2.0, 3.0, 4.0, 5.0, 6.0])

    def test_sym_unpack_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            sym_unpack([1.0, 2.0], 2)


class TestVectorization:
    def test_vec_row_examples(self):
        np.testing.assert_array_equal(vec_row([[1, 2], [3, 4]]), [1, 2, 3, 4])
        np.testing.assert_array_equal(vec_row(np.eye(2)), [1, 0, 0, 1])
        np.testing.assert_array_equal(vec_row([[5, 6, 7]]), [5, 6, 7])

    def test_bilinear_identity(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=3)
        b = rng.normal(size=2)
        W = rng.normal(size=(3, 2))
        assert bilinear_regressor(a, b) @ vec_row(W) == pytest.approx(a @ W @ b)


class TestLyapunov:
    def test_scalar(self):
        np.testing.assert_allclose(solve_lyapunov([[-1.0]], [[2.0]]), [[1.0]])

    def test_decoupled(self):
        np.testing.assert_allclose(solve_lyapunov(-np.eye(2), np.diag([2.0, 4.0])), np.diag([1.0, 2.0]), atol=1e-12)

    def test_against_kronecker_solve(self):
        A = np.array([[0.0, 1.0], [-2.0, -3.0]])
        M = np.eye(2)
        P = solve_lyapunov(A, M)
        # column-major vec: vec(A'P + PA) = (I (x) A' + A' (x) I) vec(P)
        G = np.kron(np.eye(2), A.T) + np.kron(A.T, np.eye(2))
        P_ref = np.linalg.solve(G, -M.flatten(order="F")).reshape(2, 2, order="F")
        np.testing.assert_allclose(P, P_ref, atol=1e-9)
        assert np.linalg.norm(A.T @ P + P @ A + M) <= 1e-9
        assert np.all(np.linalg.eigvalsh(P) > 0)

    def test_non_hurwitz_rejected(self):
        with pytest.raises(StabilityViolationError):
            solve_lyapunov([[1.0]], [[1.0]])


class TestGare:
    def test_scalar_without_disturbance(self):
        dyn = SystemDynamics([[-1.0]], [[1.0]], [[0.0]])
        sol = solve_gare(dyn, CostWeights([[3.0]], [[1.0]], 2.0))
        assert sol.P[0, 0] == pytest.approx(1.0, abs=1e-9)
        assert sol.K[0, 0] == pytest.approx(1.0, abs=1e-9)
        assert sol.L[0, 0] == pytest.approx(0.0, abs=1e-12)

    def test_scalar_with_disturbance(self):
        dyn = SystemDynamics([[0.0]], [[1.0]], [[1.0]])
        sol = solve_gare(dyn, CostWeights([[1.0]], [[1.0]], np.sqrt(2.0)))
        assert sol.P[0, 0] == pytest.approx(np.sqrt(2.0), abs=1e-9)
        assert sol.K[0, 0] == pytest.approx(np.sqrt(2.0), abs=1e-9)
        assert sol.L[0, 0] == pytest.approx(1.0 / np.sqrt(2.0), abs=1e-9)

    def test_two_state_expert(self, plant_dyn, expert_solution):
        np.testing.assert_allclose(expert_solution.K, REF_K_T, atol=1e-3)
        np.testing.assert_allclose(expert_solution.L, REF_L_T, atol=1e-3)
        np.testing.assert_allclose(expert_solution.P, REF_P_T, atol=1e-3)
        assert is_hurwitz(plant_dyn.A - plant_dyn.B @ expert_solution.K + plant_dyn.D @ expert_solution.L)

    def test_residual_below_tolerance(self, plant_dyn, expert_weights, expert_solution):
        residual = gare_residual(plant_dyn, expert_solution.P, expert_weights.Q, expert_weights.R, expert_weights.gamma)
        assert residual <= 1e-7
        assert expert_solution.residual == pytest.approx(residual)

    def test_dimension_mismatch(self, plant_dyn):
        with pytest.raises(InvalidArgumentError):
            solve_gare(plant_dyn, CostWeights(np.eye(3), [[1.0]], 2.0))

    def test_random_scalar_closed_form(self):
        """2aP + q - sP^2 = 0 with s = b^2/r - d^2/gamma^2 has stabilizing root (a + sqrt(a^2 + qs)) / s"""
        rng = np.random.default_rng(17)
        for _ in range(100):
            a = rng.uniform(-2.0, -0.1)
            b = rng.uniform(0.5, 2.0)
            d = rng.uniform(0.0, 1.0)
            q = rng.uniform(0.1, 5.0)
            r = rng.uniform(0.1, 5.0)
            gamma = np.sqrt(d * d * r / (b * b) * rng.uniform(2.0, 10.0) + 0.5)
            s = b * b / r - d * d / gamma ** 2
            expected = (a + np.sqrt(a * a + q * s)) / s
            sol = solve_gare(SystemDynamics([[a]], [[b]], [[d]]), CostWeights([[q]], [[r]], gamma))
            assert sol.P[0, 0] == pytest.approx(expected, rel=1e-8)
            assert sol.K[0, 0] == pytest.approx(b * expected / r, rel=1e-8)
            assert sol.L[0, 0] == pytest.approx(d * expected / gamma ** 2, rel=1e-8, abs=1e-12)

    def test_random_systems_match_indefinite_care(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            dyn, weights, target, _ = random_game(rng)
            R_game = block_diag(weights.R, -weights.gamma ** 2 * np.eye(dyn.z))
            P_ref = solve_continuous_are(dyn.A, np.hstack((dyn.B, dyn.D)), weights.Q, R_game)
            assert np.linalg.norm(target.P - P_ref) <= 1e-8 * np.linalg.norm(P_ref)
            assert is_hurwitz(dyn.A - dyn.B @ target.K + dyn.D @ target.L)


class TestOrderings:
    def test_is_hurwitz(self, plant_dyn):
        assert is_hurwitz([[0.0, 1.0], [-2.0, -3.0]])
        assert not is_hurwitz(np.zeros((2, 2)))
        assert is_hurwitz(plant_dyn.closed_loop(REF_K_T))

    def test_psd_order(self):
        assert psd_order(np.eye(2), 2 * np.eye(2))
        assert not psd_order(2 * np.eye(2), np.eye(2))
        assert psd_order(np.diag([1.0, 3.0]), np.diag([2.0, 3.0]))

    def test_psd_order_rejects_asymmetric(self):
        with pytest.raises(InvalidArgumentError):
            psd_order([[1.0, 1.0], [0.0, 1.0]], np.eye(2))
