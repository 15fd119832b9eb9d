import numpy as np
import pytest

from app.models.game_solution import GameSolution
from app.models.verification_report import ExpertSolution, LearnedSolution, VerificationReport
from app.services.game_verify import (
    HAMILTONIAN_TOL,
    consistency_residual,
    hamiltonian,
    imitation_error,
    nonuniqueness_residual,
    saddle_check,
    scale_solution,
    scaling_check,
    verification_suite,
)
from app.services.irl_model_based import run_algorithm1
from app.utils.errors import InvalidArgumentError
from tests.conftest import random_game


@pytest.fixture()
def expert(expert_weights, expert_solution):
    return ExpertSolution(Q=expert_weights.Q, R=expert_weights.R, gamma=expert_weights.gamma,
                          P=expert_solution.P, K=expert_solution.K)


class TestConsistencyResidual:
    def test_vanishes_at_expert_solution(self, plant_dyn, expert_weights, expert_solution):
        assert consistency_residual(plant_dyn, expert_solution.K, expert_solution, expert_weights.Q,
                                    expert_weights) <= 1e-7

    def test_detects_wrong_weight(self, plant_dyn, expert_weights, expert_solution):
        residual = consistency_residual(plant_dyn, expert_solution.K, expert_solution, 2.0 * expert_weights.Q,
                                        expert_weights)
        assert residual == pytest.approx(np.linalg.norm(expert_weights.Q), rel=1e-6)

    def test_equals_gain_gap_for_model_based_iterate(self, plant_dyn, expert_solution, learner_cfg):
        trace = run_algorithm1(plant_dyn, expert_solution.K, learner_cfg)
        final = trace.final
        gap = final.K - expert_solution.K
        expected = np.linalg.norm(gap.T @ learner_cfg.R @ gap)
        assert final.consistency_residual == pytest.approx(expected, rel=1e-4, abs=1e-10)


class TestSaddleCheck:
    def test_hamiltonian_vanishes_at_equilibrium(self, plant_dyn, expert_weights, expert_solution):
        x = np.array([0.3, -0.7])
        h = hamiltonian(plant_dyn, expert_solution.P, expert_weights.Q, expert_weights.R, expert_weights.gamma,
                        x, -expert_solution.K @ x, expert_solution.L @ x)
        assert abs(h) <= 1e-8

    def test_expert_solution_is_a_saddle_point(self, plant_dyn, expert_weights, expert_solution):
        report = saddle_check(plant_dyn, expert_solution, expert_weights.Q, expert_weights, samples=1000,
                              tol_zero=1e-7)
        assert report.get("saddle_inequalities").residual == 0
        assert report.get("hamiltonian_zero").residual <= 1e-7
        assert report.passed

    def test_perturbed_value_breaks_the_saddle(self, plant_dyn, expert_weights, expert_solution):
        shifted = GameSolution(P=expert_solution.P + 0.1 * np.eye(2), K=expert_solution.K, L=expert_solution.L)
        report = saddle_check(plant_dyn, shifted, expert_weights.Q, expert_weights, samples=1000)
        assert report.get("saddle_inequalities").residual > 0
        assert not report.passed

    def test_is_reproducible(self, plant_dyn, expert_weights, expert_solution):
        a = saddle_check(plant_dyn, expert_solution, expert_weights.Q, expert_weights, samples=50, seed=3)
        b = saddle_check(plant_dyn, expert_solution, expert_weights.Q, expert_weights, samples=50, seed=3)
        assert a.get("hamiltonian_zero").residual == b.get("hamiltonian_zero").residual


class TestNonuniqueness:
    def test_expert_against_itself(self, plant_dyn, expert):
        learned = LearnedSolution(Q=expert.Q, R=expert.R, gamma=expert.gamma, P=expert.P)
        report = nonuniqueness_residual(expert, learned, plant_dyn, tol=1e-6)
        assert report.passed
        assert report.get("weight_distance").residual == 0.0

    def test_scaled_solution_belongs_to_the_family(self, plant_dyn, expert):
        c = 2.0
        learned = LearnedSolution(Q=c * expert.Q, R=c * expert.R, gamma=np.sqrt(c) * expert.gamma, P=c * expert.P)
        report = nonuniqueness_residual(expert, learned, plant_dyn, tol=1e-6)
        assert report.get("nonuniqueness_gain").passed
        assert report.get("nonuniqueness_cost").passed
        assert report.get("weight_distance").residual == pytest.approx(np.linalg.norm(expert.Q))

    def test_unrelated_solution_fails(self, plant_dyn, expert):
        learned = LearnedSolution(Q=expert.Q, R=expert.R, gamma=expert.gamma, P=expert.P + np.eye(2))
        report = nonuniqueness_residual(expert, learned, plant_dyn, tol=1e-6)
        assert not report.get("nonuniqueness_gain").passed


class TestScaling:
    @pytest.mark.parametrize("c", [0.0, -1.0, float("nan"), float("inf")])
    def test_rejects_invalid_factor(self, expert_weights, c):
        with pytest.raises(InvalidArgumentError):
            scale_solution(expert_weights, c)

    def test_scaled_weights(self, expert_weights):
        scaled = scale_solution(expert_weights, 4.0)
        np.testing.assert_allclose(scaled.Q, 4.0 * expert_weights.Q)
        np.testing.assert_allclose(scaled.R, 4.0 * expert_weights.R)
        assert scaled.gamma == pytest.approx(2.0 * expert_weights.gamma)

    def test_gain_is_scale_invariant(self, plant_dyn, expert_weights):
        report = scaling_check(plant_dyn, expert_weights)
        assert report.passed
        assert len(report.checks) == 8


    def test_gain_is_scale_invariant_on_random_games(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            dyn, weights, target, _ = random_game(rng)
            report = scaling_check(dyn, weights, factors=(0.1, 2.0, 10.0),
                                   tol_gain=1e-8 * max(1.0, np.linalg.norm(target.K)))
            assert report.passed, report.to_text()
            assert {c.name for c in report.checks} == {
                "scaling_value_c0.1", "scaling_gain_c0.1", "scaling_value_c2", "scaling_gain_c2",
                "scaling_value_c10", "scaling_gain_c10",
            }


class TestImitationError:
    def test_identical_trajectories(self):
        x = np.random.default_rng(0).normal(size=(250, 2))
        assert imitation_error(x, x) == 0.0

    def test_constant_offset(self):
        target = np.zeros((10, 2))
        learner = target + np.array([0.1, 0.3])
        assert imitation_error(learner, target, T_sample=0.008, a=10) == pytest.approx(0.2)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            imitation_error(np.zeros((10, 2)), np.zeros((9, 2)))

    def test_sample_count_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            imitation_error(np.zeros((10, 2)), np.zeros((10, 2)), a=250)


class TestVerificationSuite:
    def test_model_based_result_passes(self, plant_dyn, expert_weights, expert_solution, learner_cfg, expert):
        trace = run_algorithm1(plant_dyn, expert_solution.K, learner_cfg)
        sol = GameSolution(P=trace.P_star, K=trace.K_star, L=trace.L_star)
        report = verification_suite(plant_dyn, expert_solution.K, sol, trace.Q_star, learner_cfg, expert=expert,
                                    target_weights=expert_weights, samples=1000)
        assert report.passed, report.to_text()
        names = {c.name for c in report.checks}
        assert {"gare_residual", "consistency_residual", "gain_error", "saddle_inequalities",
                "hamiltonian_zero", "nonuniqueness_gain", "nonuniqueness_cost"} <= names
        assert report.get("weight_distance").residual > 0.1
        hamiltonian_check = report.get("hamiltonian_zero")
        assert hamiltonian_check.tolerance == HAMILTONIAN_TOL == 1e-9
        assert hamiltonian_check.residual <= 1e-9

    def test_hamiltonian_tolerance_separates_regression_noise(self, plant_dyn, expert_solution, learner_cfg):
        trace = run_algorithm1(plant_dyn, expert_solution.K, learner_cfg)
        sol = GameSolution(P=trace.P_star, K=trace.K_star, L=trace.L_star)
        noisy = trace.Q_star + 1e-6 * np.eye(2)
        strict = verification_suite(plant_dyn, expert_solution.K, sol, noisy, learner_cfg, samples=200)
        relaxed = verification_suite(plant_dyn, expert_solution.K, sol, noisy, learner_cfg, samples=200,
                                     tol_zero=1e-4)
        assert strict.get("hamiltonian_zero").residual == pytest.approx(1e-6, rel=1e-3)
        assert not strict.get("hamiltonian_zero").passed
        assert relaxed.get("hamiltonian_zero").passed

    def test_wrong_weight_fails(self, plant_dyn, expert_solution, learner_cfg):
        trace = run_algorithm1(plant_dyn, expert_solution.K, learner_cfg)
        sol = GameSolution(P=trace.P_star, K=trace.K_star, L=trace.L_star)
        report = verification_suite(plant_dyn, expert_solution.K, sol, trace.Q_star + np.eye(2), learner_cfg,
                                    samples=100)
        assert not report.get("gare_residual").passed
        assert not report.passed

    def test_report_text(self):
        report = VerificationReport()
        report.add("a", 1e-9, 1e-6)
        report.add("b", 1.0, 1e-6)
        text = report.to_text()
        assert "PASS" in text and "FAIL" in text
        assert "1/2 checks passed" in text
        with pytest.raises(KeyError):
            report.get("c")
