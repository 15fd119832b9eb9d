"""
Executable checks of the expert-learner game theory: expert consistency,
Hamiltonian saddle point, non-uniqueness relations, uniform cost scaling
and the trajectory imitation index.
"""
import logging
from typing import Optional

import numpy as np

from config.settings import get_numeric_config
from app.models.system_dynamics import SystemDynamics
from app.models.cost_weights import CostWeights
from app.models.game_solution import GameSolution
from app.models.verification_report import VerificationReport, ExpertSolution, LearnedSolution
from app.utils.matops import gare_residual, game_gains, solve_gare, symmetrize
from app.utils.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

# accepted distance between a learned gain and the expert gain
GAIN_TOL = 0.02
# |H(x, u*, d*)| bound for a model-based solution
HAMILTONIAN_TOL = 1e-9


def consistency_residual(dyn: SystemDynamics, K_T: np.ndarray, sol: GameSolution, Q: np.ndarray, cfg) -> float:
    """
    Frobenius norm of
        (A - BK_T)'P + P(A - BK_T) + Q + gamma^-2 PDD'P + K_T'RK_T.

    A pair (P, Q) that zeroes this and the learner GARE reproduces K_T.

    Args:
        dyn: System dynamics
        K_T: Expert gain
        sol: Learner solution (only P is used)
        Q: Learner state weight
        cfg: Anything carrying the learner's R and gamma

    Returns:
        Residual norm
    """
    P = sol.P
    A_T = dyn.A - dyn.B @ K_T
    res = A_T.T @ P + P @ A_T + Q + (P @ dyn.D @ dyn.D.T @ P) / cfg.gamma ** 2 + K_T.T @ cfg.R @ K_T
    return float(np.linalg.norm(res, ord="fro"))


def hamiltonian(dyn: SystemDynamics, P: np.ndarray, Q: np.ndarray, R: np.ndarray, gamma: float,
                x: np.ndarray, u: np.ndarray, d: np.ndarray) -> float:
    """H(x, u, d) = x'Qx + u'Ru - gamma^2 d'd + f'Px + x'Pf with f = Ax + Bu + Dd"""
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    d = np.asarray(d, dtype=float).ravel()
    f = dyn.A @ x + dyn.B @ u + dyn.D @ d
    return float(x @ Q @ x + u @ R @ u - gamma ** 2 * d @ d + 2.0 * f @ P @ x)


def saddle_check(dyn: SystemDynamics, sol: GameSolution, Q: np.ndarray, cfg, samples: int = 1000,
                 seed: int = 0, eps: float = None, tol_zero: float = 1e-9, scale: float = 1.0) -> VerificationReport:
    """
    Sampled Nash saddle-point test on the Hamiltonian:
        H(x, u*, d) <= H(x, u*, d*) <= H(x, u, d*)
    with u* = -Kx, d* = Lx, d = d* + delta_d and u = u* + delta_u.

    States are drawn on the unit sphere, so the zero-Hamiltonian check at
    (u*, d*) is scale free.

    Args:
        dyn: System dynamics
        sol: Solution (P, K, L) under test
        Q: State weight paired with P
        cfg: Anything carrying R and gamma
        samples: Number of random (x, delta_u, delta_d) draws
        seed: RNG seed
        eps: Slack on each inequality (default eps_psd)
        tol_zero: Tolerance on |H(x, u*, d*)|
        scale: Standard deviation of the perturbations

    Returns:
        Report with the saddle inequality and the zero-Hamiltonian checks
    """
    eps = get_numeric_config()["eps_psd"] if eps is None else eps
    rng = np.random.default_rng(seed)
    lower_margin = np.inf
    upper_margin = np.inf
    max_abs_h = 0.0
    violations = 0
    for _ in range(samples):
        x = rng.standard_normal(dyn.n)
        x /= np.linalg.norm(x)
        du = scale * rng.standard_normal(dyn.m)
        dd = scale * rng.standard_normal(dyn.z)
        u_star = -sol.K @ x
        d_star = sol.L @ x
        h_mid = hamiltonian(dyn, sol.P, Q, cfg.R, cfg.gamma, x, u_star, d_star)
        h_low = hamiltonian(dyn, sol.P, Q, cfg.R, cfg.gamma, x, u_star, d_star + dd)
        h_high = hamiltonian(dyn, sol.P, Q, cfg.R, cfg.gamma, x, u_star + du, d_star)
        lower = h_mid - h_low
        upper = h_high - h_mid
        lower_margin = min(lower_margin, lower)
        upper_margin = min(upper_margin, upper)
        max_abs_h = max(max_abs_h, abs(h_mid))
        if lower < -eps or upper < -eps:
            violations += 1

    report = VerificationReport()
    report.add(
        "saddle_inequalities", violations, 0, anchor="Nash equilibrium of the learner game",
        detail=f"{samples} samples, min margins: disturbance {lower_margin:.3e}, control {upper_margin:.3e}",
    )
    report.add("hamiltonian_zero", max_abs_h, tol_zero, anchor="H(x, u*, d*) = 0 at the GARE solution")
    if violations:
        logger.warning(f"Saddle check: {violations}/{samples} samples violated the Nash inequalities")
    return report


def nonuniqueness_residual(target: ExpertSolution, learned: LearnedSolution, dyn: SystemDynamics,
                           tol: float = 1e-4, gain_slack: float = 0.0) -> VerificationReport:
    """
    Residuals of the relations tying a learned (Q*, R, gamma, P*) to the
    expert's (Q_T, R_T, gamma_T, P_T):
        B'P_o = R_o R_T^-1 B'P_T
        Q_o + A'P_o + P_oA - K_T'R_oK_T + gamma_T^-2 P_TDD'P_T - gamma^-2 P*DD'P* = 0
    with Q_o = Q_T - Q*, R_o = R_T - R, P_o = P_T - P*.
    Both small means the learned solution is one of the many that explain K_T.

    Both relations are exact only when the learned gain equals K_T; a gain
    error up to gain_slack widens the tolerances to first order in it.
    """
    Q_o = target.Q - learned.Q
    R_o = target.R - learned.R
    P_o = target.P - learned.P
    A, B, D = dyn.A, dyn.B, dyn.D

    gain_relation = B.T @ P_o - R_o @ np.linalg.solve(target.R, B.T @ target.P)
    cost_relation = (
        Q_o + A.T @ P_o + P_o @ A - target.K.T @ R_o @ target.K
        + (target.P @ D @ D.T @ target.P) / target.gamma ** 2
        - (learned.P @ D @ D.T @ learned.P) / learned.gamma ** 2
    )
    K_learned = np.linalg.solve(learned.R, B.T @ learned.P)

    r_norm = float(np.linalg.norm(learned.R, ord=2))
    tol_gain = tol + r_norm * gain_slack
    tol_cost = tol + r_norm * gain_slack * (2.0 * float(np.linalg.norm(target.K, ord=2)) + gain_slack)

    report = VerificationReport()
    report.add("nonuniqueness_gain", np.linalg.norm(gain_relation, ord="fro"), tol_gain,
               anchor="B'P_o = R_o R_T^-1 B'P_T")
    report.add("nonuniqueness_cost", np.linalg.norm(symmetrize(cost_relation), ord="fro"), tol_cost,
               anchor="Q_o relation of the solution family")
    report.add(
        "weight_distance", np.linalg.norm(Q_o, ord="fro"), 0.0, passed=True,
        anchor="multiple-solution phenomenon",
        detail=f"||Q_T - Q*||_F = {np.linalg.norm(Q_o):.4f}, ||P_T - P*||_F = {np.linalg.norm(P_o):.4f}, "
               f"||K* - K_T|| = {np.linalg.norm(K_learned - target.K):.3e}",
    )
    return report


def scale_solution(target: CostWeights, c: float) -> CostWeights:
    """Uniformly scaled weights (cQ_T, cR_T, sqrt(c) gamma_T); the optimal gain is unchanged"""
    if not np.isfinite(c) or c <= 0.0:
        raise InvalidArgumentError(f"scale factor must be positive, got {c}")
    return CostWeights(Q=c * target.Q, R=c * target.R, gamma=float(np.sqrt(c)) * target.gamma)


def scaling_check(dyn: SystemDynamics, target: CostWeights, factors=(0.1, 0.5, 2.0, 10.0),
                  tol_value: float = 1e-6, tol_gain: float = 1e-8) -> VerificationReport:
    """Solves the GARE for each scaled weight set and compares P to c P_T and K to K_T"""
    base = solve_gare(dyn, target)
    report = VerificationReport()
    for c in factors:
        scaled = solve_gare(dyn, scale_solution(target, c))
        value_err = np.linalg.norm(scaled.P - c * base.P) / np.linalg.norm(c * base.P)
        gain_err = np.max(np.abs(scaled.K - base.K))
        report.add(f"scaling_value_c{c:g}", value_err, tol_value, anchor="P(cQ, cR, sqrt(c)gamma) = c P")
        report.add(f"scaling_gain_c{c:g}", gain_err, tol_gain, anchor="K(cQ, cR, sqrt(c)gamma) = K")
    return report


def imitation_error(learner_traj: np.ndarray, target_traj: np.ndarray, T_sample: Optional[float] = None,
                    a: Optional[int] = None) -> float:
    """
    Te = (1/n) sum_i sqrt( (1/a) sum_k |x_i(kT) - x_Ti(kT)|^2 ).

    Args:
        learner_traj: Learner states at the a sample instants (a x n)
        target_traj: Expert states at the same instants (a x n)
        T_sample: Sampling period (informational)
        a: Expected sample count; checked when given

    Returns:
        Imitation error index
    """
    x = np.atleast_2d(np.asarray(learner_traj, dtype=float))
    x_T = np.atleast_2d(np.asarray(target_traj, dtype=float))
    if x.shape != x_T.shape:
        raise InvalidArgumentError(f"trajectory shapes differ: {x.shape} vs {x_T.shape}")
    if a is not None and x.shape[0] != a:
        raise InvalidArgumentError(f"expected {a} samples, got {x.shape[0]}")
    if x.shape[0] == 0:
        raise InvalidArgumentError("trajectories must contain at least one sample")
    rms = np.sqrt(np.mean((x - x_T) ** 2, axis=0))
    return float(np.mean(rms))


def verification_suite(dyn: SystemDynamics, K_T: np.ndarray, sol: GameSolution, Q: np.ndarray, cfg,
                       expert: Optional[ExpertSolution] = None, target_weights: Optional[CostWeights] = None,
                       samples: int = 1000, seed: int = 0, tol: float = 1e-4,
                       tol_zero: float = HAMILTONIAN_TOL) -> VerificationReport:
    """
    Runs every check that applies to a learned solution.

    Args:
        dyn: System dynamics
        K_T: Expert gain
        sol: Learned (P*, K*, L*)
        Q: Learned Q*
        cfg: Learner R and gamma
        expert: Expert solution, enables the non-uniqueness relations
        target_weights: Expert weights, enables the scaling check
        samples: Saddle check sample count
        seed: Saddle check seed
        tol: Tolerance for residuals on learned inputs
        tol_zero: Tolerance on the Hamiltonian at the saddle point

    Returns:
        Combined report
    """
    report = VerificationReport()
    report.add("gare_residual", gare_residual(dyn, sol.P, Q, cfg.R, cfg.gamma), tol, anchor="learner GARE")
    report.add("consistency_residual", consistency_residual(dyn, K_T, sol, Q, cfg), tol,
               anchor="expert-consistency condition")
    report.add("gain_error", np.linalg.norm(sol.K - K_T), GAIN_TOL, anchor="K* = K_T")
    # the saddle point belongs to the learned value function, so use its own Nash gains
    K_nash, L_nash = game_gains(dyn, cfg.R, cfg.gamma, sol.P)
    nash = GameSolution(P=sol.P, K=K_nash, L=L_nash)
    report.extend(saddle_check(dyn, nash, Q, cfg, samples=samples, seed=seed, tol_zero=tol_zero))
    if expert is not None:
        learned = LearnedSolution(Q=Q, R=cfg.R, gamma=cfg.gamma, P=sol.P)
        report.extend(nonuniqueness_residual(expert, learned, dyn, tol=tol, gain_slack=GAIN_TOL))
    if target_weights is not None:
        report.extend(scaling_check(dyn, target_weights))
    return report

