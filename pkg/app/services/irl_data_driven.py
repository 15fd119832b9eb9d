"""
Data-driven inverse reinforcement learning.

The policy correction is regressed from expert windows and the cost weight
from learner windows. Both regression matrices are built and factored once
per batch; each iteration only forms two new right-hand sides.
"""
import logging
from typing import Optional, Tuple

import numpy as np

from app.models.data_batch import DataBatch, required_windows
from app.models.irl_config import IrlConfig
from app.models.iteration_trace import IterationTrace
from app.models.regression import (
    LeastSquaresFactor,
    PolicyRegression,
    RankReport,
    WeightRegression,
    numerical_rank,
)
from app.models.system_dynamics import SystemDynamics, as_matrix
from app.services.irl_model_based import assess_iterate, check_blowup, note_flags, should_stop
from app.utils.errors import InvalidArgumentError, RankDeficientError
from app.utils.matops import NUMERIC, packed_size, sym_pack, sym_unpack, symmetrize

logger = logging.getLogger(__name__)


def _blocks(stack: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Per-window row-major blocks (windows x rows x cols)"""
    return stack.reshape(stack.shape[0], rows, cols)


def _quadratic_rhs(I_hat: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Per-window integral of w'Ww from hat-basis integrals of w"""
    return I_hat @ sym_pack(symmetrize(W))


def build_policy_regressors(batch: DataBatch, cfg: IrlConfig) -> PolicyRegression:
    """
    Regression of the integral Bellman identity over each expert window:

        d_xx . P - 2 int e'RKx - 2 gamma^2 int d'Lx
            = -int x'(Q + gamma^2 L_i'L_i)x - int (u - e)'R(u - e)

    Args:
        batch: Expert batch (I_xe required)
        cfg: Learner settings (R and gamma)

    Returns:
        PolicyRegression with Phi_p factored
    """
    if batch.I_xe is None:
        raise InvalidArgumentError("policy regression needs the probing-noise integrals I_xe")
    n, m, z = batch.n, batch.m, batch.z
    if cfg.n != n or cfg.m != m:
        raise InvalidArgumentError(f"learner config (n={cfg.n}, m={cfg.m}) does not match batch (n={n}, m={m})")

    M_e = _blocks(batch.I_xe, n, m)
    M_d = _blocks(batch.I_xd, n, z)
    # int e'RKx = <R M_e', K> and int d'Lx = <M_d', L>, both row-major
    cross_k = np.einsum("ab,jnb->jan", cfg.R, M_e).reshape(batch.window_count, m * n)
    cross_l = np.transpose(M_d, (0, 2, 1)).reshape(batch.window_count, z * n)
    Phi_p = np.hstack((batch.d_xx, -2.0 * cross_k, -2.0 * cfg.gamma ** 2 * cross_l))

    factor = LeastSquaresFactor.factor(Phi_p, NUMERIC["rank_tol"])
    reg = PolicyRegression(n=n, m=m, z=z, Phi_p=Phi_p, I_xx=batch.I_xx, I_ww=batch.I_ww, R=cfg.R,
                           gamma=cfg.gamma, factor=factor)
    if factor.rank < Phi_p.shape[1]:
        reg.warnings.append(f"policy regression rank {factor.rank} < {Phi_p.shape[1]}")
        logger.warning(f"Policy regression is rank deficient: {factor.rank}/{Phi_p.shape[1]}")
    elif factor.condition_number > cfg.cond_max:
        reg.warnings.append(f"policy regression ill-conditioned: cond {factor.condition_number:.3e}")
        logger.warning(f"Policy regression condition number {factor.condition_number:.3e} above {cfg.cond_max:.1e}")
    logger.debug(f"Policy regression {Phi_p.shape}, cond {factor.condition_number:.3e}")
    return reg


def policy_rhs(reg: PolicyRegression, Q_i: np.ndarray, L_i: np.ndarray) -> np.ndarray:
    """Psi_p for the current (Q_i, L_i)"""
    return -(_quadratic_rhs(reg.I_xx, Q_i + reg.gamma ** 2 * L_i.T @ L_i) + _quadratic_rhs(reg.I_ww, reg.R))


def solve_policy_lsq(reg: PolicyRegression, Q_i: np.ndarray, L_i: np.ndarray, cfg: IrlConfig,
                     method: str = "qr") -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Least-squares solve of the policy regression.

    Args:
        reg: Policy regression
        Q_i: Current state weight
        L_i: Current disturbance gain
        cfg: Learner settings
        method: "qr" (stored factors) or "svd"

    Returns:
        (P_i, K_next, L_next)
    """
    n, m, z = reg.n, reg.m, reg.z
    theta, residual = reg.factor.solve(policy_rhs(reg, Q_i, L_i), method=method, what="policy regression")
    reg.last_residual = residual
    p = packed_size(n)
    P = sym_unpack(theta[:p], n)
    K = theta[p:p + n * m].reshape(m, n)
    L = theta[p + n * m:].reshape(z, n)
    return P, K, L


def build_weight_regressors(batch: DataBatch) -> WeightRegression:
    """Phi_q = I_xx of the learner windows; d_xx and the cross-integrals feed the right side"""
    n, m, z = batch.n, batch.m, batch.z
    if batch.window_count < packed_size(n):
        raise InvalidArgumentError(f"weight regression needs at least {packed_size(n)} windows")
    factor = LeastSquaresFactor.factor(batch.I_xx, NUMERIC["rank_tol"])
    reg = WeightRegression(n=n, m=m, z=z, Phi_q=batch.I_xx, d_xx=batch.d_xx,
                           I_xu=_blocks(batch.I_xu, n, m), I_xd=_blocks(batch.I_xd, n, z), factor=factor)
    if factor.rank < packed_size(n):
        reg.warnings.append(f"weight regression rank {factor.rank} < {packed_size(n)}")
        logger.warning(f"Weight regression is rank deficient: {factor.rank}/{packed_size(n)}")
    return reg


def weight_rhs(reg: WeightRegression, P_i: np.ndarray, K_next: np.ndarray, L_next: np.ndarray,
               cfg: IrlConfig) -> np.ndarray:
    """
    Psi_q from the learner identity

        int x'Qx = -d_xx . P + int x'(K'RK - gamma^2 L'L)x + 2 int u'RKx + 2 gamma^2 int d'Lx
    """
    RK = cfg.R @ K_next
    cross_u = np.einsum("ab,jba->j", RK, reg.I_xu)
    cross_d = np.einsum("ab,jba->j", L_next, reg.I_xd)
    quad = K_next.T @ RK - cfg.gamma ** 2 * L_next.T @ L_next
    return (-reg.d_xx @ sym_pack(symmetrize(P_i)) + _quadratic_rhs(reg.Phi_q, quad)
            + 2.0 * cross_u + 2.0 * cfg.gamma ** 2 * cross_d)


def solve_weight_lsq(reg: WeightRegression, P_i: np.ndarray, K_next: np.ndarray, L_next: np.ndarray,
                     cfg: IrlConfig, method: str = "qr", enforce_pd: bool = True) -> np.ndarray:
    """
    Least-squares solve for Q_next.

    A result that is not positive definite is shifted by (|lambda_min| + 1e-8) I
    and a degraded-weight warning is recorded on the regression.

    Args:
        reg: Weight regression
        P_i: Corrected value matrix
        K_next: Control gain
        L_next: Disturbance gain
        cfg: Learner settings
        method: "qr" (stored factors) or "svd"
        enforce_pd: Apply the positive definite shift

    Returns:
        Symmetric Q_next
    """
    theta, residual = reg.factor.solve(weight_rhs(reg, P_i, K_next, L_next, cfg), method=method,
                                       what="weight regression")
    reg.last_residual = residual
    Q = sym_unpack(theta, reg.n)
    if enforce_pd:
        lam_min = float(np.min(np.linalg.eigvalsh(Q)))
        if lam_min <= 0.0:
            shift = abs(lam_min) + 1e-8
            Q = Q + shift * np.eye(reg.n)
            reg.warnings.append(f"degraded weight: Q shifted by {shift:.3e} to stay positive definite")
            logger.warning(f"Reconstructed Q not positive definite (lambda_min {lam_min:.3e}), shifted by {shift:.3e}")
    return Q


def check_rank(expert: DataBatch, learner: DataBatch) -> RankReport:
    """Numerical ranks of [I_xx, I_xu, I_xd] on expert data and of I_xx on learner data"""
    tol = NUMERIC["rank_tol"]
    expert_rank, _ = numerical_rank(np.hstack((expert.I_xx, expert.I_xu, expert.I_xd)), tol)
    learner_rank, _ = numerical_rank(learner.I_xx, tol)
    report = RankReport(
        expert_rank=expert_rank,
        expert_required=required_windows("expert", expert.n, expert.m, expert.z),
        learner_rank=learner_rank,
        learner_required=required_windows("learner", learner.n, learner.m, learner.z),
    )
    logger.info(f"Rank check: {report.describe()}")
    return report


def _drain(trace: IterationTrace, *regs):
    for reg in regs:
        trace.warnings.extend(reg.warnings)
        reg.warnings.clear()


def run_algorithm2(expert: DataBatch, learner: DataBatch, cfg: IrlConfig, dyn: Optional[SystemDynamics] = None,
                   K_target: Optional[np.ndarray] = None, method: str = "qr") -> IterationTrace:
    """
    Single-loop data-driven IRL from (Q0, L0 = 0).

    Args:
        expert: Expert batch with probing noise
        learner: Learner batch under the behavior gain
        cfg: Learner settings
        dyn: Dynamics, only used for diagnostics (GARE residual, Hurwitz flag)
        K_target: Expert gain, only used for diagnostics and the gain_tol stop
        method: Least-squares path, "qr" or "svd"

    Returns:
        IterationTrace with exactly two linear solves per iteration
    """
    if (expert.n, expert.m, expert.z) != (learner.n, learner.m, learner.z):
        raise InvalidArgumentError("expert and learner batches have different dimensions")
    rank = check_rank(expert, learner)
    if not rank.expert_ok:
        raise RankDeficientError("expert data is not exciting enough", rank.expert_required, rank.expert_rank)
    if not rank.learner_ok:
        raise RankDeficientError("learner data is not exciting enough", rank.learner_required, rank.learner_rank)
    if K_target is not None:
        K_target = as_matrix(K_target, "K_target", rows=expert.m, cols=expert.n)

    policy_reg = build_policy_regressors(expert, cfg)
    weight_reg = build_weight_regressors(learner)

    trace = IterationTrace(algorithm="alg2")
    Q = cfg.Q0
    L = np.zeros((expert.z, expert.n))
    previous = None
    logger.info(f"Algorithm 2: {expert.window_count} expert windows, {learner.window_count} learner windows, "
                f"cond(Phi_p) {policy_reg.condition_number:.3e}, cond(Phi_q) {weight_reg.condition_number:.3e}")

    for i in range(cfg.max_iters):
        P, K_next, L_next = solve_policy_lsq(policy_reg, Q, L, cfg, method=method)
        Q_next = solve_weight_lsq(weight_reg, P, K_next, L_next, cfg, method=method)
        trace.linear_solves += 2

        record = assess_iterate(i, Q, P, K_next, L_next, Q_next, cfg, previous=previous, dyn=dyn,
                                K_T=K_target, eps=cfg.eps_noise)
        record.policy_residual = policy_reg.last_residual
        record.weight_residual = weight_reg.last_residual
        trace.records.append(record)
        _drain(trace, policy_reg, weight_reg)
        note_flags(trace, record)
        check_blowup(trace, record, cfg)
        logger.debug(f"alg2 iteration {i}: p_step {record.p_step}, policy residual {record.policy_residual:.3e}")

        if should_stop(record, cfg):
            trace.converged = True
            break
        Q, L, previous = Q_next, L_next, record

    if trace.converged:
        logger.info(f"Algorithm 2 converged after {trace.iterations_used} iterations")
    else:
        logger.warning(f"Algorithm 2 did not converge within {cfg.max_iters} iterations")
    return trace
