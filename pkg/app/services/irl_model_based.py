"""
Model-based inverse reinforcement learning iteration.

Each step corrects the learner value against the expert closed loop,
takes the game gains of the corrected value and rebuilds the state weight
from the learner GARE. R and gamma stay fixed; only Q is learned.
"""
import logging
from typing import Optional, Tuple

import numpy as np

from app.models.system_dynamics import SystemDynamics, as_matrix
from app.models.game_solution import GameSolution
from app.models.irl_config import IrlConfig
from app.models.iteration_trace import IterationRecord, IterationTrace
from app.services.game_verify import consistency_residual
from app.utils.errors import DivergenceError, InvalidArgumentError, StabilityViolationError
from app.utils.matops import (
    NUMERIC,
    game_gains,
    gare_residual,
    is_hurwitz,
    psd_order,
    solve_lyapunov,
    symmetrize,
)

logger = logging.getLogger(__name__)


def policy_correction(dyn: SystemDynamics, K_T: np.ndarray, Q_i: np.ndarray, L_i: np.ndarray,
                      cfg: IrlConfig) -> np.ndarray:
    """
    Solves (A - BK_T)'P + P(A - BK_T) = -(Q_i + K_T'RK_T + gamma^2 L_i'L_i).

    Args:
        dyn: System dynamics
        K_T: Expert gain (m x n)
        Q_i: Current state weight
        L_i: Current disturbance gain (z x n)
        cfg: Learner settings

    Returns:
        Symmetric P_i
    """
    A_T = dyn.A - dyn.B @ K_T
    if not is_hurwitz(A_T):
        raise StabilityViolationError("expert closed loop A - B K_T is not Hurwitz")
    M = Q_i + K_T.T @ cfg.R @ K_T + cfg.gamma ** 2 * L_i.T @ L_i
    return symmetrize(solve_lyapunov(A_T, M, tol=max(NUMERIC["tol_lyap"], 1e-12 * np.linalg.norm(M))))


def input_update(dyn: SystemDynamics, P_i: np.ndarray, cfg: IrlConfig) -> Tuple[np.ndarray, np.ndarray]:
    """K = R^-1 B'P_i and L = gamma^-2 D'P_i"""
    return game_gains(dyn, cfg.R, cfg.gamma, P_i)


def weight_update(dyn: SystemDynamics, P_i: np.ndarray, K_next: np.ndarray, L_next: np.ndarray,
                  cfg: IrlConfig) -> np.ndarray:
    """Q = -A'P - PA + K'RK - gamma^2 L'L, so that (P_i, Q) satisfy the learner GARE"""
    A = dyn.A
    Q = -A.T @ P_i - P_i @ A + K_next.T @ cfg.R @ K_next - cfg.gamma ** 2 * L_next.T @ L_next
    return symmetrize(Q)


def _loewner_slack(base: float, *mats: np.ndarray) -> float:
    scale = max([1.0] + [float(np.linalg.norm(M, ord=2)) for M in mats])
    return base * scale


def assess_iterate(i: int, Q: np.ndarray, P: np.ndarray, K: np.ndarray, L: np.ndarray, Q_next: np.ndarray,
                   cfg: IrlConfig, previous: Optional[IterationRecord] = None, dyn: Optional[SystemDynamics] = None,
                   K_T: Optional[np.ndarray] = None, reference: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                   eps: Optional[float] = None) -> IterationRecord:
    """
    Builds the trace record of one iterate together with its diagnostics.

    Args:
        i: Iteration index
        Q: Q^i used for the correction
        P: Corrected P^i
        K: K^(i+1)
        L: L^(i+1)
        Q_next: Q^(i+1)
        cfg: Learner settings
        previous: Record of iteration i - 1
        dyn: Dynamics, enables the GARE residual and the Hurwitz flag
        K_T: Expert gain, enables the expert-consistency residual and the gain error
        reference: (Q_hat, L_hat) of a known solution, enables the upper bound check
        eps: Loewner order slack relative to the matrix scale (default eps_psd)

    Returns:
        Iteration record
    """
    eps = NUMERIC["eps_psd"] if eps is None else eps
    L_prev = previous.L if previous is not None else np.zeros_like(L)

    g2 = cfg.gamma ** 2
    W = symmetrize(Q + g2 * L_prev.T @ L_prev)
    W_next = symmetrize(Q_next + g2 * L.T @ L)
    monotone = psd_order(W, W_next, eps=_loewner_slack(eps, W, W_next))
    q_monotone = psd_order(symmetrize(Q), symmetrize(Q_next), eps=_loewner_slack(eps, Q, Q_next))
    p_step = None
    if previous is not None:
        monotone = monotone and psd_order(previous.P, P, eps=_loewner_slack(eps, previous.P, P))
        p_step = float(np.linalg.norm(P - previous.P, ord="fro"))

    record = IterationRecord(
        i=i, Q=symmetrize(Q), P=symmetrize(P), K=K, L=L, Q_next=symmetrize(Q_next),
        monotone_ok=bool(monotone), q_monotone=bool(q_monotone), p_step=p_step,
        q_step=float(np.linalg.norm(Q_next - Q, ord="fro")),
        l_step=float(np.linalg.norm(L - L_prev, ord="fro")),
    )
    if dyn is not None:
        record.gare_residual = gare_residual(dyn, P, Q_next, cfg.R, cfg.gamma)
        record.hurwitz_ok = is_hurwitz(dyn.A - dyn.B @ K)
        if K_T is not None:
            record.consistency_residual = consistency_residual(dyn, K_T, GameSolution(P=P, K=K, L=L), Q_next, cfg)
    if K_T is not None:
        record.gain_error = float(np.linalg.norm(K - K_T))
    if reference is not None:
        Q_hat, L_hat = reference
        bound = Q_hat + g2 * (L_hat.T @ L_hat - L_prev.T @ L_prev)
        record.bound_ok = psd_order(symmetrize(Q), symmetrize(bound), eps=_loewner_slack(eps, Q, bound))
    return record


def should_stop(record: IterationRecord, cfg: IrlConfig) -> bool:
    """
    Value step below tol_converge, an unchanged correction input (Q, L) which
    pins the next value to the current one, or gain within gain_tol of K_T.
    """
    if record.p_step is not None and record.p_step <= cfg.tol_converge:
        return True
    if record.q_step + record.l_step <= cfg.tol_converge:
        return True
    return cfg.gain_tol is not None and record.gain_error is not None and record.gain_error <= cfg.gain_tol


def check_blowup(trace: IterationTrace, record: IterationRecord, cfg: IrlConfig):
    """Raises DivergenceError once ||P^i||_F grows past blowup_bound times max(1, ||P^0||_F)"""
    norm = float(np.linalg.norm(record.P, ord="fro"))
    first = trace.records[0].P if trace.records else record.P
    bound = cfg.blowup_bound * max(1.0, float(np.linalg.norm(first, ord="fro")))
    if not np.isfinite(norm) or norm > bound:
        raise DivergenceError(f"{trace.algorithm}: ||P^{record.i}||_F = {norm:.3e} exceeds {bound:.3e}", trace=trace)


def note_flags(trace: IterationTrace, record: IterationRecord):
    """Collects non-fatal monotonicity, stability and bound violations as trace warnings"""
    if not record.monotone_ok:
        trace.warnings.append(f"iteration {record.i}: effective weight or value sequence not monotone")
    if record.hurwitz_ok is False:
        trace.warnings.append(f"iteration {record.i}: A - B K^(i+1) is not Hurwitz")
    if record.bound_ok is False:
        trace.warnings.append(f"iteration {record.i}: Q^i above the reference upper bound")


def run_algorithm1(dyn: SystemDynamics, K_T: np.ndarray, cfg: IrlConfig,
                   reference: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> IterationTrace:
    """
    Model-based IRL: alternates policy_correction, input_update and
    weight_update from (Q0, L0 = 0) until a stopping rule fires.

    Args:
        dyn: System dynamics
        K_T: Expert gain with A - B K_T Hurwitz
        cfg: Learner settings
        reference: Optional (Q_hat, L_hat) of a known expert-consistent solution

    Returns:
        IterationTrace; converged is False when max_iters ran out
    """
    K_T = as_matrix(K_T, "K_T", rows=dyn.m, cols=dyn.n)
    if cfg.n != dyn.n or cfg.m != dyn.m:
        raise InvalidArgumentError(f"learner config (n={cfg.n}, m={cfg.m}) does not match dynamics "
                                   f"(n={dyn.n}, m={dyn.m})")

    trace = IterationTrace(algorithm="alg1")
    Q = cfg.Q0
    L = np.zeros((dyn.z, dyn.n))
    previous = None
    logger.info(f"Algorithm 1: n={dyn.n}, m={dyn.m}, z={dyn.z}, gamma={cfg.gamma}, max_iters={cfg.max_iters}")

    for i in range(cfg.max_iters):
        P = policy_correction(dyn, K_T, Q, L, cfg)
        trace.linear_solves += 1
        K_next, L_next = input_update(dyn, P, cfg)
        Q_next = weight_update(dyn, P, K_next, L_next, cfg)

        record = assess_iterate(i, Q, P, K_next, L_next, Q_next, cfg, previous=previous, dyn=dyn, K_T=K_T,
                                reference=reference)
        trace.records.append(record)
        note_flags(trace, record)
        check_blowup(trace, record, cfg)
        logger.debug(f"alg1 iteration {i}: gain error {record.gain_error:.3e}, p_step {record.p_step}")

        if should_stop(record, cfg):
            trace.converged = True
            break
        Q, L, previous = Q_next, L_next, record

    if trace.converged:
        logger.info(f"Algorithm 1 converged after {trace.iterations_used} iterations, "
                    f"||K* - K_T|| = {trace.final.gain_error:.4e}")
    else:
        logger.warning(f"Algorithm 1 did not converge within {cfg.max_iters} iterations")
    return trace
