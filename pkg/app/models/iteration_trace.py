from dataclasses import dataclass, field
from typing import List, Optional
import numpy as np


@dataclass()
class IterationRecord:
    """
    One step of the IRL iteration: (Q^i, P^i, K^(i+1), L^(i+1)) and Q^(i+1).

    Attributes:
        i: Iteration index
        Q: Cost weight Q^i used for the policy correction
        P: Corrected value matrix P^i
        K: Control gain K^(i+1)
        L: Disturbance gain L^(i+1)
        Q_next: Reconstructed weight Q^(i+1)
        gare_residual: Learner GARE residual of (P^i, Q^(i+1)), when dynamics are known
        consistency_residual: Expert-consistency residual of (P^i, Q^(i+1)), when K_T is known
        gain_error: ||K^(i+1) - K_T||, when K_T is known
        hurwitz_ok: A - B K^(i+1) is Hurwitz (None when dynamics are unknown)
        monotone_ok: W^i <= W^(i+1) and P^(i-1) <= P^i, with the effective weight W = Q + gamma^2 L'L
        q_monotone: Q^i <= Q^(i+1); implied by monotone_ok only when D = 0
        bound_ok: Q^i below the reference upper bound (None without a reference)
        p_step: ||P^i - P^(i-1)||_F (None at i = 0)
        q_step: ||Q^(i+1) - Q^i||_F
        l_step: ||L^(i+1) - L^i||_F
        policy_residual: Least-squares residual of the policy regression (data-driven only)
        weight_residual: Least-squares residual of the weight regression (data-driven only)
    """
    i: int
    Q: np.ndarray
    P: np.ndarray
    K: np.ndarray
    L: np.ndarray
    Q_next: np.ndarray
    gare_residual: Optional[float] = None
    consistency_residual: Optional[float] = None
    gain_error: Optional[float] = None
    hurwitz_ok: Optional[bool] = None
    monotone_ok: bool = True
    q_monotone: bool = True
    bound_ok: Optional[bool] = None
    p_step: Optional[float] = None
    q_step: float = 0.0
    l_step: float = 0.0
    policy_residual: Optional[float] = None
    weight_residual: Optional[float] = None


@dataclass()
class IterationTrace:
    """
    Ordered iteration records of one Algorithm 1 or Algorithm 2 run.

    Attributes:
        algorithm: "alg1" or "alg2"
        records: Iteration records in order
        converged: Whether a stopping rule fired before max_iters
        linear_solves: Number of linear/least-squares solves performed
        warnings: Non-fatal diagnostics gathered during the run
    """
    algorithm: str
    records: List[IterationRecord] = field(default_factory=list)
    converged: bool = False
    linear_solves: int = 0
    warnings: List[str] = field(default_factory=list)

    @property
    def iterations_used(self) -> int:
        return len(self.records)

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]

    @property
    def K_star(self) -> np.ndarray:
        return self.final.K

    @property
    def L_star(self) -> np.ndarray:
        return self.final.L

    @property
    def P_star(self) -> np.ndarray:
        return self.final.P

    @property
    def Q_star(self) -> np.ndarray:
        return self.final.Q_next
