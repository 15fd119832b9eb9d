from dataclasses import dataclass
from typing import Optional
import numpy as np

from app.models.system_dynamics import as_matrix
from app.models.cost_weights import require_spd
from app.utils.errors import InvalidArgumentError


@dataclass(frozen=True)
class IrlConfig:
    """
    Learner-side settings shared by the model-based and data-driven iterations.

    R and gamma are fixed for the whole run; only Q is learned.

    Attributes:
        R: Learner input weight (m x m, SPD)
        gamma: Learner attenuation level (> 0)
        Q0: Initial state weight (n x n, SPD)
        max_iters: Iteration budget
        tol_converge: Stop once ||P^i - P^(i-1)||_F <= tol_converge
        gain_tol: Also stop once ||K^(i+1) - K_T|| <= gain_tol (only when K_T is known)
        blowup_bound: Growth factor; ||P^i||_F above blowup_bound * max(1, ||P^0||_F) is divergence
        cond_max: Regression condition number above which a warning is attached
        eps_noise: Slack for monotonicity checks on data-driven iterates
    """
    R: np.ndarray
    gamma: float
    Q0: np.ndarray
    max_iters: int = 500
    tol_converge: float = 1e-8
    gain_tol: Optional[float] = None
    blowup_bound: float = 1e6
    cond_max: float = 1e10
    eps_noise: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "R", require_spd(as_matrix(self.R, "R"), "R"))
        object.__setattr__(self, "Q0", require_spd(as_matrix(self.Q0, "Q0"), "Q0"))
        gamma = float(self.gamma)
        if not np.isfinite(gamma) or gamma <= 0.0:
            raise InvalidArgumentError(f"gamma must be finite and > 0, got {self.gamma}")
        object.__setattr__(self, "gamma", gamma)
        if int(self.max_iters) < 1:
            raise InvalidArgumentError(f"max_iters must be a positive integer, got {self.max_iters}")
        object.__setattr__(self, "max_iters", int(self.max_iters))
        if self.tol_converge <= 0.0:
            raise InvalidArgumentError(f"tol_converge must be positive, got {self.tol_converge}")
        if self.gain_tol is not None and self.gain_tol <= 0.0:
            raise InvalidArgumentError(f"gain_tol must be positive, got {self.gain_tol}")

    @property
    def n(self) -> int:
        return self.Q0.shape[0]

    @property
    def m(self) -> int:
        return self.R.shape[0]
