from dataclasses import dataclass
import numpy as np

from app.models.system_dynamics import as_matrix
from app.utils.errors import InvalidArgumentError


def require_spd(mat: np.ndarray, name: str, sym_tol: float = 1e-9) -> np.ndarray:
    """Checks that a matrix is symmetric positive definite and returns its symmetric part"""
    if mat.shape[0] != mat.shape[1]:
        raise InvalidArgumentError(f"{name} must be square, got {mat.shape}")
    scale = max(1.0, float(np.max(np.abs(mat))))
    if np.max(np.abs(mat - mat.T)) > sym_tol * scale:
        raise InvalidArgumentError(f"{name} must be symmetric")
    sym = 0.5 * (mat + mat.T)
    if np.min(np.linalg.eigvalsh(sym)) <= 0.0:
        raise InvalidArgumentError(f"{name} must be positive definite")
    return sym


@dataclass(frozen=True)
class CostWeights:
    """
    Quadratic game cost  x'Qx + u'Ru - gamma^2 d'd.

    Attributes:
        Q: State weight (n x n, symmetric positive definite)
        R: Input weight (m x m, symmetric positive definite)
        gamma: Disturbance attenuation level (> 0)
    """
    Q: np.ndarray
    R: np.ndarray
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "Q", require_spd(as_matrix(self.Q, "Q"), "Q"))
        object.__setattr__(self, "R", require_spd(as_matrix(self.R, "R"), "R"))
        gamma = float(self.gamma)
        if not np.isfinite(gamma) or gamma <= 0.0:
            raise InvalidArgumentError(f"gamma must be finite and > 0, got {self.gamma}")
        object.__setattr__(self, "gamma", gamma)
