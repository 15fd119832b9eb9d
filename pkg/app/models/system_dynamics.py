from dataclasses import dataclass
import numpy as np

from app.utils.errors import InvalidArgumentError


def as_matrix(value, name: str, rows: int = None, cols: int = None) -> np.ndarray:
    """
    Converts nested lists or arrays into a finite 2-D float matrix.

    Args:
        value: Array-like input
        name: Name used in error messages
        rows: Expected row count (None = any)
        cols: Expected column count (None = any)

    Returns:
        2-D numpy array of dtype float
    """
    mat = np.atleast_2d(np.asarray(value, dtype=float))
    if mat.ndim != 2:
        raise InvalidArgumentError(f"{name} must be a matrix, got {mat.ndim} dimensions")
    if mat.size == 0:
        raise InvalidArgumentError(f"{name} must not be empty")
    if not np.all(np.isfinite(mat)):
        raise InvalidArgumentError(f"{name} must contain only finite values")
    if rows is not None and mat.shape[0] != rows:
        raise InvalidArgumentError(f"{name} must have {rows} rows, got {mat.shape[0]}")
    if cols is not None and mat.shape[1] != cols:
        raise InvalidArgumentError(f"{name} must have {cols} columns, got {mat.shape[1]}")
    return mat


@dataclass(frozen=True)
class SystemDynamics:
    """
    Continuous-time LTI agent  dx/dt = A x + B u + D d.

    Expert and learner share the same matrices; only the data each one
    produces differs.

    Attributes:
        A: State matrix (n x n, 1/time)
        B: Control input matrix (n x m)
        D: Disturbance input matrix (n x z)
    """
    A: np.ndarray
    B: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape[1] != n:
            raise InvalidArgumentError(f"A must be square, got {A.shape}")
        B = as_matrix(self.B, "B", rows=n)
        D = as_matrix(self.D, "D", rows=n)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "D", D)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def z(self) -> int:
        return self.D.shape[1]

    def closed_loop(self, K: np.ndarray) -> np.ndarray:
        """Returns A - B K for a gain K (m x n)"""
        K = as_matrix(K, "K", rows=self.m, cols=self.n)
        return self.A - self.B @ K

    def derivative(self, x: np.ndarray, u: np.ndarray, d: np.ndarray) -> np.ndarray:
        return self.A @ x + self.B @ u + self.D @ d
