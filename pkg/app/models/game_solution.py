from dataclasses import dataclass
import numpy as np


@dataclass(frozen=True)
class GameSolution:
    """
    Stabilizing solution of a game algebraic Riccati equation.

    Attributes:
        P: Value matrix (n x n, symmetric positive definite)
        K: Control gain, u = -K x (m x n)
        L: Worst-case disturbance gain, d = L x (z x n)
        residual: Frobenius norm of the GARE residual at P
        method: Solver path that produced P ("newton" or "hamiltonian")
    """
    P: np.ndarray
    K: np.ndarray
    L: np.ndarray
    residual: float = 0.0
    method: str = "newton"
