from dataclasses import dataclass, field
from typing import List, Optional, Tuple
import numpy as np
from scipy import linalg

from app.utils.errors import InvalidArgumentError, RankDeficientError

LSQ_METHODS = ("qr", "svd")


def numerical_rank(M: np.ndarray, rank_tol: float) -> Tuple[int, np.ndarray]:
    """Counts singular values above rank_tol times the largest one"""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0, np.zeros(0)
    s = linalg.svdvals(M)
    if s.size == 0 or s[0] == 0.0:
        return 0, s
    return int(np.sum(s > rank_tol * s[0])), s


def condition_number(s: np.ndarray, cols: int) -> float:
    """sigma_max / sigma_min over the column space, inf when rank deficient"""
    if s.size < cols or s.size == 0 or s[-1] == 0.0:
        return float("inf")
    return float(s[0] / s[-1])


@dataclass()
class LeastSquaresFactor:
    """
    Orthogonal factorization of a tall regression matrix, computed once and
    reused for every right-hand side.

    Attributes:
        matrix: The regression matrix (rows x cols)
        rank: Numerical rank
        condition_number: Ratio of extreme singular values
        q: Economic Q factor
        r: Upper triangular R factor
    """
    matrix: np.ndarray
    rank: int
    condition_number: float
    q: np.ndarray
    r: np.ndarray

    @classmethod
    def factor(cls, matrix: np.ndarray, rank_tol: float) -> "LeastSquaresFactor":
        rank, s = numerical_rank(matrix, rank_tol)
        q, r = linalg.qr(matrix, mode="economic")
        return cls(matrix=matrix, rank=rank, condition_number=condition_number(s, matrix.shape[1]), q=q, r=r)

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    def solve(self, rhs: np.ndarray, method: str = "qr", what: str = "regression") -> Tuple[np.ndarray, float]:
        """
        Least-squares solution of matrix . theta = rhs.

        Args:
            rhs: Right-hand side, one entry per window
            method: "qr" reuses the stored factors, "svd" solves from scratch
            what: Name used in the rank error

        Returns:
            (theta, residual norm)
        """
        if method not in LSQ_METHODS:
            raise InvalidArgumentError(f"least-squares method must be one of {LSQ_METHODS}, got {method!r}")
        if self.rank < self.cols:
            raise RankDeficientError(f"{what} matrix is rank deficient", required=self.cols, observed=self.rank)
        if method == "qr":
            theta = linalg.solve_triangular(self.r, self.q.T @ rhs)
        else:
            theta = linalg.lstsq(self.matrix, rhs, lapack_driver="gelsd")[0]
        residual = float(np.linalg.norm(self.matrix @ theta - rhs))
        return theta, residual


@dataclass()
class PolicyRegression:
    """
    Window-stacked regression for the game policy correction on expert data.

    Unknowns are ordered [sym_pack(P); vec_row(K); vec_row(L)].

    Attributes:
        n, m, z: Dimensions
        Phi_p: Regression matrix (l x (n(n+1)/2 + nm + nz)), iteration independent
        I_xx: Hat-basis state integrals, used by the right side
        I_ww: Hat-basis integrals of u - e, used by the right side
        R: Learner input weight
        gamma: Learner attenuation level
        factor: Orthogonal factorization of Phi_p
        last_residual: Residual norm of the latest solve
        warnings: Diagnostics collected while building and solving
    """
    n: int
    m: int
    z: int
    Phi_p: np.ndarray
    I_xx: np.ndarray
    I_ww: np.ndarray
    R: np.ndarray
    gamma: float
    factor: LeastSquaresFactor
    last_residual: Optional[float] = None
    warnings: List[str] = field(default_factory=list)

    @property
    def condition_number(self) -> float:
        return self.factor.condition_number


@dataclass()
class WeightRegression:
    """
    Window-stacked regression for the cost weight on learner data.

    Attributes:
        n, m, z: Dimensions
        Phi_q: I_xx stack (k x n(n+1)/2)
        d_xx: Hat-basis state differences
        I_xu: Cross-integrals of x and u, reshaped per window to n x m
        I_xd: Cross-integrals of x and d, reshaped per window to n x z
        factor: Orthogonal factorization of Phi_q
        last_residual: Residual norm of the latest solve
        warnings: Diagnostics collected while building and solving
    """
    n: int
    m: int
    z: int
    Phi_q: np.ndarray
    d_xx: np.ndarray
    I_xu: np.ndarray
    I_xd: np.ndarray
    factor: LeastSquaresFactor
    last_residual: Optional[float] = None
    warnings: List[str] = field(default_factory=list)

    @property
    def condition_number(self) -> float:
        return self.factor.condition_number


@dataclass(frozen=True)
class RankReport:
    """
    Excitation diagnostics of an expert/learner batch pair.

    Attributes:
        expert_rank: Numerical rank of [I_xx, I_xu, I_xd] on expert data
        expert_required: n(n+1)/2 + nm + nz
        learner_rank: Numerical rank of I_xx on learner data
        learner_required: n(n+1)/2
    """
    expert_rank: int
    expert_required: int
    learner_rank: int
    learner_required: int

    @property
    def expert_ok(self) -> bool:
        return self.expert_rank >= self.expert_required

    @property
    def learner_ok(self) -> bool:
        return self.learner_rank >= self.learner_required

    @property
    def passed(self) -> bool:
        return self.expert_ok and self.learner_ok

    def describe(self) -> str:
        return (f"expert rank {self.expert_rank}/{self.expert_required} "
                f"({'ok' if self.expert_ok else 'FAIL'}), "
                f"learner rank {self.learner_rank}/{self.learner_required} "
                f"({'ok' if self.learner_ok else 'FAIL'})")
