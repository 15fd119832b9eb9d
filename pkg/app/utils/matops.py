"""
Linear algebra kernels shared by every IRL module.

Conventions:
- vec_row flattens row by row, so a'Wb = kron(a, b) . vec_row(W)
- SymPacked stores the upper triangle row by row
- hat_vec(x) . sym_pack(W) = x'Wx for symmetric W
"""
import logging
from typing import Tuple

import numpy as np
from scipy import linalg

from config.settings import get_numeric_config
from app.models.system_dynamics import SystemDynamics, as_matrix
from app.models.cost_weights import CostWeights
from app.models.game_solution import GameSolution
from app.utils.errors import (
    InvalidArgumentError,
    StabilityViolationError,
    NumericFailureError,
    NoSolutionError,
)

logger = logging.getLogger(__name__)

NUMERIC = get_numeric_config()


def packed_size(n: int) -> int:
    return n * (n + 1) // 2


def hat_vec(x: np.ndarray) -> np.ndarray:
    """
    Quadratic basis [x1^2, 2x1x2, ..., 2x1xn, x2^2, ..., xn^2].

    Args:
        x: State vector of length n >= 1

    Returns:
        Vector of length n(n+1)/2
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise InvalidArgumentError("hat_vec needs a non-empty vector")
    rows, cols = np.triu_indices(x.size)
    weights = np.where(rows == cols, 1.0, 2.0)
    return weights * x[rows] * x[cols]


def hat_from_gram(gram: np.ndarray) -> np.ndarray:
    """Hat basis of an integrated outer product: hat of S where S = integral of x x'"""
    gram = np.asarray(gram, dtype=float)
    rows, cols = np.triu_indices(gram.shape[0])
    weights = np.where(rows == cols, 1.0, 2.0)
    return weights * gram[rows, cols]


def vec_row(A: np.ndarray) -> np.ndarray:
    """Row-major flattening [a11, a12, ..., a1n, a21, ..., amn]"""
    return np.ascontiguousarray(np.atleast_2d(np.asarray(A, dtype=float))).ravel()


def bilinear_regressor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross-product regressor with a'Wb = bilinear_regressor(a, b) . vec_row(W)"""
    return np.kron(np.asarray(a, dtype=float).ravel(), np.asarray(b, dtype=float).ravel())


def sym_pack(W: np.ndarray) -> np.ndarray:
    """Packs the upper triangle of a symmetric matrix row by row"""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[0] != W.shape[1]:
        raise InvalidArgumentError(f"sym_pack needs a square matrix, got {W.shape}")
    return W[np.triu_indices(W.shape[0])]


def sym_unpack(packed: np.ndarray, n: int) -> np.ndarray:
    """Rebuilds the exactly symmetric n x n matrix from its packed upper triangle"""
    packed = np.asarray(packed, dtype=float).ravel()
    if packed.size != packed_size(n):
        raise InvalidArgumentError(
            f"packed vector of length {packed.size} does not match dimension {n}"
        )
    W = np.zeros((n, n))
    W[np.triu_indices(n)] = packed
    return W + np.triu(W, 1).T


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def is_hurwitz(A: np.ndarray, eps: float = None) -> bool:
    """True iff every eigenvalue of A has real part < -eps"""
    eps = NUMERIC["eps_hurwitz"] if eps is None else eps
    A = as_matrix(A, "A")
    if A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"is_hurwitz needs a square matrix, got {A.shape}")
    return bool(np.all(np.linalg.eigvals(A).real < -eps))


def psd_order(A: np.ndarray, B: np.ndarray, eps: float = None, sym_tol: float = 1e-8) -> bool:
    """
    Loewner order test A <= B.

    Args:
        A: Symmetric matrix
        B: Symmetric matrix of the same size
        eps: Slack on the minimum eigenvalue of B - A

    Returns:
        True iff lambda_min(B - A) >= -eps
    """
    eps = NUMERIC["eps_psd"] if eps is None else eps
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"psd_order needs square matrices of equal size, got {A.shape} and {B.shape}")
    for name, M in (("A", A), ("B", B)):
        scale = max(1.0, float(np.max(np.abs(M))))
        if np.max(np.abs(M - M.T)) > sym_tol * scale:
            raise InvalidArgumentError(f"psd_order argument {name} is not symmetric")
    return bool(np.min(np.linalg.eigvalsh(symmetrize(B - A))) >= -eps)


def lyapunov_operator_matrix(A_cl: np.ndarray) -> np.ndarray:
    """
    Matrix of the map P -> A_cl'P + P A_cl restricted to symmetric P,
    acting on sym_pack(P) and returning sym_pack of the image.
    """
    n = A_cl.shape[0]
    rows, cols = np.triu_indices(n)
    G = np.empty((rows.size, rows.size))
    for k, (i, j) in enumerate(zip(rows, cols)):
        E = np.zeros((n, n))
        E[i, j] = 1.0
        E[j, i] = 1.0
        G[:, k] = (A_cl.T @ E + E @ A_cl)[rows, cols]
    return G


def solve_lyapunov(A_cl: np.ndarray, M: np.ndarray, tol: float = None) -> np.ndarray:
    """
    Solves A_cl'P + P A_cl + M = 0 for symmetric P.

    The n(n+1)/2 packed unknowns are found by one dense linear solve.

    Args:
        A_cl: Hurwitz matrix (n x n)
        M: Symmetric matrix (n x n)
        tol: Absolute Frobenius residual tolerance (default tol_lyap)

    Returns:
        Symmetric solution P
    """
    tol = NUMERIC["tol_lyap"] if tol is None else tol
    A_cl = as_matrix(A_cl, "A_cl")
    n = A_cl.shape[0]
    M = as_matrix(M, "M", rows=n, cols=n)
    if not is_hurwitz(A_cl):
        raise StabilityViolationError(
            f"Lyapunov equation needs a Hurwitz matrix, eigenvalues: {np.linalg.eigvals(A_cl)}"
        )
    M = symmetrize(M)
    G = lyapunov_operator_matrix(A_cl)
    packed = np.linalg.solve(G, -sym_pack(M))
    P = sym_unpack(packed, n)
    residual = float(np.linalg.norm(A_cl.T @ P + P @ A_cl + M, ord="fro"))
    if not np.isfinite(residual) or residual > tol:
        raise NumericFailureError(f"Lyapunov residual {residual:.3e} exceeds tolerance {tol:.1e}")
    return P


def gare_residual(dyn: SystemDynamics, P: np.ndarray, Q: np.ndarray, R: np.ndarray, gamma: float) -> float:
    """Frobenius norm of A'P + PA + Q - PBR^-1B'P + gamma^-2 PDD'P"""
    A, B, D = dyn.A, dyn.B, dyn.D
    res = (
        A.T @ P + P @ A + Q
        - P @ B @ np.linalg.solve(R, B.T @ P)
        + (P @ D @ D.T @ P) / gamma ** 2
    )
    return float(np.linalg.norm(res, ord="fro"))


def game_gains(dyn: SystemDynamics, R: np.ndarray, gamma: float, P: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """K = R^-1 B'P and L = gamma^-2 D'P"""
    K = np.linalg.solve(R, dyn.B.T @ P)
    L = dyn.D.T @ P / gamma ** 2
    return K, L


def _newton_gare(dyn: SystemDynamics, w: CostWeights, P0: np.ndarray, max_iters: int, tol: float) -> np.ndarray:
    """
    Newton iteration on the GARE with the disturbance term folded into the
    state weight: each step solves a Lyapunov equation in the closed loop
    A - BK + DL of the previous iterate.
    """
    P = P0
    for it in range(max_iters):
        K, L = game_gains(dyn, w.R, w.gamma, P)
        A_k = dyn.A - dyn.B @ K + dyn.D @ L
        if not is_hurwitz(A_k):
            raise StabilityViolationError(f"Newton iterate {it} lost closed-loop stability")
        M = w.Q + K.T @ w.R @ K - w.gamma ** 2 * L.T @ L
        P_next = solve_lyapunov(A_k, M, tol=max(NUMERIC["tol_lyap"], 1e-9 * np.linalg.norm(M)))
        step = float(np.linalg.norm(P_next - P, ord="fro"))
        P = P_next
        logger.debug(f"GARE Newton iteration {it}: step {step:.3e}")
        if step <= 1e-2 * tol:
            break
    return P


def _hamiltonian_gare(dyn: SystemDynamics, w: CostWeights) -> np.ndarray:
    """Stable invariant subspace solution of the GARE with an indefinite input weight"""
    B_aug = np.hstack((dyn.B, dyn.D))
    R_aug = linalg.block_diag(w.R, -w.gamma ** 2 * np.eye(dyn.z))
    return symmetrize(linalg.solve_continuous_are(dyn.A, B_aug, w.Q, R_aug))


def solve_gare(dyn: SystemDynamics, w: CostWeights, tol: float = None, max_iters: int = None) -> GameSolution:
    """
    Solves the game algebraic Riccati equation
        A'P + PA + Q - PBR^-1B'P + gamma^-2 PDD'P = 0
    for its stabilizing positive definite solution.

    (A, B) must be controllable; that is the caller's responsibility.

    Args:
        dyn: System dynamics
        w: Cost weights (Q, R, gamma)
        tol: GARE residual tolerance (default tol_gare)
        max_iters: Newton iteration budget

    Returns:
        GameSolution with K = R^-1 B'P and L = gamma^-2 D'P
    """
    tol = NUMERIC["tol_gare"] if tol is None else tol
    max_iters = NUMERIC["gare_max_iters"] if max_iters is None else max_iters
    if w.Q.shape != (dyn.n, dyn.n) or w.R.shape != (dyn.m, dyn.m):
        raise InvalidArgumentError(
            f"weights Q{w.Q.shape}, R{w.R.shape} do not match dynamics n={dyn.n}, m={dyn.m}"
        )

    P, method = None, "newton"
    try:
        P0 = symmetrize(linalg.solve_continuous_are(dyn.A, dyn.B, w.Q, w.R))
        P = _newton_gare(dyn, w, P0, max_iters, tol)
        if gare_residual(dyn, P, w.Q, w.R, w.gamma) > tol:
            raise NumericFailureError("Newton iteration stopped above the residual tolerance")
    except (np.linalg.LinAlgError, ValueError, StabilityViolationError, NumericFailureError) as e:
        logger.info(f"Newton GARE solve failed ({e}); falling back to the Hamiltonian method")
        method = "hamiltonian"
        try:
            P = _hamiltonian_gare(dyn, w)
        except (np.linalg.LinAlgError, ValueError) as e2:
            raise NoSolutionError(f"no stabilizing GARE solution: {e2}") from e2

    K, L = game_gains(dyn, w.R, w.gamma, P)
    if not np.all(np.isfinite(P)):
        raise NumericFailureError("GARE solution is not finite")
    if not is_hurwitz(dyn.A - dyn.B @ K + dyn.D @ L):
        raise NoSolutionError("GARE solution is not stabilizing")
    if np.min(np.linalg.eigvalsh(P)) <= 0.0:
        raise NumericFailureError("GARE solution is not positive definite")
    residual = gare_residual(dyn, P, w.Q, w.R, w.gamma)
    if residual > tol:
        raise NoSolutionError(f"GARE residual {residual:.3e} exceeds tolerance {tol:.1e}")
    logger.debug(f"GARE solved by {method}, residual {residual:.3e}")
    return GameSolution(P=P, K=K, L=L, residual=residual, method=method)
