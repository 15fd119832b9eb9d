"""
Expert and learner simulation with the windowed integrals consumed by the
data-driven IRL iteration.

Feedback -K x acts continuously inside each integration step; probing
noise e and disturbance d are held constant over a step (zero-order hold).
"""
import logging
from typing import Tuple

import numpy as np
from scipy.linalg import expm

from config.settings import get_numeric_config
from app.models.system_dynamics import SystemDynamics, as_matrix
from app.models.signal_spec import SignalSpec
from app.models.data_batch import DataBatch, required_windows
from app.utils.matops import hat_vec, hat_from_gram, vec_row, is_hurwitz
from app.utils.errors import (
    InvalidArgumentError,
    NumericFailureError,
    StabilityViolationError,
    DivergenceError,
)

logger = logging.getLogger(__name__)

QUADRATURES = ("trapezoid", "exact")


def step_rk4(dyn: SystemDynamics, x: np.ndarray, u: np.ndarray, d: np.ndarray, h: float) -> np.ndarray:
    """
    Classical 4th order Runge-Kutta step of dx/dt = Ax + Bu + Dd with u, d held.

    Args:
        dyn: System dynamics
        x: State (n,)
        u: Input held over the step (m,)
        d: Disturbance held over the step (z,)
        h: Step size (> 0)

    Returns:
        State after one step
    """
    if h <= 0.0:
        raise InvalidArgumentError(f"step size must be positive, got {h}")
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    d = np.asarray(d, dtype=float).ravel()
    if x.size != dyn.n or u.size != dyn.m or d.size != dyn.z:
        raise InvalidArgumentError(
            f"state/input/disturbance sizes ({x.size}, {u.size}, {d.size}) "
            f"do not match dynamics ({dyn.n}, {dyn.m}, {dyn.z})"
        )
    k1 = dyn.derivative(x, u, d)
    k2 = dyn.derivative(x + 0.5 * h * k1, u, d)
    k3 = dyn.derivative(x + 0.5 * h * k2, u, d)
    k4 = dyn.derivative(x + h * k3, u, d)
    x_next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_next)):
        raise NumericFailureError("RK4 step produced a non-finite state")
    return x_next


def gen_signal(spec: SignalSpec, t: float, dim: int = 1, index: int = 0) -> np.ndarray:
    """
    Evaluates an exogenous signal.

    Sinusoid sums depend on t only; random samples depend on (seed, index)
    only, so any sample can be regenerated without replaying the stream.

    Args:
        spec: Signal recipe
        t: Time (>= 0)
        dim: Number of channels
        index: Integration step index (random kind)

    Returns:
        Signal value (dim,)
    """
    if t < 0.0:
        raise InvalidArgumentError(f"signal time must be >= 0, got {t}")
    if spec.kind == "zero" or spec.amplitude == 0.0:
        return np.zeros(dim)
    if spec.kind == "uniform-random-scaled":
        rng = np.random.default_rng([spec.seed, index])
        return spec.amplitude * rng.random(dim)
    freqs = np.asarray(spec.frequencies)
    # channel c is phase shifted so channels stay linearly independent
    phases = np.outer(np.arange(dim), np.arange(1, freqs.size + 1)) * (np.pi / (2.0 * max(dim, 1)))
    return spec.amplitude * np.sin(freqs[None, :] * t + phases).sum(axis=1)


def _steps_per_window(T_window: float, h: float) -> int:
    if T_window <= 0.0 or h <= 0.0:
        raise InvalidArgumentError(f"T_window and h must be positive, got T={T_window}, h={h}")
    steps = int(round(T_window / h))
    if steps < 1 or abs(steps * h - T_window) > 1e-9 * T_window:
        raise InvalidArgumentError(f"T_window={T_window} is not an integer multiple of h={h}")
    return steps


def _exact_step(F: np.ndarray, transition: np.ndarray, z0: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact ZOH step of the augmented system dz/dt = F z.

    Returns the state at t + h and the Gram integral of z z' over the step,
    from the block matrix exponential of [[-F, z0 z0'], [0, F']].
    """
    size = F.shape[0]
    block = np.zeros((2 * size, 2 * size))
    block[:size, :size] = -F
    block[:size, size:] = np.outer(z0, z0)
    block[size:, size:] = F.T
    E = expm(block * h)
    gram = E[size:, size:].T @ E[:size, size:]
    return transition @ z0, 0.5 * (gram + gram.T)


def _collect(dyn: SystemDynamics, K: np.ndarray, noise: SignalSpec, dist: SignalSpec,
             T_window: float, windows: int, h: float, x0: np.ndarray, role: str,
             quadrature: str, blowup_bound: float) -> DataBatch:
    """
    Simulates dx/dt = (A - BK)x + Be + Dd and accumulates, per window, the
    Gram integral of the augmented vector z = [x; e; d]. Every batch
    integral is a linear function of that Gram matrix.
    """
    if quadrature not in QUADRATURES:
        raise InvalidArgumentError(f"quadrature must be one of {QUADRATURES}, got {quadrature!r}")
    n, m, zd = dyn.n, dyn.m, dyn.z
    K = as_matrix(K, "K", rows=m, cols=n)
    x = np.asarray(x0, dtype=float).ravel()
    if x.size != n:
        raise InvalidArgumentError(f"x0 must have length {n}, got {x.size}")
    steps = _steps_per_window(T_window, h)
    size = n + m + zd

    A_cl = dyn.closed_loop(K)
    closed = SystemDynamics(A_cl, dyn.B, dyn.D)
    F = np.zeros((size, size))
    F[:n, :n] = A_cl
    F[:n, n:n + m] = dyn.B
    F[:n, n + m:] = dyn.D
    transition = expm(F * h) if quadrature == "exact" else None

    t_start = np.empty(windows)
    starts = np.empty((windows, n))
    ends = np.empty((windows, n))
    grams = np.empty((windows, size, size))

    step_index = 0
    for j in range(windows):
        t0 = j * steps * h
        t_start[j] = t0
        starts[j] = x
        gram = np.zeros((size, size))
        for s in range(steps):
            t = t0 + s * h
            e = gen_signal(noise, t, m, step_index)
            d = gen_signal(dist, t, zd, step_index)
            za = np.concatenate((x, e, d))
            if quadrature == "exact":
                zb, step_gram = _exact_step(F, transition, za, h)
                x = zb[:n]
                gram += step_gram
            else:
                x = step_rk4(closed, x, e, d, h)
                zb = np.concatenate((x, e, d))
                gram += 0.5 * h * (np.outer(za, za) + np.outer(zb, zb))
            step_index += 1
            if np.linalg.norm(x) > blowup_bound:
                raise DivergenceError(
                    f"{role} state norm {np.linalg.norm(x):.3e} exceeded {blowup_bound:.1e} at t={t + h:.4f}"
                )
        ends[j] = x
        grams[j] = gram

    S_xx = grams[:, :n, :n]
    S_xe = grams[:, :n, n:n + m]
    S_xd = grams[:, :n, n + m:]
    # u = -Kx + e, so the integral of x u' is -S_xx K' + S_xe and u - e = -Kx
    S_xu = -S_xx @ K.T + S_xe
    S_ww = K @ S_xx @ K.T

    return DataBatch(
        role=role,
        n=n,
        m=m,
        z=zd,
        T_window=float(T_window),
        t_start=t_start,
        start_states=starts,
        end_states=ends,
        d_xx=np.array([hat_vec(b) - hat_vec(a) for a, b in zip(starts, ends)]),
        I_xx=np.array([hat_from_gram(g) for g in S_xx]),
        I_xu=np.array([vec_row(g) for g in S_xu]),
        I_xd=np.array([vec_row(g) for g in S_xd]) if zd else np.zeros((windows, 0)),
        I_xe=np.array([vec_row(g) for g in S_xe]) if role == "expert" else None,
        I_ww=np.array([hat_from_gram(g) for g in S_ww]),
    )


def collect_expert_batch(dyn: SystemDynamics, K_T: np.ndarray, noise: SignalSpec, dist: SignalSpec,
                         T_window: float, l: int, h: float, x0: np.ndarray,
                         quadrature: str = "trapezoid", blowup_bound: float = None) -> DataBatch:
    """
    Simulates the expert under u_T = -K_T x_T + e and records the windowed
    integrals of the policy-correction regression, including I_xe.

    Args:
        dyn: Expert dynamics
        K_T: Expert gain (m x n)
        noise: Probing noise e added to the expert input
        dist: Expert disturbance d_T
        T_window: Integral period T (integer multiple of h)
        l: Window count, at least n(n+1)/2 + nm + nz
        h: Integration step
        x0: Initial state
        quadrature: "trapezoid" on the RK4 grid or "exact" (matrix exponential)
        blowup_bound: State norm treated as divergence

    Returns:
        Expert DataBatch
    """
    blowup_bound = get_numeric_config()["blowup_bound"] if blowup_bound is None else blowup_bound
    minimum = required_windows("expert", dyn.n, dyn.m, dyn.z)
    if l < minimum:
        raise InvalidArgumentError(f"expert batch needs l >= {minimum} windows, got {l}")
    batch = _collect(dyn, K_T, noise, dist, T_window, l, h, x0, "expert", quadrature, blowup_bound)
    logger.info(f"Collected expert batch: {l} windows of T={T_window}, h={h}, quadrature={quadrature}")
    return batch


def collect_learner_batch(dyn: SystemDynamics, K_b: np.ndarray, dist: SignalSpec,
                          T_window: float, k: int, h: float, x0: np.ndarray,
                          quadrature: str = "trapezoid", blowup_bound: float = None) -> DataBatch:
    """
    Simulates the learner under the behaviour policy u = -K_b x and records
    the windowed integrals of the weight-reconstruction regression.

    Args:
        dyn: Learner dynamics
        K_b: Stabilizing behaviour gain (m x n)
        dist: Learner disturbance d (independent of the expert's)
        T_window: Integral period T
        k: Window count, at least n(n+1)/2
        h: Integration step
        x0: Initial state

    Returns:
        Learner DataBatch (I_xe absent)
    """
    blowup_bound = get_numeric_config()["blowup_bound"] if blowup_bound is None else blowup_bound
    if not is_hurwitz(dyn.closed_loop(K_b)):
        raise StabilityViolationError("behaviour gain K_b does not stabilize the learner")
    minimum = required_windows("learner", dyn.n, dyn.m, dyn.z)
    if k < minimum:
        raise InvalidArgumentError(f"learner batch needs k >= {minimum} windows, got {k}")
    batch = _collect(dyn, K_b, SignalSpec.zero(), dist, T_window, k, h, x0, "learner", quadrature, blowup_bound)
    logger.info(f"Collected learner batch: {k} windows of T={T_window}, h={h}, quadrature={quadrature}")
    return batch


def simulate_trajectory(dyn: SystemDynamics, K: np.ndarray, x0: np.ndarray, duration: float, h: float,
                        dist: SignalSpec = None, blowup_bound: float = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Closed-loop state trajectory under u = -K x on the RK4 grid.

    Returns:
        (times, states) with times[0] = 0 and states of shape (steps + 1, n)
    """
    blowup_bound = get_numeric_config()["blowup_bound"] if blowup_bound is None else blowup_bound
    dist = SignalSpec.zero() if dist is None else dist
    steps = int(round(duration / h))
    closed = SystemDynamics(dyn.closed_loop(K), dyn.B, dyn.D)
    zero_u = np.zeros(dyn.m)
    states = np.empty((steps + 1, dyn.n))
    states[0] = np.asarray(x0, dtype=float).ravel()
    for s in range(steps):
        d = gen_signal(dist, s * h, dyn.z, s)
        states[s + 1] = step_rk4(closed, states[s], zero_u, d, h)
        if np.linalg.norm(states[s + 1]) > blowup_bound:
            raise DivergenceError(f"trajectory state norm exceeded {blowup_bound:.1e} at t={(s + 1) * h:.4f}")
    return np.arange(steps + 1) * h, states
