from dataclasses import dataclass
from typing import Optional
import numpy as np

from app.utils.errors import InvalidArgumentError
from app.utils.matops import hat_vec, packed_size

ROLES = ("expert", "learner")


def required_windows(role: str, n: int, m: int, z: int) -> int:
    """Minimum window count for full column rank: l for the expert, k for the learner"""
    p = n * (n + 1) // 2
    return p + n * m + n * z if role == "expert" else p


@dataclass(frozen=True)
class DataBatch:
    """
    Time-windowed trajectory integrals of one agent.

    Row j of every array belongs to window j. Cross-integrals store the
    integral of x (x) w as row-major n x dim(w) blocks.

    Attributes:
        role: "expert" (probing noise recorded, I_xe present) or "learner"
        n, m, z: State, input and disturbance dimensions
        T_window: Integral period T
        t_start: Window start times (l,)
        start_states: x(t) per window (l, n)
        end_states: x(t + T) per window (l, n)
        d_xx: hat(x(t+T)) - hat(x(t)) (l, n(n+1)/2)
        I_xx: integral of hat(x) (l, n(n+1)/2)
        I_xu: integral of x (x) u (l, nm)
        I_xd: integral of x (x) d (l, nz)
        I_xe: integral of x (x) e (l, nm), expert batches only
        I_ww: integral of hat(u - e) (l, m(m+1)/2), the running input cost basis
    """
    role: str
    n: int
    m: int
    z: int
    T_window: float
    t_start: np.ndarray
    start_states: np.ndarray
    end_states: np.ndarray
    d_xx: np.ndarray
    I_xx: np.ndarray
    I_xu: np.ndarray
    I_xd: np.ndarray
    I_xe: Optional[np.ndarray]
    I_ww: np.ndarray

    def __post_init__(self):
        if self.role not in ROLES:
            raise InvalidArgumentError(f"batch role must be one of {ROLES}, got {self.role!r}")
        if self.T_window <= 0.0:
            raise InvalidArgumentError(f"T_window must be positive, got {self.T_window}")
        if self.role == "expert" and self.I_xe is None:
            raise InvalidArgumentError("expert batches must carry I_xe")
        n, m, z = self.n, self.m, self.z
        count = len(self.t_start)
        shapes = {
            "start_states": (self.start_states, n),
            "end_states": (self.end_states, n),
            "d_xx": (self.d_xx, packed_size(n)),
            "I_xx": (self.I_xx, packed_size(n)),
            "I_xu": (self.I_xu, n * m),
            "I_xd": (self.I_xd, n * z),
            "I_ww": (self.I_ww, packed_size(m)),
        }
        if self.I_xe is not None:
            shapes["I_xe"] = (self.I_xe, n * m)
        for name, (arr, cols) in shapes.items():
            if arr.shape != (count, cols):
                raise InvalidArgumentError(f"{name} must have shape ({count}, {cols}), got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise InvalidArgumentError(f"{name} contains non-finite values")
        minimum = required_windows(self.role, n, m, z)
        if count < minimum:
            raise InvalidArgumentError(f"{self.role} batch needs at least {minimum} windows, got {count}")
        expected = np.array([hat_vec(b) - hat_vec(a) for a, b in zip(self.start_states, self.end_states)])
        scale = max(1.0, float(np.max(np.abs(expected))))
        if np.max(np.abs(expected - self.d_xx)) > 1e-9 * scale:
            raise InvalidArgumentError("d_xx does not match the recorded window states")

    @property
    def window_count(self) -> int:
        return len(self.t_start)

