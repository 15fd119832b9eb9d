from dataclasses import dataclass, field, replace
from typing import Optional
import numpy as np

from app.models.system_dynamics import SystemDynamics
from app.models.cost_weights import CostWeights
from app.models.irl_config import IrlConfig
from app.models.signal_spec import SignalSpec
from app.utils.errors import ConfigError

ALGORITHMS = ("alg1", "alg2", "both")


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Everything needed to reproduce one expert-learner experiment.

    Attributes:
        name: Scenario name, used for output file names
        dynamics: Shared expert and learner dynamics
        expert_weights: Expert cost (Q_T, R_T, gamma_T); K_T is then solved from the GARE
        K_T: Explicit expert gain, when the expert cost is not given
        learner: Learner settings (R, gamma, Q0, iteration budget, tolerances)
        K_b: Stabilizing behaviour gain of the learner
        T_window: Integral period T
        l: Expert window count
        k: Learner window count
        h: Integration step (defaults to T/8)
        x0: Expert initial state, also the replay start state
        learner_x0: Learner initial state for data collection
        noise: Probing noise added to the expert input
        expert_disturbance: Disturbance acting on the expert
        learner_disturbance: Disturbance acting on the learner
        quadrature: "trapezoid" or "exact"
        algorithm: "alg1", "alg2" or "both"
        seed: Base seed; signal seeds are derived from it
        replay_samples: Number a of trajectory samples spaced T apart
        saddle_samples: Sample count of the Nash saddle check
        verify_tol: Residual tolerance of the verification suite
        output_dir: Directory receiving the run artifacts
    """
    name: str
    dynamics: SystemDynamics
    learner: IrlConfig
    K_b: np.ndarray
    T_window: float
    l: int
    k: int
    h: float
    expert_weights: Optional[CostWeights] = None
    K_T: Optional[np.ndarray] = None
    x0: np.ndarray = field(default_factory=lambda: np.array([1.0, -1.0]))
    learner_x0: Optional[np.ndarray] = None
    noise: SignalSpec = field(default_factory=SignalSpec.zero)
    expert_disturbance: SignalSpec = field(default_factory=SignalSpec.zero)
    learner_disturbance: SignalSpec = field(default_factory=SignalSpec.zero)
    quadrature: str = "trapezoid"
    algorithm: str = "alg2"
    seed: int = 0
    replay_samples: int = 250
    saddle_samples: int = 1000
    verify_tol: float = 1e-4
    output_dir: str = "runs"

    def __post_init__(self):
        if (self.expert_weights is None) == (self.K_T is None):
            raise ConfigError("exactly one of the expert weights or K_T must be given", field="expert")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}", field="run.algorithm")
        if self.learner_x0 is None:
            object.__setattr__(self, "learner_x0", self.x0)

    def with_overrides(self, seed: Optional[int] = None, output_dir: Optional[str] = None,
                       algorithm: Optional[str] = None) -> "ScenarioConfig":
        """Copy with CLI overrides applied; a new seed reseeds every signal"""
        cfg = self
        if seed is not None:
            cfg = replace(
                cfg,
                seed=seed,
                noise=cfg.noise.with_seed(seed),
                expert_disturbance=cfg.expert_disturbance.with_seed(seed + 1),
                learner_disturbance=cfg.learner_disturbance.with_seed(seed + 2),
            )
        if output_dir is not None:
            cfg = replace(cfg, output_dir=output_dir)
        if algorithm is not None:
            cfg = replace(cfg, algorithm=algorithm)
        return cfg
