from dataclasses import dataclass, field
from typing import Dict, Optional
import numpy as np

from app.models.iteration_trace import IterationTrace
from app.models.verification_report import VerificationReport


@dataclass()
class RunSummary:
    """
    Headline numbers of one scenario run.

    Attributes:
        scenario: Scenario name
        algorithm: Algorithm whose result was replayed and verified
        converged: Stopping rule fired before max_iters
        iterations: Iterations used
        linear_solves: Linear/least-squares solves performed
        gain_error: ||K* - K_T||
        imitation_error: Te over the replay samples
        checks_passed: Every verification check passed
        wall_clock: Seconds spent in run_scenario (not written to disk)
    """
    scenario: str
    algorithm: str
    converged: bool
    iterations: int
    linear_solves: int
    gain_error: float
    imitation_error: float
    checks_passed: bool
    wall_clock: float = 0.0

    @property
    def ok(self) -> bool:
        return self.converged and self.checks_passed

    def to_row(self) -> Dict[str, object]:
        return {
            "scenario": self.scenario,
            "algorithm": self.algorithm,
            "converged": self.converged,
            "iterations": self.iterations,
            "linear_solves": self.linear_solves,
            "gain_error": self.gain_error,
            "imitation_error": self.imitation_error,
            "checks_passed": self.checks_passed,
        }


@dataclass()
class RunArtifacts:
    """
    Files and in-memory results of one scenario run.

    Attributes:
        output_dir: Directory holding every file below
        trace_paths: Iteration trace CSV per algorithm
        trajectory_path: Replay CSV (t, x_*, x_T_*)
        report_path: Verification report CSV
        report_text_path: Verification report as a plain-text table
        summary_path: One-row summary CSV
        summary: Headline numbers
        traces: Iteration traces per algorithm
        report: Verification report
        K_T: Expert gain
        times: Replay sample times
        learner_states: Learner replay states under K*
        expert_states: Expert replay states under K_T
        batch_paths: Collected batch CSVs, when written
        plot_paths: Plot-data CSVs, once emitted
    """
    output_dir: str
    trace_paths: Dict[str, str]
    trajectory_path: str
    report_path: str
    report_text_path: str
    summary_path: str
    summary: RunSummary
    traces: Dict[str, IterationTrace]
    report: VerificationReport
    K_T: np.ndarray
    times: np.ndarray
    learner_states: np.ndarray
    expert_states: np.ndarray
    batch_paths: Dict[str, str] = field(default_factory=dict)
    plot_paths: Optional[Dict[str, str]] = None


@dataclass()
class RunFailure:
    """
    Structured record of a scenario run that stopped on an error.

    Attributes:
        scenario: Scenario name
        stage: Pipeline stage that raised (expert_gain, alg1, collect, alg2, replay, verify)
        kind: Exception class name
        message: Exception message
        iteration: Last iteration of the partial trace carried by the error, if any
        gain_error: ||K - K_T|| at that iteration, if known
        path: Failure CSV written to the output directory
        trace_paths: Trace CSVs on disk, partial ones included
    """
    scenario: str
    stage: str
    kind: str
    message: str
    iteration: Optional[int] = None
    gain_error: Optional[float] = None
    path: str = ""
    trace_paths: Dict[str, str] = field(default_factory=dict)

    def to_row(self) -> Dict[str, object]:
        return {
            "scenario": self.scenario,
            "status": "error",
            "stage": self.stage,
            "kind": self.kind,
            "message": self.message,
            "iteration": self.iteration,
            "gain_error": self.gain_error,
        }
