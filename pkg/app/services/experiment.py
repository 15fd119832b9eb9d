"""
End-to-end scenario pipeline: expert gain, data collection, IRL runs,
trajectory replay, verification and artifact emission.
"""
import logging
import os
import time
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd

from app.models.data_batch import DataBatch
from app.models.game_solution import GameSolution
from app.models.iteration_trace import IterationTrace
from app.models.run_artifacts import RunArtifacts, RunFailure, RunSummary
from app.models.scenario_config import ScenarioConfig
from app.models.verification_report import ExpertSolution
from app.services.game_verify import HAMILTONIAN_TOL, imitation_error, verification_suite
from app.services.irl_data_driven import run_algorithm2
from app.services.irl_model_based import run_algorithm1
from app.services.simulator import collect_expert_batch, collect_learner_batch, simulate_trajectory
from app.utils.csv_io import FLOAT_FORMAT, write_batch, write_report, write_report_text, write_trace
from app.utils.errors import IrlError, RunFailedError, StabilityViolationError
from app.utils.matops import is_hurwitz, solve_gare

logger = logging.getLogger(__name__)


def expert_gain(cfg: ScenarioConfig) -> Tuple[np.ndarray, Optional[ExpertSolution]]:
    """K_T from the expert GARE when the weights are known, otherwise the configured gain"""
    if cfg.expert_weights is None:
        K_T = cfg.K_T
        expert = None
    else:
        w = cfg.expert_weights
        sol = solve_gare(cfg.dynamics, w)
        K_T = sol.K
        expert = ExpertSolution(Q=w.Q, R=w.R, gamma=w.gamma, P=sol.P, K=sol.K)
        logger.info(f"Expert gain from GARE: K_T = {np.array2string(K_T, precision=4)}")
    if not is_hurwitz(cfg.dynamics.closed_loop(K_T)):
        raise StabilityViolationError("expert gain K_T does not stabilize the dynamics")
    return K_T, expert


def collect_batches(cfg: ScenarioConfig, K_T: np.ndarray) -> Tuple[DataBatch, DataBatch]:
    expert = collect_expert_batch(
        cfg.dynamics, K_T, cfg.noise, cfg.expert_disturbance, cfg.T_window, cfg.l, cfg.h, cfg.x0,
        quadrature=cfg.quadrature, blowup_bound=cfg.learner.blowup_bound,
    )
    learner = collect_learner_batch(
        cfg.dynamics, cfg.K_b, cfg.learner_disturbance, cfg.T_window, cfg.k, cfg.h, cfg.learner_x0,
        quadrature=cfg.quadrature, blowup_bound=cfg.learner.blowup_bound,
    )
    return expert, learner


def replay(cfg: ScenarioConfig, K_star: np.ndarray, K_T: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Undisturbed closed-loop runs of learner (K*) and expert (K_T) from x0,
    sampled every T for replay_samples samples starting at t = 0.
    """
    stride = int(round(cfg.T_window / cfg.h))
    duration = (cfg.replay_samples - 1) * cfg.T_window
    times, learner = simulate_trajectory(cfg.dynamics, K_star, cfg.x0, duration, cfg.h)
    _, expert = simulate_trajectory(cfg.dynamics, K_T, cfg.x0, duration, cfg.h)
    return times[::stride], learner[::stride], expert[::stride]


def _trajectory_frame(times: np.ndarray, learner: np.ndarray, expert: np.ndarray) -> pd.DataFrame:
    df = pd.DataFrame({"t": times})
    for c in range(learner.shape[1]):
        df[f"x_{c + 1}"] = learner[:, c]
    for c in range(expert.shape[1]):
        df[f"x_T_{c + 1}"] = expert[:, c]
    return df


def _write_frame(df: pd.DataFrame, path: str):
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _write_trace_file(cfg: ScenarioConfig, trace: IterationTrace, trace_paths: Dict[str, str]):
    path = os.path.join(cfg.output_dir, f"{cfg.name}_{trace.algorithm}_trace.csv")
    write_trace(trace, path)
    trace_paths[trace.algorithm] = path


def record_failure(cfg: ScenarioConfig, stage: str, error: IrlError, trace_paths: Dict[str, str]) -> RunFailure:
    """
    Keeps what a failed run produced: the partial trace carried by the error
    is written next to the completed ones, and a one-row failure CSV names the
    stage, the error kind and the last iteration reached.
    """
    partial = getattr(error, "trace", None)
    iteration = gain_error = None
    if isinstance(partial, IterationTrace) and partial.records:
        _write_trace_file(cfg, partial, trace_paths)
        iteration = partial.final.i
        gain_error = partial.final.gain_error
    failure = RunFailure(
        scenario=cfg.name, stage=stage, kind=type(error).__name__, message=str(error), iteration=iteration,
        gain_error=gain_error, path=os.path.join(cfg.output_dir, f"{cfg.name}_failure.csv"),
        trace_paths=dict(trace_paths),
    )
    _write_frame(pd.DataFrame([failure.to_row()]), failure.path)
    logger.error(f"Scenario '{cfg.name}' failed during {stage} ({failure.kind}): {error}")
    return failure


def run_scenario(cfg: ScenarioConfig, write_batches: bool = False) -> RunArtifacts:
    """
    Runs a scenario end to end and writes its artifacts to cfg.output_dir.

    Args:
        cfg: Validated scenario
        write_batches: Also write the collected batches as CSV

    Returns:
        RunArtifacts with file paths, traces, report and summary

    Raises:
        RunFailedError: A stage raised; files written before it stay on disk
            together with the partial trace and a failure CSV
    """
    started = time.perf_counter()
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    logger.info(f"Running scenario '{cfg.name}' ({cfg.algorithm}) into {out}")

    traces: Dict[str, IterationTrace] = {}
    trace_paths: Dict[str, str] = {}
    batch_paths: Dict[str, str] = {}
    stage = "expert_gain"
    try:
        K_T, expert = expert_gain(cfg)

        if cfg.algorithm in ("alg1", "both"):
            stage = "alg1"
            traces["alg1"] = run_algorithm1(cfg.dynamics, K_T, cfg.learner)
            _write_trace_file(cfg, traces["alg1"], trace_paths)
        if cfg.algorithm in ("alg2", "both"):
            stage = "collect"
            expert_batch, learner_batch = collect_batches(cfg, K_T)
            if write_batches:
                batch_paths = {
                    "expert": os.path.join(out, f"{cfg.name}_expert_batch.csv"),
                    "learner": os.path.join(out, f"{cfg.name}_learner_batch.csv"),
                }
                write_batch(expert_batch, batch_paths["expert"])
                write_batch(learner_batch, batch_paths["learner"])
            stage = "alg2"
            traces["alg2"] = run_algorithm2(expert_batch, learner_batch, cfg.learner, dyn=cfg.dynamics,
                                            K_target=K_T)
            _write_trace_file(cfg, traces["alg2"], trace_paths)

        primary = "alg2" if "alg2" in traces else "alg1"
        trace = traces[primary]
        final = trace.final
        sol = GameSolution(P=final.P, K=final.K, L=final.L)

        stage = "replay"
        times, learner_states, expert_states = replay(cfg, final.K, K_T)
        te = imitation_error(learner_states, expert_states, cfg.T_window, cfg.replay_samples)
        trajectory_path = os.path.join(out, f"{cfg.name}_trajectory.csv")
        _write_frame(_trajectory_frame(times, learner_states, expert_states), trajectory_path)

        stage = "verify"
        # a regressed (P*, Q*) meets the learner GARE only to the regression residual
        tol_zero = HAMILTONIAN_TOL if primary == "alg1" else cfg.verify_tol
        report = verification_suite(
            cfg.dynamics, K_T, sol, final.Q_next, cfg.learner, expert=expert, target_weights=cfg.expert_weights,
            samples=cfg.saddle_samples, seed=cfg.seed, tol=cfg.verify_tol, tol_zero=tol_zero,
        )
        report.add("imitation_error", te, 0.05, anchor="trajectory imitation index Te")
        report_path = os.path.join(out, f"{cfg.name}_verification.csv")
        write_report(report, report_path)
        report_text_path = os.path.join(out, f"{cfg.name}_verification.txt")
        write_report_text(report, report_text_path)
    except IrlError as e:
        failure = record_failure(cfg, stage, e, trace_paths)
        raise RunFailedError(f"scenario '{cfg.name}' failed during {stage}: {e}", failure) from e

    summary = RunSummary(
        scenario=cfg.name,
        algorithm=primary,
        converged=trace.converged,
        iterations=trace.iterations_used,
        linear_solves=trace.linear_solves,
        gain_error=float(final.gain_error),
        imitation_error=te,
        checks_passed=report.passed,
        wall_clock=time.perf_counter() - started,
    )
    summary_path = os.path.join(out, f"{cfg.name}_summary.csv")
    _write_frame(pd.DataFrame([summary.to_row()]), summary_path)

    logger.info(f"Scenario '{cfg.name}' finished in {summary.wall_clock:.2f}s: converged={summary.converged}, "
                f"iterations={summary.iterations}, ||K* - K_T||={summary.gain_error:.4e}, Te={te:.4e}, "
                f"checks passed={summary.checks_passed}")
    for warning in trace.warnings:
        logger.warning(f"{primary}: {warning}")

    return RunArtifacts(
        output_dir=out,
        trace_paths=trace_paths,
        trajectory_path=trajectory_path,
        report_path=report_path,
        report_text_path=report_text_path,
        summary_path=summary_path,
        summary=summary,
        traces=traces,
        report=report,
        K_T=K_T,
        times=times,
        learner_states=learner_states,
        expert_states=expert_states,
        batch_paths=batch_paths,
    )


def emit_plot_data(artifacts: RunArtifacts) -> Dict[str, str]:
    """
    Writes plot-ready CSVs: one convergence series per algorithm
    (algorithm, i, gain_error, q_step, p_step) and the trajectory overlay
    (t, x_1.., x_T_1..).

    Returns:
        Written paths keyed by "convergence_<algorithm>" and "trajectory_overlay"
    """
    name = artifacts.summary.scenario
    paths = {}
    for algorithm, trace in artifacts.traces.items():
        df = pd.DataFrame({
            "algorithm": algorithm,
            "i": [r.i for r in trace.records],
            "gain_error": [np.nan if r.gain_error is None else r.gain_error for r in trace.records],
            "q_step": [r.q_step for r in trace.records],
            "p_step": [np.nan if r.p_step is None else r.p_step for r in trace.records],
        })
        path = os.path.join(artifacts.output_dir, f"{name}_convergence_{algorithm}.csv")
        _write_frame(df, path)
        paths[f"convergence_{algorithm}"] = path

    path = os.path.join(artifacts.output_dir, f"{name}_trajectory_overlay.csv")
    _write_frame(_trajectory_frame(artifacts.times, artifacts.learner_states, artifacts.expert_states), path)
    paths["trajectory_overlay"] = path
    artifacts.plot_paths = paths
    logger.info(f"Plot data written: {', '.join(paths.values())}")
    return paths
