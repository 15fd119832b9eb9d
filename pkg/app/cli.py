"""
Command dispatch for the experiment runner.

Every command returns {"status": "success" | "failed" | "error", "message", "data"};
exit_code maps the status to 0, 2 and 1.
"""
import argparse
import logging
import os
from typing import Any, Dict, List, Optional

import numpy as np

from config.settings import get_app_config
from app.models.scenario_config import ScenarioConfig
from app.services.config_loader import load_config
from app.services.experiment import collect_batches, emit_plot_data, expert_gain, run_scenario
from app.services.irl_data_driven import check_rank
from app.utils.csv_io import write_batch
from app.utils.errors import IrlError, RunFailedError
from app.utils.matops import solve_gare

logger = logging.getLogger(__name__)

COMMANDS = ("gare", "collect", "alg1", "alg2", "verify", "report")
EXIT_CODES = {"success": 0, "failed": 2, "error": 1}
U64_MAX = 2 ** 64 - 1


def seed_arg(value: str) -> int:
    """argparse type for --seed: an integer in [0, 2^64)"""
    try:
        seed = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got '{value}'")
    if seed < 0 or seed > U64_MAX:
        raise argparse.ArgumentTypeError(f"seed must be in [0, {U64_MAX}], got {seed}")
    return seed


def build_parser() -> argparse.ArgumentParser:
    app_config = get_app_config()
    parser = argparse.ArgumentParser(
        description="Inverse reinforcement learning for expert-learner zero-sum games"
    )
    parser.add_argument("command", choices=COMMANDS, help="Pipeline step to run")
    parser.add_argument(
        "--config",
        default=os.path.join(app_config["scenario_dir"], "two_state_game.toml"),
        help="Scenario TOML file",
    )
    parser.add_argument("--out", default=None, help="Output directory (overrides run.output_dir)")
    parser.add_argument("--seed", type=seed_arg, default=None, help="Base seed for every signal (u64)")
    parser.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    return parser


def _result(status: str, message: str, data: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    return {"status": status, "message": message, "data": data or {}}


def _fmt(M: np.ndarray) -> str:
    return np.array2string(np.asarray(M), precision=4, suppress_small=True)


def cmd_gare(cfg: ScenarioConfig) -> Dict[str, Any]:
    if cfg.expert_weights is None:
        return _result("error", "scenario gives K_T directly; gare needs expert.Q, expert.R and expert.gamma")
    sol = solve_gare(cfg.dynamics, cfg.expert_weights)
    message = f"P =\n{_fmt(sol.P)}\nK = {_fmt(sol.K)}\nL = {_fmt(sol.L)}\nresidual = {sol.residual:.3e} ({sol.method})"
    return _result("success", message, {"P": sol.P.tolist(), "K": sol.K.tolist(), "L": sol.L.tolist(),
                                        "residual": sol.residual})


def cmd_collect(cfg: ScenarioConfig) -> Dict[str, Any]:
    K_T, _ = expert_gain(cfg)
    expert, learner = collect_batches(cfg, K_T)
    os.makedirs(cfg.output_dir, exist_ok=True)
    paths = {
        "expert": os.path.join(cfg.output_dir, f"{cfg.name}_expert_batch.csv"),
        "learner": os.path.join(cfg.output_dir, f"{cfg.name}_learner_batch.csv"),
    }
    write_batch(expert, paths["expert"])
    write_batch(learner, paths["learner"])
    rank = check_rank(expert, learner)
    status = "success" if rank.passed else "failed"
    return _result(status, f"batches written to {cfg.output_dir}; {rank.describe()}",
                   {"paths": paths, "rank_ok": rank.passed})


def cmd_run(cfg: ScenarioConfig, show_report: bool = False, plots: bool = False) -> Dict[str, Any]:
    artifacts = run_scenario(cfg)
    if plots:
        emit_plot_data(artifacts)
    s = artifacts.summary
    lines = [
        f"scenario {s.scenario} ({s.algorithm}): converged={s.converged}, iterations={s.iterations}, "
        f"linear solves={s.linear_solves}",
        f"K* = {_fmt(artifacts.traces[s.algorithm].K_star)}, K_T = {_fmt(artifacts.K_T)}",
        f"||K* - K_T|| = {s.gain_error:.4e}, Te = {s.imitation_error:.4e}",
    ]
    if show_report:
        lines += ["", artifacts.report.to_text()]
    data = s.to_row()
    data["paths"] = {"traces": artifacts.trace_paths, "trajectory": artifacts.trajectory_path,
                     "report": artifacts.report_path, "report_text": artifacts.report_text_path,
                     "summary": artifacts.summary_path,
                     "plots": artifacts.plot_paths or {}}
    return _result("success" if s.ok else "failed", "\n".join(lines), data)


def dispatch(args: argparse.Namespace) -> Dict[str, Any]:
    """Loads the scenario and runs one command, turning toolkit errors into an error result"""
    try:
        cfg = load_config(args.config).with_overrides(seed=args.seed, output_dir=args.out)
        if args.command == "gare":
            return cmd_gare(cfg)
        if args.command == "collect":
            return cmd_collect(cfg)
        if args.command in ("alg1", "alg2"):
            return cmd_run(cfg.with_overrides(algorithm=args.command))
        if args.command == "verify":
            return cmd_run(cfg, show_report=True)
        return cmd_run(cfg, show_report=True, plots=True)
    except RunFailedError as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        data = e.failure.to_row()
        data["paths"] = {"failure": e.failure.path, "traces": e.failure.trace_paths}
        return _result("error", str(e), data)
    except IrlError as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        return _result("error", str(e))


def exit_code(result: Dict[str, Any]) -> int:
    return EXIT_CODES.get(result["status"], 1)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.quiet:
        logging.getLogger().setLevel(logging.WARNING)
    result = dispatch(args)
    print(result["message"])
    return exit_code(result)
