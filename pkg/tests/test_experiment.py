import os
from dataclasses import replace

import numpy as np
import pytest

from app.cli import U64_MAX, build_parser, dispatch, main
from app.models.signal_spec import SignalSpec
from app.services.config_loader import dump_config, load_config, parse_config
from app.services.experiment import collect_batches, emit_plot_data, expert_gain, replay, run_scenario
from app.services.irl_data_driven import run_algorithm2
from app.services.simulator import collect_expert_batch, collect_learner_batch
from app.utils.csv_io import read_batch, read_frame, write_batch
from app.utils.errors import ConfigError, DivergenceError, RankDeficientError, RunFailedError
from tests.conftest import REF_K_B

SCENARIO_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "scenarios")
TWO_STATE = os.path.join(SCENARIO_DIR, "two_state_game.toml")
SCALAR = os.path.join(SCENARIO_DIR, "scalar_smoke.toml")

SCALAR_TEXT = """\
name = "scalar"
dynamics.A = [[0.0]]
dynamics.B = [[1.0]]
expert.K = [[2.0]]
learner.Q0 = [[1.0]]
learner.R = [[1.0]]
learner.gamma = 1.0
learner.K_b = [[1.0]]
data.T_window = 0.008
data.l = 10
data.k = 10
data.x0 = [1.0]
run.algorithm = "alg1"
run.max_iters = 2000
run.tol_converge = 1e-10
run.gain_tol = 0.01
run.saddle_samples = 100
run.verify_tol = 1e-3
"""


def _scalar(tmp_path, text: str = SCALAR_TEXT, folder: str = "run"):
    return parse_config(text).with_overrides(output_dir=str(tmp_path / folder))


def _read(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


class TestLoadConfig:
    def test_two_state_scenario(self):
        cfg = load_config(TWO_STATE)
        assert cfg.name == "two_state_game"
        np.testing.assert_array_equal(cfg.dynamics.A, [[-1.0, 2.0], [2.2, 1.7]])
        np.testing.assert_array_equal(cfg.expert_weights.Q, np.diag([8.0, 12.0]))
        assert cfg.expert_weights.gamma == 3.0
        assert cfg.K_T is None
        assert cfg.learner.gamma == 40.0
        assert cfg.learner.gain_tol == 0.02
        assert cfg.learner.max_iters == 350
        assert (cfg.l, cfg.k, cfg.h) == (510, 100, 0.001)
        assert cfg.noise.frequencies == (1.0, 3.7, 7.3, 12.1, 19.4)
        assert (cfg.noise.seed, cfg.expert_disturbance.seed, cfg.learner_disturbance.seed) == (0, 1, 2)
        np.testing.assert_array_equal(cfg.K_b, REF_K_B)

    def test_scalar_defaults(self):
        cfg = load_config(SCALAR)
        assert cfg.h == pytest.approx(0.001)
        assert cfg.noise == SignalSpec.zero()
        np.testing.assert_array_equal(cfg.learner_x0, cfg.x0)
        np.testing.assert_array_equal(cfg.K_T, [[2.0]])
        assert cfg.algorithm == "alg1"

    def test_disturbance_matrix_defaults_to_zero(self):
        cfg = parse_config(SCALAR_TEXT)
        np.testing.assert_array_equal(cfg.dynamics.D, [[0.0]])
        assert cfg.quadrature == "trapezoid"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "absent.toml"))


class TestConfigErrors:
    def test_missing_expert(self):
        text = SCALAR_TEXT.replace("expert.K = [[2.0]]\n", "")
        with pytest.raises(ConfigError) as excinfo:
            parse_config(text)
        assert excinfo.value.field == "expert"

    def test_expert_weight_not_positive_definite(self):
        text = SCALAR_TEXT.replace("expert.K = [[2.0]]\n",
                                   "expert.Q = [[1.0]]\nexpert.R = [[-2.0]]\nexpert.gamma = 3.0\n")
        with pytest.raises(ConfigError) as excinfo:
            parse_config(text)
        assert excinfo.value.field == "expert.R"
        assert excinfo.value.line == 5

    def test_learner_weight_not_positive_definite(self):
        text = SCALAR_TEXT.replace("learner.Q0 = [[1.0]]", "learner.Q0 = [[0.0]]")
        with pytest.raises(ConfigError) as excinfo:
            parse_config(text)
        assert excinfo.value.field == "learner.Q0"
        assert excinfo.value.line == 5

    def test_both_expert_forms(self):
        text = SCALAR_TEXT + "expert.Q = [[1.0]]\nexpert.R = [[1.0]]\nexpert.gamma = 2.0\n"
        with pytest.raises(ConfigError) as excinfo:
            parse_config(text)
        assert excinfo.value.field == "expert.K"

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as excinfo:
            parse_config(SCALAR_TEXT + "learner.Qzero = [[1.0]]\n")
        assert excinfo.value.field == "learner.Qzero"

    def test_syntax_error(self):
        with pytest.raises(ConfigError) as excinfo:
            parse_config(SCALAR_TEXT + "dynamics.D = [[0.0\n")
        assert excinfo.value.line is not None

    def test_unknown_quadrature(self):
        with pytest.raises(ConfigError) as excinfo:
            parse_config(SCALAR_TEXT.replace("run.algorithm", "data.quadrature = \"simpson\"\nrun.algorithm"))
        assert excinfo.value.field == "data.quadrature"

    def test_unknown_algorithm(self):
        with pytest.raises(ConfigError):
            parse_config(SCALAR_TEXT.replace('run.algorithm = "alg1"', 'run.algorithm = "alg3"'))


class TestConfigRoundTrip:
    def test_dump_then_parse(self):
        cfg = load_config(TWO_STATE)
        again = parse_config(dump_config(cfg))
        np.testing.assert_array_equal(again.dynamics.A, cfg.dynamics.A)
        np.testing.assert_array_equal(again.dynamics.D, cfg.dynamics.D)
        np.testing.assert_array_equal(again.expert_weights.Q, cfg.expert_weights.Q)
        np.testing.assert_array_equal(again.learner.Q0, cfg.learner.Q0)
        np.testing.assert_array_equal(again.K_b, cfg.K_b)
        assert again.noise == cfg.noise
        assert again.expert_disturbance == cfg.expert_disturbance
        assert again.learner_disturbance == cfg.learner_disturbance
        assert (again.T_window, again.l, again.k, again.h) == (cfg.T_window, cfg.l, cfg.k, cfg.h)
        assert again.learner.gain_tol == cfg.learner.gain_tol
        assert again.output_dir == cfg.output_dir

    def test_overrides_reseed_every_signal(self):
        cfg = load_config(TWO_STATE).with_overrides(seed=5, output_dir="elsewhere", algorithm="both")
        assert (cfg.noise.seed, cfg.expert_disturbance.seed, cfg.learner_disturbance.seed) == (5, 6, 7)
        assert cfg.seed == 5
        assert cfg.output_dir == "elsewhere"
        assert cfg.algorithm == "both"


class TestBatchFiles:
    def test_expert_batch_round_trip(self, tmp_path, plant_dyn, expert_solution):
        batch = collect_expert_batch(plant_dyn, expert_solution.K, SignalSpec.probing(0.5),
                                     SignalSpec.uniform(0.003, seed=1), 0.008, 8, 0.001, [1.0, -1.0])
        path = str(tmp_path / "expert.csv")
        write_batch(batch, path)
        back = read_batch(path)
        assert back.role == "expert"
        np.testing.assert_array_equal(back.I_xx, batch.I_xx)
        np.testing.assert_array_equal(back.I_xe, batch.I_xe)
        np.testing.assert_array_equal(back.end_states, batch.end_states)

    def test_learner_batch_has_no_noise_columns(self, tmp_path, plant_dyn):
        batch = collect_learner_batch(plant_dyn, REF_K_B, SignalSpec.uniform(0.003, seed=2), 0.008, 4, 0.001,
                                      [1.0, -1.0])
        path = str(tmp_path / "learner.csv")
        write_batch(batch, path)
        back = read_batch(path)
        assert back.I_xe is None
        assert read_frame(path)["I_xe_0"].isna().all()
        np.testing.assert_array_equal(back.I_xd, batch.I_xd)


class TestRunScenario:
    def test_scalar_run_follows_hand_recursion(self, tmp_path):
        artifacts = run_scenario(_scalar(tmp_path))
        trace = artifacts.traces["alg1"]
        Q = 1.0
        for record in trace.records[:50]:
            P = (Q + 4.0) / 4.0
            assert record.P[0, 0] == pytest.approx(P, abs=1e-9)
            assert record.Q_next[0, 0] == pytest.approx(P * P, abs=1e-9)
            Q = P * P
        assert trace.converged
        assert artifacts.summary.gain_error <= 0.01
        assert artifacts.summary.ok, artifacts.report.to_text()

    def test_artifacts_on_disk(self, tmp_path):
        artifacts = run_scenario(_scalar(tmp_path))
        summary = read_frame(artifacts.summary_path)
        assert list(summary.columns) == ["scenario", "algorithm", "converged", "iterations", "linear_solves",
                                         "gain_error", "imitation_error", "checks_passed"]
        assert summary["gain_error"].iloc[0] == artifacts.summary.gain_error
        assert summary["iterations"].iloc[0] == artifacts.summary.iterations
        trace = read_frame(artifacts.trace_paths["alg1"])
        assert len(trace) == artifacts.summary.iterations
        assert {"Q_0", "P_0", "K_0", "L_0", "Q_next_0", "gain_error", "monotone_ok"} <= set(trace.columns)
        trajectory = read_frame(artifacts.trajectory_path)
        assert list(trajectory.columns) == ["t", "x_1", "x_T_1"]
        assert len(trajectory) == 250
        assert trajectory["t"].iloc[1] == pytest.approx(0.008)
        report = read_frame(artifacts.report_path)
        assert "imitation_error" in set(report["name"])

    def test_artifacts_read_back_exactly(self, tmp_path):
        artifacts = run_scenario(_scalar(tmp_path))
        row = read_frame(artifacts.summary_path).iloc[0]
        assert row["gain_error"] == artifacts.summary.gain_error
        assert row["imitation_error"] == artifacts.summary.imitation_error
        trace = read_frame(artifacts.trace_paths["alg1"])
        records = artifacts.traces["alg1"].records
        np.testing.assert_array_equal(trace["gain_error"].to_numpy(), [r.gain_error for r in records])
        np.testing.assert_array_equal(trace["P_0"].to_numpy(), [r.P[0, 0] for r in records])
        np.testing.assert_array_equal(trace["Q_next_0"].to_numpy(), [r.Q_next[0, 0] for r in records])
        report = read_frame(artifacts.report_path).set_index("name")
        for check in artifacts.report.checks:
            assert report.loc[check.name, "residual"] == check.residual

    def test_text_report_on_disk(self, tmp_path):
        artifacts = run_scenario(_scalar(tmp_path))
        assert artifacts.report_text_path.endswith("scalar_verification.txt")
        with open(artifacts.report_text_path, encoding="utf-8") as fh:
            text = fh.read()
        assert text == artifacts.report.to_text() + "\n"
        assert "hamiltonian_zero" in text
        assert f"{len(artifacts.report.checks)}/{len(artifacts.report.checks)} checks passed" in text


class TestRunFailures:
    def test_divergence_keeps_partial_trace(self, tmp_path):
        cfg = _scalar(tmp_path, SCALAR_TEXT + "run.blowup_bound = 1.5\n")
        with pytest.raises(RunFailedError) as excinfo:
            run_scenario(cfg)
        assert isinstance(excinfo.value.__cause__, DivergenceError)
        failure = excinfo.value.failure
        assert (failure.stage, failure.kind) == ("alg1", "DivergenceError")
        assert failure.iteration is not None and failure.iteration > 0
        assert failure.gain_error > 0.01
        row = read_frame(failure.path).iloc[0]
        assert (row["status"], row["stage"], row["kind"]) == ("error", "alg1", "DivergenceError")
        assert row["iteration"] == failure.iteration
        trace = read_frame(failure.trace_paths["alg1"])
        assert len(trace) == failure.iteration + 1
        assert not os.path.exists(os.path.join(cfg.output_dir, "scalar_summary.csv"))

    def test_unexcited_data_keeps_model_based_trace(self, tmp_path):
        cfg = _scalar(tmp_path, SCALAR_TEXT.replace('run.algorithm = "alg1"', 'run.algorithm = "both"'))
        with pytest.raises(RunFailedError) as excinfo:
            run_scenario(cfg)
        assert isinstance(excinfo.value.__cause__, RankDeficientError)
        failure = excinfo.value.failure
        assert (failure.stage, failure.kind) == ("alg2", "RankDeficientError")
        assert failure.iteration is None
        assert set(failure.trace_paths) == {"alg1"}
        assert len(read_frame(failure.trace_paths["alg1"])) > 1
        assert os.path.exists(failure.path)

    def test_cli_reports_failure_row(self, tmp_path):
        path = tmp_path / "diverging.toml"
        path.write_text(SCALAR_TEXT + "run.blowup_bound = 1.5\n", encoding="utf-8")
        args = build_parser().parse_args(["alg1", "--config", str(path), "--out", str(tmp_path / "out")])
        result = dispatch(args)
        assert result["status"] == "error"
        assert result["data"]["stage"] == "alg1"
        assert result["data"]["kind"] == "DivergenceError"
        assert os.path.exists(result["data"]["paths"]["failure"])
        assert main(["alg1", "--config", str(path), "--out", str(tmp_path / "again"), "--quiet"]) == 1

    def test_runs_are_reproducible(self, tmp_path):
        first = run_scenario(_scalar(tmp_path, folder="a"))
        second = run_scenario(_scalar(tmp_path, folder="b"))
        for a, b in ((first.summary_path, second.summary_path), (first.report_path, second.report_path),
                     (first.trajectory_path, second.trajectory_path),
                     (first.trace_paths["alg1"], second.trace_paths["alg1"])):
            assert _read(a) == _read(b)

    def test_replay_samples_every_window(self, tmp_path):
        cfg = _scalar(tmp_path)
        times, learner, expert = replay(cfg, np.array([[2.0]]), np.array([[2.0]]))
        assert times.shape == (250,)
        assert times[0] == 0.0
        np.testing.assert_array_equal(learner, expert)
        assert expert[1, 0] == pytest.approx(np.exp(-2.0 * 0.008), rel=1e-9)

    def test_plot_data(self, tmp_path):
        artifacts = run_scenario(_scalar(tmp_path))
        paths = emit_plot_data(artifacts)
        convergence = read_frame(paths["convergence_alg1"])
        assert list(convergence.columns) == ["algorithm", "i", "gain_error", "q_step", "p_step"]
        assert len(convergence) == artifacts.summary.iterations
        assert convergence["gain_error"].is_monotonic_decreasing
        overlay = read_frame(paths["trajectory_overlay"])
        assert len(overlay) == 250

    def test_already_converged_gives_single_row(self, tmp_path):
        cfg = _scalar(tmp_path, SCALAR_TEXT.replace("expert.K = [[2.0]]", "expert.K = [[1.0]]"))
        artifacts = run_scenario(cfg)
        paths = emit_plot_data(artifacts)
        assert artifacts.summary.iterations == 1
        assert len(read_frame(paths["convergence_alg1"])) == 1


class TestCli:
    def test_parser_defaults(self):
        args = build_parser().parse_args(["gare"])
        assert args.config.endswith("two_state_game.toml")
        assert args.seed is None

    def test_gare(self, capsys):
        assert main(["gare", "--config", TWO_STATE]) == 0
        assert "K =" in capsys.readouterr().out

    def test_gare_needs_weights(self):
        assert main(["gare", "--config", SCALAR]) == 1

    def test_alg1(self, tmp_path):
        assert main(["alg1", "--config", SCALAR, "--out", str(tmp_path), "--quiet"]) == 0
        assert os.path.exists(tmp_path / "scalar_smoke_alg1_trace.csv")
        assert os.path.exists(tmp_path / "scalar_smoke_summary.csv")

    def test_report_writes_plot_data(self, tmp_path):
        args = build_parser().parse_args(["report", "--config", SCALAR, "--out", str(tmp_path)])
        result = dispatch(args)
        assert result["status"] == "success"
        assert os.path.exists(result["data"]["paths"]["plots"]["convergence_alg1"])

    def test_missing_config_is_an_error(self, tmp_path):
        assert main(["alg1", "--config", str(tmp_path / "nope.toml")]) == 1

    def test_collect_runs_rank_check(self, tmp_path):
        args = build_parser().parse_args(["collect", "--config", TWO_STATE, "--out", str(tmp_path)])
        result = dispatch(args)
        assert result["status"] == "success"
        assert result["data"]["rank_ok"]
        assert os.path.exists(result["data"]["paths"]["expert"])

    def test_seed_accepts_full_u64_range(self):
        assert build_parser().parse_args(["gare", "--seed", "0"]).seed == 0
        assert build_parser().parse_args(["gare", "--seed", str(U64_MAX)]).seed == U64_MAX

    @pytest.mark.parametrize("seed", ["-1", str(2 ** 64), "1.5", "abc"])
    def test_seed_outside_u64_is_a_usage_error(self, seed, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["gare", "--seed", seed])
        assert excinfo.value.code == 2
        assert "seed" in capsys.readouterr().err


@pytest.mark.slow
class TestTwoStateGame:
    def test_data_driven_run(self, tmp_path):
        cfg = load_config(TWO_STATE).with_overrides(output_dir=str(tmp_path))
        artifacts = run_scenario(cfg)
        summary = artifacts.summary
        assert summary.algorithm == "alg2"
        assert summary.converged
        assert summary.gain_error <= 0.02
        assert summary.iterations <= 200
        assert summary.linear_solves == 2 * summary.iterations
        assert summary.imitation_error <= 0.05
        assert artifacts.report.get("weight_distance").residual > 0.1
        assert artifacts.report.get("consistency_residual").residual <= 1e-3

    def test_iterates_stay_bounded_past_the_stop(self):
        cfg = load_config(TWO_STATE)
        K_T, _ = expert_gain(cfg)
        expert, learner = collect_batches(cfg, K_T)
        stopped = run_algorithm2(expert, learner, cfg.learner, dyn=cfg.dynamics, K_target=K_T)
        assert stopped.converged
        assert stopped.iterations_used <= 200
        assert stopped.final.gain_error <= 0.02
        used = stopped.iterations_used
        longer = run_algorithm2(expert, learner, replace(cfg.learner, gain_tol=None, max_iters=used + 10),
                                dyn=cfg.dynamics, K_target=K_T)
        assert longer.iterations_used == used + 10
        np.testing.assert_array_equal(longer.records[used - 1].Q_next, stopped.final.Q_next)
        stop_norm = np.linalg.norm(stopped.final.Q_next)
        for record in longer.records[used:]:
            assert np.isfinite(record.Q_next).all()
            assert np.linalg.norm(record.Q_next) <= 2.0 * stop_norm
            assert record.gain_error <= 0.05
