"""
Scenario file loading.

Scenario files are TOML with dotted keys, e.g.

    name = "two_state_game"
    dynamics.A = [[-1.0, 2.0], [2.2, 1.7]]
    expert.Q = [[8.0, 0.0], [0.0, 12.0]]
    learner.gamma = 40.0
    data.T_window = 0.008

See scenarios/README.md for every key and its default.
"""
import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import Any, Callable, Dict, Optional

import numpy as np

from app.models.cost_weights import CostWeights
from app.models.irl_config import IrlConfig
from app.models.scenario_config import ScenarioConfig
from app.models.signal_spec import SignalSpec
from app.models.system_dynamics import SystemDynamics, as_matrix
from app.utils.errors import ConfigError, IrlError

logger = logging.getLogger(__name__)

SCHEMA = {
    "": {"name"},
    "dynamics": {"A", "B", "D"},
    "expert": {"Q", "R", "gamma", "K"},
    "learner": {"Q0", "R", "gamma", "K_b"},
    "data": {"T_window", "l", "k", "h", "x0", "learner_x0", "quadrature"},
    "noise": {"kind", "amplitude", "frequencies"},
    "expert_disturbance": {"kind", "amplitude", "frequencies"},
    "learner_disturbance": {"kind", "amplitude", "frequencies"},
    "run": {"algorithm", "max_iters", "tol_converge", "gain_tol", "seed", "replay_samples",
            "saddle_samples", "verify_tol", "output_dir", "blowup_bound", "cond_max", "eps_noise"},
}

# seed offsets of the derived signal seeds
SIGNAL_SEED_OFFSETS = {"noise": 0, "expert_disturbance": 1, "learner_disturbance": 2}


def _line_of(text: str, dotted: str) -> Optional[int]:
    """1-based line of a dotted key, written either inline or under its table header"""
    if not text:
        return None
    section, _, key = dotted.rpartition(".")
    lines = text.splitlines()
    inline = re.compile(rf"^\s*{re.escape(dotted)}\s*=")
    for number, line in enumerate(lines, start=1):
        if inline.match(line):
            return number
    if section:
        header = re.compile(rf"^\s*\[\s*{re.escape(section)}\s*\]")
        bare = re.compile(rf"^\s*{re.escape(key)}\s*=")
        inside = False
        for number, line in enumerate(lines, start=1):
            if line.lstrip().startswith("["):
                inside = bool(header.match(line))
            elif inside and bare.match(line):
                return number
    return None


class _Reader:
    """Typed access to the parsed tables with field-named errors"""

    def __init__(self, data: Dict[str, Any], text: str):
        self.data = data
        self.text = text

    def error(self, message: str, dotted: str) -> ConfigError:
        return ConfigError(message, field=dotted, line=_line_of(self.text, dotted))

    def raw(self, dotted: str, default: Any = None) -> Any:
        section, _, key = dotted.rpartition(".")
        table = self.data.get(section, {}) if section else self.data
        return table.get(key, default)

    def has(self, dotted: str) -> bool:
        return self.raw(dotted) is not None

    def build(self, dotted: str, fn: Callable[[], Any]) -> Any:
        try:
            return fn()
        except ConfigError:
            raise
        except (IrlError, ValueError, TypeError) as e:
            raise self.error(str(e), dotted) from e

    def matrix(self, dotted: str, rows: Optional[int] = None, cols: Optional[int] = None,
               default: Any = None) -> Optional[np.ndarray]:
        value = self.raw(dotted, default)
        if value is None:
            return None
        return self.build(dotted, lambda: as_matrix(value, dotted, rows=rows, cols=cols))

    def vector(self, dotted: str, size: int, default: Any = None) -> Optional[np.ndarray]:
        value = self.raw(dotted, default)
        if value is None:
            return None
        vec = self.build(dotted, lambda: np.asarray(value, dtype=float).ravel())
        if vec.size != size or not np.all(np.isfinite(vec)):
            raise self.error(f"{dotted} must be {size} finite numbers", dotted)
        return vec

    def number(self, dotted: str, default: Any = None, kind: type = float, positive: bool = False,
               required: bool = False) -> Any:
        value = self.raw(dotted, default)
        if value is None:
            if required:
                raise self.error(f"missing required key {dotted}", dotted)
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(f"{dotted} must be a number, got {value!r}", dotted)
        if kind is int and float(value) != int(value):
            raise self.error(f"{dotted} must be an integer, got {value!r}", dotted)
        value = kind(value)
        if positive and not value > 0:
            raise self.error(f"{dotted} must be positive, got {value}", dotted)
        return value

    def signal(self, section: str, seed: int) -> SignalSpec:
        if section not in self.data:
            return SignalSpec.zero()
        table = self.data[section]
        return self.build(section, lambda: SignalSpec(
            kind=table.get("kind", "zero"),
            amplitude=table.get("amplitude", 0.0),
            frequencies=tuple(table.get("frequencies", ())),
            seed=seed,
        ))


def _check_keys(reader: _Reader):
    for key, value in reader.data.items():
        if isinstance(value, dict):
            if key not in SCHEMA or key == "":
                raise reader.error(f"unknown section {key!r}", key)
            for sub in value:
                if sub not in SCHEMA[key]:
                    raise reader.error(f"unknown key {key}.{sub}", f"{key}.{sub}")
        elif key not in SCHEMA[""]:
            raise reader.error(f"unknown key {key!r}", key)


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    """
    Parses and validates scenario TOML text.

    Args:
        text: TOML source
        source: Name used in messages

    Returns:
        Validated ScenarioConfig with defaults filled
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        line = getattr(e, "lineno", None)
        if line is None:
            found = re.search(r"line (\d+)", str(e))
            line = int(found.group(1)) if found else None
        raise ConfigError(f"{source}: {e}", line=line) from e

    r = _Reader(data, text)
    _check_keys(r)

    A = r.matrix("dynamics.A")
    if A is None:
        raise r.error("missing required key dynamics.A", "dynamics.A")
    n = A.shape[0]
    B = r.matrix("dynamics.B", rows=n)
    if B is None:
        raise r.error("missing required key dynamics.B", "dynamics.B")
    D = r.matrix("dynamics.D", rows=n, default=[[0.0]] * n)
    dyn = r.build("dynamics", lambda: SystemDynamics(A, B, D))
    m = dyn.m

    expert_weights, K_T = None, None
    has_weights = any(r.has(f"expert.{key}") for key in ("Q", "R", "gamma"))
    if has_weights and r.has("expert.K"):
        raise r.error("give either expert.Q/R/gamma or expert.K, not both", "expert.K")
    if has_weights:
        Q_T = r.matrix("expert.Q", rows=n, cols=n)
        R_T = r.matrix("expert.R", rows=m, cols=m)
        gamma_T = r.number("expert.gamma", required=True)
        if Q_T is None or R_T is None:
            raise r.error("expert weights need Q, R and gamma", "expert.Q" if Q_T is None else "expert.R")
        for key, M in (("expert.Q", Q_T), ("expert.R", R_T)):
            if not _spd_ok(M):
                raise r.error(f"{key} must be symmetric positive definite", key)
        expert_weights = r.build("expert.gamma", lambda: CostWeights(Q_T, R_T, gamma_T))
    elif r.has("expert.K"):
        K_T = r.matrix("expert.K", rows=m, cols=n)
    else:
        raise r.error("either the expert weights (expert.Q, expert.R, expert.gamma) or expert.K is required",
                      "expert")

    T_window = r.number("data.T_window", required=True, positive=True)
    seed = r.number("run.seed", default=0, kind=int)
    Q0 = r.matrix("learner.Q0", rows=n, cols=n)
    R = r.matrix("learner.R", rows=m, cols=m)
    if Q0 is None or R is None:
        raise r.error("learner.Q0 and learner.R are required", "learner.Q0" if Q0 is None else "learner.R")
    gamma = r.number("learner.gamma", required=True)
    if not _spd_ok(Q0):
        raise r.error("learner.Q0 must be symmetric positive definite", "learner.Q0")
    if not _spd_ok(R):
        raise r.error("learner.R must be symmetric positive definite", "learner.R")
    learner = r.build("learner", lambda: IrlConfig(
        R=R, gamma=gamma, Q0=Q0,
        max_iters=r.number("run.max_iters", default=500, kind=int, positive=True),
        tol_converge=r.number("run.tol_converge", default=1e-8, positive=True),
        gain_tol=r.number("run.gain_tol", positive=True),
        blowup_bound=r.number("run.blowup_bound", default=1e6, positive=True),
        cond_max=r.number("run.cond_max", default=1e10, positive=True),
        eps_noise=r.number("run.eps_noise", default=1e-6, positive=True),
    ))
    K_b = r.matrix("learner.K_b", rows=m, cols=n)
    if K_b is None:
        raise r.error("missing required key learner.K_b", "learner.K_b")

    x0 = r.vector("data.x0", n, default=[1.0, -1.0] if n == 2 else [1.0] * n)
    cfg = r.build("data", lambda: ScenarioConfig(
        name=str(r.raw("name", "scenario")),
        dynamics=dyn,
        learner=learner,
        K_b=K_b,
        T_window=T_window,
        l=r.number("data.l", required=True, kind=int, positive=True),
        k=r.number("data.k", required=True, kind=int, positive=True),
        h=r.number("data.h", default=T_window / 8.0, positive=True),
        expert_weights=expert_weights,
        K_T=K_T,
        x0=x0,
        learner_x0=r.vector("data.learner_x0", n),
        noise=r.signal("noise", seed + SIGNAL_SEED_OFFSETS["noise"]),
        expert_disturbance=r.signal("expert_disturbance", seed + SIGNAL_SEED_OFFSETS["expert_disturbance"]),
        learner_disturbance=r.signal("learner_disturbance", seed + SIGNAL_SEED_OFFSETS["learner_disturbance"]),
        quadrature=str(r.raw("data.quadrature", "trapezoid")),
        algorithm=str(r.raw("run.algorithm", "alg2")),
        seed=seed,
        replay_samples=r.number("run.replay_samples", default=250, kind=int, positive=True),
        saddle_samples=r.number("run.saddle_samples", default=1000, kind=int, positive=True),
        verify_tol=r.number("run.verify_tol", default=1e-4, positive=True),
        output_dir=str(r.raw("run.output_dir", "runs")),
    ))
    if cfg.quadrature not in ("trapezoid", "exact"):
        raise r.error(f"data.quadrature must be 'trapezoid' or 'exact', got {cfg.quadrature!r}", "data.quadrature")
    return cfg


def _spd_ok(M: np.ndarray) -> bool:
    if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, atol=1e-9):
        return False
    return bool(np.min(np.linalg.eigvalsh(0.5 * (M + M.T))) > 0.0)


def load_config(path: str) -> ScenarioConfig:
    """
    Loads a scenario file.

    Args:
        path: Path to a TOML scenario

    Returns:
        Validated ScenarioConfig
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read scenario file {path}: {e}") from e
    cfg = parse_config(text, source=path)
    logger.info(f"Loaded scenario '{cfg.name}' from {path}")
    return cfg


def _fmt(value: float) -> str:
    return repr(float(value))


def _fmt_matrix(M: np.ndarray) -> str:
    return "[" + ", ".join("[" + ", ".join(_fmt(v) for v in row) + "]" for row in np.atleast_2d(M)) + "]"


def _fmt_vector(v: np.ndarray) -> str:
    return "[" + ", ".join(_fmt(x) for x in np.ravel(v)) + "]"


def _signal_lines(section: str, spec: SignalSpec) -> list:
    if spec.kind == "zero":
        return []
    lines = [f'{section}.kind = "{spec.kind}"', f"{section}.amplitude = {_fmt(spec.amplitude)}"]
    if spec.frequencies:
        lines.append(f"{section}.frequencies = {_fmt_vector(spec.frequencies)}")
    return lines


def dump_config(cfg: ScenarioConfig) -> str:
    """Re-emits a scenario as TOML that parse_config reads back to the same semantic fields"""
    lines = [
        f'name = "{cfg.name}"',
        f"dynamics.A = {_fmt_matrix(cfg.dynamics.A)}",
        f"dynamics.B = {_fmt_matrix(cfg.dynamics.B)}",
        f"dynamics.D = {_fmt_matrix(cfg.dynamics.D)}",
    ]
    if cfg.expert_weights is not None:
        w = cfg.expert_weights
        lines += [f"expert.Q = {_fmt_matrix(w.Q)}", f"expert.R = {_fmt_matrix(w.R)}", f"expert.gamma = {_fmt(w.gamma)}"]
    else:
        lines.append(f"expert.K = {_fmt_matrix(cfg.K_T)}")
    lc = cfg.learner
    lines += [
        f"learner.Q0 = {_fmt_matrix(lc.Q0)}",
        f"learner.R = {_fmt_matrix(lc.R)}",
        f"learner.gamma = {_fmt(lc.gamma)}",
        f"learner.K_b = {_fmt_matrix(cfg.K_b)}",
        f"data.T_window = {_fmt(cfg.T_window)}",
        f"data.l = {cfg.l}",
        f"data.k = {cfg.k}",
        f"data.h = {_fmt(cfg.h)}",
        f"data.x0 = {_fmt_vector(cfg.x0)}",
        f"data.learner_x0 = {_fmt_vector(cfg.learner_x0)}",
        f'data.quadrature = "{cfg.quadrature}"',
    ]
    lines += _signal_lines("noise", cfg.noise)
    lines += _signal_lines("expert_disturbance", cfg.expert_disturbance)
    lines += _signal_lines("learner_disturbance", cfg.learner_disturbance)
    lines += [
        f'run.algorithm = "{cfg.algorithm}"',
        f"run.max_iters = {lc.max_iters}",
        f"run.tol_converge = {_fmt(lc.tol_converge)}",
        f"run.seed = {cfg.seed}",
        f"run.replay_samples = {cfg.replay_samples}",
        f"run.saddle_samples = {cfg.saddle_samples}",
        f"run.verify_tol = {_fmt(cfg.verify_tol)}",
        f'run.output_dir = "{cfg.output_dir}"',
        f"run.blowup_bound = {_fmt(lc.blowup_bound)}",
        f"run.cond_max = {_fmt(lc.cond_max)}",
        f"run.eps_noise = {_fmt(lc.eps_noise)}",
    ]
    if lc.gain_tol is not None:
        lines.append(f"run.gain_tol = {_fmt(lc.gain_tol)}")
    return "\n".join(lines) + "\n"
