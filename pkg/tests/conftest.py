import numpy as np
import pytest

from app.models.cost_weights import CostWeights
from app.models.irl_config import IrlConfig
from app.models.signal_spec import SignalSpec
from app.models.system_dynamics import SystemDynamics
from app.services.simulator import collect_expert_batch, collect_learner_batch
from app.utils.matops import solve_gare

REF_K_T = np.array([[1.9869, 3.5779]])
REF_L_T = np.array([[0.4162, 0.1472]])
REF_P_T = np.array([[3.7459, 1.3246], [1.3246, 2.3853]])
REF_K_B = np.array([[1.2129, 2.2812]])


@pytest.fixture(scope="session")
def plant_dyn():
    return SystemDynamics(
        A=[[-1.0, 2.0], [2.2, 1.7]],
        B=[[0.0], [3.0]],
        D=[[1.0], [0.0]],
    )


@pytest.fixture(scope="session")
def expert_weights():
    return CostWeights(Q=np.diag([8.0, 12.0]), R=[[2.0]], gamma=3.0)


@pytest.fixture(scope="session")
def expert_solution(plant_dyn, expert_weights):
    return solve_gare(plant_dyn, expert_weights)


@pytest.fixture()
def learner_cfg():
    return IrlConfig(R=[[1.0]], gamma=40.0, Q0=np.diag([1.0, 0.5]), max_iters=1000,
                     tol_converge=1e-6, gain_tol=0.01)


@pytest.fixture(scope="session")
def scalar_dyn():
    return SystemDynamics(A=[[0.0]], B=[[1.0]], D=[[0.0]])


@pytest.fixture()
def scalar_cfg():
    return IrlConfig(R=[[1.0]], gamma=1.0, Q0=[[1.0]], max_iters=2000, tol_converge=1e-12)


@pytest.fixture(scope="session")
def exact_batches(plant_dyn, expert_solution):
    """Closed-form integrals on the two-state plant with probing noise and disturbance"""
    noise = SignalSpec.probing(amplitude=0.5)
    expert = collect_expert_batch(
        plant_dyn, expert_solution.K, noise, SignalSpec.uniform(0.003, seed=1), T_window=0.008, l=60,
        h=0.001, x0=[1.0, -1.0], quadrature="exact",
    )
    learner = collect_learner_batch(
        plant_dyn, REF_K_B, SignalSpec.uniform(0.003, seed=2), T_window=0.008, k=40, h=0.001,
        x0=[1.0, -1.0], quadrature="exact",
    )
    return expert, learner


def random_game(rng: np.random.Generator):
    """
    Random controllable 2x2 plant with one input and one disturbance, random
    SPD expert weights, and a stabilizing behaviour gain.
    """
    for _ in range(100):
        A = rng.normal(size=(2, 2))
        B = rng.normal(size=(2, 1))
        if np.linalg.matrix_rank(np.hstack((B, A @ B))) < 2 or abs(np.linalg.det(np.hstack((B, A @ B)))) < 0.2:
            continue
        D = 0.3 * rng.normal(size=(2, 1))
        M = rng.normal(size=(2, 2))
        Q_T = M @ M.T + np.eye(2)
        R_T = np.array([[rng.uniform(0.5, 2.0)]])
        gamma_T = rng.uniform(4.0, 6.0)
        dyn = SystemDynamics(A, B, D)
        try:
            target = solve_gare(dyn, CostWeights(Q_T, R_T, gamma_T))
            behaviour = solve_gare(dyn, CostWeights(np.eye(2), R_T, 100.0))
        except Exception:
            continue
        return dyn, CostWeights(Q_T, R_T, gamma_T), target, behaviour.K
    raise RuntimeError("no admissible random game found")
