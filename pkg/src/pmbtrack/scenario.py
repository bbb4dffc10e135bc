"""Benchmark scenario: nearly-constant-velocity targets that meet mid-run.

State vector is [px, vx, py, vy]. Four targets are placed in close proximity
near the region centre at the mid step and their trajectories are sampled
forward and backward in time from there; one target dies at the mid step.
All randomness comes from numpy Generators seeded explicitly, so scenarios
and measurement sets are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError
from .filtering import SensorModel
from .gaussian import LinearGaussianModel

__all__ = [
    "REGION_MIN",
    "REGION_MAX",
    "REGION_AREA",
    "TargetTruth",
    "ScenarioTruth",
    "make_cv_model",
    "generate_scenario",
    "simulate_measurements",
    "serialize_scenario",
]

REGION_MIN = 0.0
REGION_MAX = 300.0
REGION_AREA = (REGION_MAX - REGION_MIN) ** 2

_HORIZON = 101
_MID_STEP = 50
_N_TARGETS = 4
_MID_BOX_HALF = 5.0  # targets start within a 10 x 10 box around the centre
_MID_SPEED_MAX = 2.0  # per-axis speed bound at the mid step
_MAX_RESAMPLES = 500


def make_cv_model(sampling_time: float = 1.0, accel_noise: float = 0.01) -> LinearGaussianModel:
    """Nearly-constant-velocity model with position-only measurements."""
    t = sampling_time
    f_block = np.array([[1.0, t], [0.0, 1.0]])
    q_block = accel_noise * np.array([[t**3 / 3.0, t**2 / 2.0], [t**2 / 2.0, t]])
    h_block = np.array([[1.0, 0.0]])
    eye2 = np.eye(2)
    return LinearGaussianModel(
        transition=np.kron(eye2, f_block),
        process_noise=np.kron(eye2, q_block),
        obs=np.kron(eye2, h_block),
        obs_noise=np.eye(2),
    )


@dataclass(frozen=True, eq=False)
class TargetTruth:
    """One target: alive from birth_step to death_step with one state per step."""

    birth_step: int
    death_step: int
    states: np.ndarray  # (death_step - birth_step + 1, 4)

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        object.__setattr__(self, "states", states)
        if states.shape != (self.death_step - self.birth_step + 1, 4):
            raise ContractViolationError(
                f"target alive steps {self.birth_step}..{self.death_step} "
                f"but has {states.shape[0]} states"
            )

    def alive_at(self, step: int) -> bool:
        return self.birth_step <= step <= self.death_step

    def state_at(self, step: int) -> np.ndarray:
        return self.states[step - self.birth_step]


@dataclass(frozen=True, eq=False)
class ScenarioTruth:
    horizon: int
    targets: tuple[TargetTruth, ...]

    def alive_states(self, step: int) -> list[np.ndarray]:
        return [t.state_at(step) for t in self.targets if t.alive_at(step)]


def _sample_trajectory(rng, model: LinearGaussianModel, horizon: int, mid_step: int):
    """States for steps 1..horizon by forward/backward sampling from the mid step."""
    f = model.transition
    f_inv = np.linalg.inv(f)
    q_chol = np.linalg.cholesky(model.process_noise)
    mid = np.array(
        [
            150.0 + rng.uniform(-_MID_BOX_HALF, _MID_BOX_HALF),
            rng.uniform(-_MID_SPEED_MAX, _MID_SPEED_MAX),
            150.0 + rng.uniform(-_MID_BOX_HALF, _MID_BOX_HALF),
            rng.uniform(-_MID_SPEED_MAX, _MID_SPEED_MAX),
        ]
    )
    states = np.zeros((horizon, 4))
    states[mid_step - 1] = mid
    for k in range(mid_step, horizon):
        noise = q_chol @ rng.standard_normal(4)
        states[k] = f @ states[k - 1] + noise
    for k in range(mid_step - 2, -1, -1):
        noise = q_chol @ rng.standard_normal(4)
        states[k] = f_inv @ (states[k + 1] - noise)
    return states


def _inside_region(states: np.ndarray) -> bool:
    pos = states[:, [0, 2]]
    return bool(np.all(pos >= REGION_MIN) and np.all(pos <= REGION_MAX))


def generate_scenario(seed: int) -> ScenarioTruth:
    """Four-target, 101-step ground truth; target 0 dies at the mid step.

    Deterministic in the seed. Trajectories leaving the surveillance region
    are resampled with an incremented sub-seed (bounded retries).
    """
    model = make_cv_model()
    targets = []
    for idx in range(_N_TARGETS):
        death = _MID_STEP if idx == 0 else _HORIZON
        for attempt in range(_MAX_RESAMPLES):
            rng = np.random.default_rng([seed, idx, attempt])
            states = _sample_trajectory(rng, model, _HORIZON, _MID_STEP)[:death]
            if _inside_region(states):
                break
        else:
            raise ContractViolationError(
                f"could not draw an in-region trajectory for target {idx} (seed {seed})"
            )
        targets.append(TargetTruth(birth_step=1, death_step=death, states=states))
    return ScenarioTruth(horizon=_HORIZON, targets=tuple(targets))


def simulate_measurements(
    truth: ScenarioTruth, sensor: SensorModel, seed: int
) -> list[list[np.ndarray]]:
    """Per-step measurement sets: gated-free detections plus uniform clutter.

    Each alive target is detected with the sensor's detection probability and
    measured through its observation model; clutter counts are Poisson with
    the sensor's mean rate, positions uniform over the surveillance region.
    Deterministic in the seed.
    """
    rng = np.random.default_rng(seed)
    h = sensor.obs
    r_chol = np.linalg.cholesky(sensor.obs_noise)
    n_z = h.shape[0]
    steps: list[list[np.ndarray]] = []
    for step in range(1, truth.horizon + 1):
        measurements: list[np.ndarray] = []
        for state in truth.alive_states(step):
            if rng.random() < sensor.detection_prob:
                measurements.append(h @ state + r_chol @ rng.standard_normal(n_z))
        n_clutter = rng.poisson(sensor.clutter_rate)
        for _ in range(n_clutter):
            measurements.append(rng.uniform(REGION_MIN, REGION_MAX, size=n_z))
        steps.append(measurements)
    return steps


def serialize_scenario(truth: ScenarioTruth) -> str:
    """CSV form: one row per (target, step) with the full state."""
    lines = ["target,birth_step,death_step,step,px,vx,py,vy"]
    for idx, target in enumerate(truth.targets):
        for step in range(target.birth_step, target.death_step + 1):
            x = target.state_at(step)
            lines.append(
                f"{idx},{target.birth_step},{target.death_step},{step},"
                + ",".join(f"{v:.17g}" for v in x)
            )
    return "\n".join(lines) + "\n"
