"""
Plant and sensor fleet: random system generation, ground-truth evolution
and stochastic measurement generation.
"""

from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from ..config import GenerationConfig
from ..entities import ProcessModel, SensorModel
from ..errors import ConfigurationError
from ..logger import get_logger
from ..utils import as_vector, psd_sqrt

_logger = get_logger("linmodel")


class Sample(NamedTuple):
    """The single most recent measurement a sensor holds."""
    time: int
    value: np.ndarray


@dataclass(eq=False)
class GroundTruth:
    """True trajectory x_0..x_k plus the latest sample each sensor holds."""
    trajectory: List[np.ndarray] = field(default_factory=list)
    latest: Dict[int, Sample] = field(default_factory=dict)

    @property
    def time(self) -> int:
        return len(self.trajectory) - 1

    @property
    def state(self) -> np.ndarray:
        return self.trajectory[-1]

    def record(self, sensor_id: int, sample: Optional[Sample]) -> None:
        if sample is None:
            return
        previous = self.latest.get(sensor_id)
        if previous is not None and sample.time < previous.time:
            raise ConfigurationError(
                f"Sensor {sensor_id}: sample time {sample.time} precedes held sample {previous.time}")
        if sample.time > self.time:
            raise ConfigurationError(f"Sensor {sensor_id}: sample from the future ({sample.time} > {self.time})")
        self.latest[sensor_id] = sample

    def held_sample(self, sensor_id: int) -> Optional[Sample]:
        return self.latest.get(sensor_id)

    def held_age(self, sensor_id: int) -> Optional[int]:
        sample = self.latest.get(sensor_id)
        return None if sample is None else self.time - sample.time


def _rescale_dynamics(A: np.ndarray, mode: str, target: float) -> np.ndarray:
    if mode == "none":
        return A
    if mode == "spectral_radius":
        scale = float(np.max(np.abs(np.linalg.eigvals(A))))
    else:
        scale = float(np.linalg.norm(A, 2))
    if scale == 0.0:
        return A
    return A * (target / scale)


def _draw_distance(rng: np.random.Generator, config: GenerationConfig) -> float:
    d_min, d_max = config.d_range
    if config.deployment == "annulus":
        return float(np.sqrt(rng.uniform(d_min ** 2, d_max ** 2)))
    return float(rng.uniform(d_min, d_max))


def generate_system(seed: int, n_states: Optional[int] = None, n_sensors: Optional[int] = None,
                    config: Optional[GenerationConfig] = None) -> Tuple[ProcessModel, List[SensorModel]]:
    """
    Randomly generate an LTI process and a heterogeneous sensor fleet.

    Entries are drawn as a_ij ~ U(a_range), c_ij ~ U(c_range),
    Q = q q^T + eps I with q_ij ~ U(q_range), R_i = r r^T + eps I with
    r_ij ~ U(r_range), m_i uniform over {1..N}, p_i ~ U(p_range) and d_i from
    the deployment mode.

    Args:
        seed: RNG seed; the result is a deterministic function of it
        n_states: State dimension N (overrides config.n_states)
        n_sensors: Number of sensors M (overrides config.n_sensors)
        config: Generation ranges; defaults to the standard setup

    Returns:
        (ProcessModel, list of SensorModel with ids 1..M)
    """
    config = config or GenerationConfig()
    n = config.n_states if n_states is None else int(n_states)
    m_total = config.n_sensors if n_sensors is None else int(n_sensors)
    if n < 1 or m_total < 1:
        raise ConfigurationError(f"Need N >= 1 and M >= 1, got N={n}, M={m_total}")

    rng = np.random.default_rng(seed)
    eps = config.epsilon

    A = rng.uniform(*config.a_range, size=(n, n))
    A = _rescale_dynamics(A, config.rescale_mode, config.rescale_target)
    q = rng.uniform(*config.q_range, size=(n, n))
    model = ProcessModel(A=A, Q=q @ q.T + eps * np.eye(n))

    sensors: List[SensorModel] = []
    for sensor_id in range(1, m_total + 1):
        m = int(rng.integers(1, n + 1))
        C = rng.uniform(*config.c_range, size=(m, n))
        r = rng.uniform(*config.r_range, size=(m, m))
        p = float(rng.uniform(*config.p_range))
        d = _draw_distance(rng, config)
        sensors.append(SensorModel(id=sensor_id, C=C, R=r @ r.T + eps * np.eye(m),
                                   sample_prob=p, distance=d))

    rho = float(np.max(np.abs(np.linalg.eigvals(model.A))))
    _logger.debug(f"generated system seed={seed} N={n} M={m_total} rho(A)={rho:.4f}")
    return model, sensors


def step_truth(model: ProcessModel, x: np.ndarray, noise_rng: np.random.Generator,
               noise_factor: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Advance the true state one step: A x + w, w ~ N(0, Q).

    `noise_factor` is a precomputed square root of Q (see `psd_sqrt`).
    """
    x = as_vector(x, model.dim, "state")
    factor = psd_sqrt(model.Q) if noise_factor is None else noise_factor
    return model.A @ x + factor @ noise_rng.standard_normal(model.dim)


def maybe_sample(sensor: SensorModel, x_true: np.ndarray, k: int, rng: np.random.Generator,
                 noise_factor: Optional[np.ndarray] = None) -> Optional[Sample]:
    """
    With probability p_i produce y = C_i x + v, v ~ N(0, R_i), stamped tau = k.

    Returns None when the sensor does not sample this step; the caller keeps
    the previously held sample in that case.
    """
    if rng.random() >= sensor.sample_prob:
        return None
    factor = np.linalg.cholesky(sensor.R) if noise_factor is None else noise_factor
    y = sensor.C @ x_true + factor @ rng.standard_normal(sensor.meas_dim)
    return Sample(time=int(k), value=y)


class TruthSimulator:
    """
    Drives the true process and the sensor fleet with one RNG stream.

    RNG consumption does not depend on the scheduler's actions, so runs that
    share a seed see identical noise realizations.
    """

    def __init__(self, model: ProcessModel, sensors: List[SensorModel], rng: np.random.Generator):
        self.model = model
        self.sensors = sensors
        self.rng = rng
        self._q_factor = psd_sqrt(model.Q)
        self._r_factors = {s.id: np.linalg.cholesky(s.R) for s in sensors}
        self.truth = GroundTruth()

    def reset(self, x0: np.ndarray) -> GroundTruth:
        self.truth = GroundTruth(trajectory=[as_vector(x0, self.model.dim, "x0")])
        return self.truth

    def advance(self) -> int:
        """Step the truth once and let every sensor try to sample; returns the new time."""
        x_next = step_truth(self.model, self.truth.state, self.rng, self._q_factor)
        self.truth.trajectory.append(x_next)
        k = self.truth.time
        for sensor in self.sensors:
            sample = maybe_sample(sensor, x_next, k, self.rng, self._r_factors[sensor.id])
            self.truth.record(sensor.id, sample)
        return k


def simulate_trajectory(model: ProcessModel, sensors: List[SensorModel], horizon: int,
                        rng: np.random.Generator, x0: Optional[np.ndarray] = None) -> GroundTruth:
    """Run the truth for `horizon` steps; the trajectory has horizon + 1 states."""
    if horizon < 0:
        raise ConfigurationError(f"horizon must be >= 0, got {horizon}")
    simulator = TruthSimulator(model, sensors, rng)
    simulator.reset(np.zeros(model.dim) if x0 is None else x0)
    for _ in range(horizon):
        simulator.advance()
    return simulator.truth
