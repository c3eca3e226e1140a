"""
The sensor-scheduling MDP.

Each slot k the true process advances and every sensor may take a new
sample; the estimator predicts; then the scheduler invites at most one
sensor (action i in 1..M) or stays idle (action 0). The invited sensor
delivers its held sample, which is fused by the delay-aware estimator. The
reward is -trace(P_k)/trace(P_0) - beta * E^i / max E.

The truth and sample streams never depend on the chosen actions, so two
episodes reset with the same seed see the same noise whatever the policy.
"""

from collections import deque
from dataclasses import asdict, dataclass
from typing import Any, Deque, Dict, List, Optional, Sequence, Tuple

import gymnasium as gym
import numpy as np
from gymnasium import spaces

from ..config import EnvSettings
from ..entities import BeliefState, DelayedMeasurement, LinkBudget, ProcessModel, SensorModel
from ..errors import ConfigurationError, UsageError
from ..estimation.delay_fusion import DelayAwareEstimator, info_gain
from ..logger import LoggerLevels, get_logger
from ..system.link_energy import EnergyTable, fleet_energy
from ..system.linmodel import TruthSimulator
from ..utils import psd_sqrt

_logger = get_logger("env")

TRANSCRIPT_COLUMNS = ("k", "action", "delay", "trace_P", "energy", "e_hat", "gain", "stale_drop", "reward")


@dataclass(frozen=True, eq=False)
class EnvConfig:
    """Everything one environment instance needs; `energies` is derived from `budget` when omitted."""
    model: ProcessModel
    sensors: Tuple[SensorModel, ...]
    budget: LinkBudget
    horizon: int = 100
    beta: float = 0.1
    history_len: int = 10
    log_eps: float = 1e-8
    seed: int = 0
    buffer_len: int = 32
    init_cov_scale: float = 1.0
    calibrate_tx_power: bool = False
    energies: Optional[EnergyTable] = None

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        if not self.sensors:
            raise ConfigurationError("EnvConfig needs at least one sensor")
        if self.horizon < 1:
            raise ConfigurationError(f"horizon must be >= 1, got {self.horizon}")
        if self.beta < 0.0:
            raise ConfigurationError(f"beta must be >= 0, got {self.beta}")
        if self.history_len < 1:
            raise ConfigurationError(f"history_len must be >= 1, got {self.history_len}")
        if self.log_eps <= 0.0 or self.init_cov_scale <= 0.0:
            raise ConfigurationError("log_eps and init_cov_scale must be > 0")
        if any(s.C.shape[1] != self.model.dim for s in self.sensors):
            raise ConfigurationError("sensor C matrices do not match the state dimension")
        if self.energies is None:
            object.__setattr__(self, "energies", fleet_energy(self.budget, self.sensors, self.calibrate_tx_power))
        elif len(self.energies.energies) != len(self.sensors):
            raise ConfigurationError("energy table does not cover every sensor")

    @classmethod
    def from_settings(cls, model: ProcessModel, sensors: Sequence[SensorModel], budget: LinkBudget,
                      settings: EnvSettings, seed: int = 0, calibrate_tx_power: bool = False,
                      energies: Optional[EnergyTable] = None) -> "EnvConfig":
        return cls(model=model, sensors=tuple(sensors), budget=budget, horizon=settings.horizon,
                   beta=settings.beta, history_len=settings.history_len, log_eps=settings.log_eps,
                   seed=seed, buffer_len=settings.buffer_len, init_cov_scale=settings.init_cov_scale,
                   calibrate_tx_power=calibrate_tx_power, energies=energies)

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    @property
    def n_states(self) -> int:
        return self.model.dim

    @property
    def obs_dim(self) -> int:
        return self.n_states + 2 * self.history_len

    @property
    def trace_p0(self) -> float:
        return self.init_cov_scale * self.n_states


@dataclass(frozen=True, eq=False)
class MdpState:
    """
    log(diag(P_{k-1}) + eps) and the last nu (sensor id, delay) pairs,
    most recent first; (0, 0) pads an empty history.
    """
    log_diag: np.ndarray
    history: Tuple[Tuple[int, float], ...]
    n_sensors: int
    horizon: int

    def encode(self) -> np.ndarray:
        pairs = np.array([(sid / self.n_sensors, delay / self.horizon) for sid, delay in self.history],
                         dtype=float).reshape(-1)
        return np.concatenate([self.log_diag, pairs])


@dataclass(frozen=True)
class StepInfo:
    k: int
    action: int
    delay: float
    trace_P: float
    energy: float
    e_hat: float
    gain: float
    stale_drop: bool
    reward: float
    u_hat: float = 0.0
    had_sample: bool = False

    def row(self) -> Dict[str, Any]:
        values = asdict(self)
        return {name: values[name] for name in TRANSCRIPT_COLUMNS}


@dataclass(frozen=True, eq=False)
class StepOutcome:
    next_state: MdpState
    reward: float
    info: StepInfo
    done: bool


class SchedulingEnv(gym.Env):
    """Gymnasium environment over a fixed system realization."""

    metadata = {"render_modes": []}

    def __init__(self, config: EnvConfig):
        super().__init__()
        self.config = config
        self.action_space = spaces.Discrete(config.n_sensors + 1)
        self.observation_space = spaces.Box(-np.inf, np.inf, shape=(config.obs_dim,), dtype=np.float64)
        self._sensors: Dict[int, SensorModel] = {s.id: s for s in config.sensors}
        self._p0 = config.init_cov_scale * np.eye(config.n_states)
        self._p0_factor = psd_sqrt(self._p0)
        self._rng: Optional[np.random.Generator] = None
        self._sim: Optional[TruthSimulator] = None
        self.estimator: Optional[DelayAwareEstimator] = None
        self._history: Deque[Tuple[int, float]] = deque(maxlen=config.history_len)
        self._delivered: Dict[int, int] = {}
        self._last_posterior: Optional[BeliefState] = None
        self._done = True
        self.transcript: List[StepInfo] = []

    @property
    def energies(self) -> EnergyTable:
        return self.config.energies

    @property
    def time(self) -> int:
        """The slot awaiting an action."""
        if self.estimator is None:
            raise UsageError("environment has not been reset")
        return self.estimator.time

    @property
    def trace_p0(self) -> float:
        return self.config.trace_p0

    @property
    def done(self) -> bool:
        return self._done

    @property
    def stale_drops(self) -> int:
        return 0 if self.estimator is None else self.estimator.stale_drops

    def state(self) -> MdpState:
        if self._last_posterior is None:
            raise UsageError("environment has not been reset")
        log_diag = np.log(np.diag(self._last_posterior.cov) + self.config.log_eps)
        return MdpState(log_diag=log_diag, history=tuple(self._history),
                        n_sensors=self.config.n_sensors, horizon=self.config.horizon)

    def pending_measurements(self) -> List[DelayedMeasurement]:
        """Undelivered samples the sensors hold in the current slot, with their delays."""
        if self._sim is None:
            raise UsageError("environment has not been reset")
        k = self.time
        pending = []
        for sensor in self.config.sensors:
            sample = self._sim.truth.held_sample(sensor.id)
            if sample is None or sample.time <= self._delivered.get(sensor.id, -1):
                continue
            pending.append(DelayedMeasurement(sensor.id, sample.time, sample.value, k - sample.time))
        return pending

    def latest_sample_ages(self) -> Dict[int, Optional[int]]:
        """Age of every sensor's most recent sample, delivered or not."""
        return {s.id: self._sim.truth.held_age(s.id) for s in self.config.sensors}

    def reset_state(self, seed: Optional[int] = None) -> MdpState:
        """
        Start an episode: x_0 ~ N(0, P_0), belief (0, P_0), empty history.

        With `seed` None the first reset uses `config.seed` and later resets
        continue the same stream.
        """
        if seed is not None or self._rng is None:
            self._rng = np.random.default_rng(self.config.seed if seed is None else seed)
        n = self.config.n_states
        x0 = self._p0_factor @ self._rng.standard_normal(n)
        self._sim = TruthSimulator(self.config.model, list(self.config.sensors), self._rng)
        self._sim.reset(x0)
        self.estimator = DelayAwareEstimator(self.config.model, self.config.sensors,
                                             BeliefState(mean=np.zeros(n), cov=self._p0, time=0),
                                             buffer_len=self.config.buffer_len)
        self._last_posterior = self.estimator.belief
        self._history = deque([(0, 0.0)] * self.config.history_len, maxlen=self.config.history_len)
        self._delivered = {}
        self.transcript = []
        self._done = False
        self._open_slot()
        return self.state()

    def _open_slot(self) -> None:
        self._sim.advance()
        self.estimator.advance()

    def transition(self, action: int) -> StepOutcome:
        """Apply `action` in the current slot and move to the next one."""
        if self.estimator is None:
            raise UsageError("environment has not been reset")
        if self._done:
            raise UsageError(f"episode exhausted after {self.config.horizon} steps; call reset")
        action = int(action)
        if not 0 <= action <= self.config.n_sensors:
            raise UsageError(f"action {action} outside 0..{self.config.n_sensors}")

        k = self.time
        prior_trace = self.estimator.current_prior.trace
        delay, e_hat, energy, stale, had_sample = 0.0, 0.0, 0.0, False, False
        if action > 0:
            e_hat = self.energies.normalized(action)
            energy = self.energies.energy_of(action)
            sample = self._sim.truth.held_sample(action)
            if sample is not None and sample.time > self._delivered.get(action, -1):
                had_sample = True
                delay = float(k - sample.time)
                self._delivered[action] = sample.time
                meas = DelayedMeasurement(action, sample.time, sample.value, k - sample.time)
                stale = self.estimator.incorporate(meas) is None
            else:
                delay = float(self.config.horizon)
            self._history.appendleft((action, delay))
        else:
            self._history.appendleft((0, 0.0))

        posterior = self.estimator.belief
        trace_p = posterior.trace
        gain = info_gain(prior_trace, posterior) if had_sample and not stale else 0.0
        u_hat = trace_p / self.trace_p0
        reward = -u_hat - self.config.beta * e_hat
        info = StepInfo(k=k, action=action, delay=delay, trace_P=trace_p, energy=energy, e_hat=e_hat,
                        gain=gain, stale_drop=stale, reward=reward, u_hat=u_hat, had_sample=had_sample)
        self.transcript.append(info)
        if _logger.enabled_for(LoggerLevels.DEBUG):
            _logger.debug(f"k={k} a={action} delay={delay:g} trace={trace_p:.6g} reward={reward:.6g}")

        self._last_posterior = posterior
        self._done = k >= self.config.horizon
        if not self._done:
            self._open_slot()
        return StepOutcome(next_state=self.state(), reward=reward, info=info, done=self._done)

    def reset(self, *, seed: Optional[int] = None, options: Optional[dict] = None):
        super().reset(seed=seed)
        return self.reset_state(seed).encode(), {}

    def step(self, action):
        outcome = self.transition(action)
        # the horizon is a time limit, so episodes end by truncation
        return outcome.next_state.encode(), outcome.reward, False, outcome.done, asdict(outcome.info)

    def transcript_rows(self) -> List[Dict[str, Any]]:
        return [info.row() for info in self.transcript]
