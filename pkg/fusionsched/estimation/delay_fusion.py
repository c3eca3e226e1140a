"""
Delayed-measurement handling by posterior fusion.

A sample generated at tau and received at k is (1) applied to the stored
prior at tau, (2) propagated forward one step at a time and, wherever the
buffer records that another sensor was fused, merged with that step's stored
system posterior, and (3) adopted as the belief at k. The exact alternative,
re-running the filter from tau over every measurement, is kept here as
`replay_oracle` for testing and comparison.
"""

from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Sequence

import numpy as np

from ..entities import BeliefKind, BeliefState, DelayedMeasurement, ProcessModel, SensorModel
from ..errors import StaleMeasurementError, UsageError
from ..logger import get_logger
from ..utils import symmetrize
from .kalman import coast, predict, update

_logger = get_logger("delay_fusion")

DEFAULT_BUFFER_LEN = 32
FUSION_REGULARIZATION = 1e-9
GAIN_SLACK = 1e-9


@dataclass(eq=False)
class BufferEntry:
    time: int
    prior: BeliefState
    posterior: BeliefState
    fused_sensor: Optional[int] = None


class BeliefBuffer:
    """Ring of the last L (prior, posterior) pairs with the sensor fused at each step."""

    def __init__(self, capacity: int = DEFAULT_BUFFER_LEN):
        if capacity < 1:
            raise UsageError(f"buffer capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._entries: Deque[BufferEntry] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def oldest_time(self) -> int:
        return self._entries[0].time

    @property
    def latest_time(self) -> int:
        if not self._entries:
            raise UsageError("belief buffer is empty")
        return self._entries[-1].time

    @property
    def latest(self) -> BufferEntry:
        return self._entries[-1]

    def push(self, prior: BeliefState) -> BufferEntry:
        """Record the prior of a new step; its posterior starts as the prior."""
        if self._entries and prior.time != self.latest_time + 1:
            raise UsageError(f"buffer times must be contiguous: {self.latest_time} then {prior.time}")
        entry = BufferEntry(time=prior.time, prior=prior, posterior=coast(prior))
        self._entries.append(entry)
        return entry

    def commit(self, posterior: BeliefState, sensor_id: int) -> None:
        """Adopt `posterior` as the latest step's system posterior."""
        entry = self.latest
        if posterior.time != entry.time:
            raise UsageError(f"posterior time {posterior.time} does not match latest step {entry.time}")
        entry.posterior = posterior
        entry.fused_sensor = sensor_id

    def entry_at(self, time: int) -> Optional[BufferEntry]:
        if not self._entries or time < self.oldest_time or time > self.latest_time:
            return None
        return self._entries[time - self.oldest_time]

    def copy(self) -> "BeliefBuffer":
        clone = BeliefBuffer(self.capacity)
        for e in self._entries:
            clone._entries.append(BufferEntry(e.time, e.prior, e.posterior, e.fused_sensor))
        return clone


def fuse_posteriors(propagated: BeliefState, system: BeliefState) -> BeliefState:
    """
    Merge a forward-propagated branch with the stored system posterior,
    treating the latter as a virtual Gaussian observation:
    K = P_p (P_p + P)^-1, x = x_p + K (x - x_p), P_r = (I - K) P_p.
    """
    if propagated.time != system.time:
        raise UsageError(f"cannot fuse beliefs at times {propagated.time} and {system.time}")
    Pp = propagated.cov
    total = symmetrize(Pp + system.cov)
    eig = np.linalg.eigvalsh(total)
    if eig[0] <= 1e-12 * max(1.0, abs(eig[-1])):
        _logger.warning(f"singular fusion covariance at time {system.time}; regularizing with {FUSION_REGULARIZATION:g} I")
        total = total + FUSION_REGULARIZATION * np.eye(total.shape[0])
    K = np.linalg.solve(total, Pp).T
    mean = propagated.mean + K @ (system.mean - propagated.mean)
    cov = (np.eye(Pp.shape[0]) - K) @ Pp
    return BeliefState(mean=mean, cov=symmetrize(cov), time=system.time, kind=BeliefKind.POSTERIOR)


def apply_delayed(buffer: BeliefBuffer, meas: DelayedMeasurement, sensor: SensorModel,
                  model: ProcessModel) -> BeliefState:
    """
    Corrected belief at k = tau + delay after incorporating a delayed sample.

    The buffer is only read; committing the result is the caller's job.

    Raises:
        StaleMeasurementError: tau is older than the buffer holds
        UsageError: arrival time is not the buffer's latest step, or that
            step already fused a measurement
    """
    if meas.sensor_id != sensor.id:
        raise UsageError(f"measurement of sensor {meas.sensor_id} paired with sensor {sensor.id}")
    k = buffer.latest_time
    if meas.arrival_time != k:
        raise UsageError(f"measurement arrives at {meas.arrival_time} but the estimator is at {k}")
    if buffer.latest.fused_sensor is not None:
        raise UsageError(f"step {k} already fused sensor {buffer.latest.fused_sensor}")
    tau = meas.gen_time
    origin = buffer.entry_at(tau)
    if origin is None:
        raise StaleMeasurementError(
            f"sensor {sensor.id} sample from t={tau} is older than the buffer (oldest t={buffer.oldest_time})")

    branch = update(origin.prior, sensor, meas.value)
    if tau < k and origin.fused_sensor is not None:
        branch = fuse_posteriors(branch, origin.posterior)
    for j in range(tau + 1, k + 1):
        branch = predict(branch, model)
        entry = buffer.entry_at(j)
        if j < k and entry.fused_sensor is not None:
            branch = fuse_posteriors(branch, entry.posterior)
        else:
            branch = coast(branch)
    return branch


def info_gain(prior_trace, fused: BeliefState) -> float:
    """Delta = trace(P_{k|k-1}) - trace(P_{r|k})."""
    if isinstance(prior_trace, BeliefState):
        prior_trace = prior_trace.trace
    gain = float(prior_trace) - fused.trace
    if gain < -GAIN_SLACK * max(1.0, abs(float(prior_trace))):
        _logger.warning(f"negative information gain {gain:.3g} at time {fused.time}")
    return gain


@dataclass(frozen=True)
class LoggedMeasurement:
    sensor_id: int
    gen_time: int
    value: np.ndarray


@dataclass(eq=False)
class MeasurementLog:
    """Everything needed to re-filter exactly: start prior, fused samples, end time."""
    start: BeliefState
    end_time: int
    entries: List[LoggedMeasurement] = field(default_factory=list)

    def add(self, meas: DelayedMeasurement) -> None:
        self.entries.append(LoggedMeasurement(meas.sensor_id, meas.gen_time, meas.value))

    def with_entries(self, entries: Sequence[LoggedMeasurement]) -> "MeasurementLog":
        return MeasurementLog(start=self.start, end_time=self.end_time, entries=list(entries))


def _as_prior(belief: BeliefState) -> BeliefState:
    return BeliefState(mean=belief.mean, cov=belief.cov, time=belief.time, kind=BeliefKind.PRIOR)


def replay_oracle(history: MeasurementLog, model: ProcessModel,
                  sensors: Sequence[SensorModel]) -> BeliefState:
    """
    Exact Kalman result at `history.end_time`: re-run predict/update from the
    start prior with every logged sample applied at its generation time.
    """
    by_id: Dict[int, SensorModel] = {s.id: s for s in sensors}
    by_time: Dict[int, List[LoggedMeasurement]] = {}
    for item in history.entries:
        if item.gen_time < history.start.time or item.gen_time > history.end_time:
            raise UsageError(f"logged sample at t={item.gen_time} outside the replay window")
        by_time.setdefault(item.gen_time, []).append(item)

    belief = _as_prior(history.start)
    for t in range(history.start.time, history.end_time + 1):
        if t > history.start.time:
            belief = predict(belief, model)
        for item in by_time.get(t, []):
            belief = _as_prior(update(belief, by_id[item.sensor_id], item.value))
    return coast(belief)


class DelayAwareEstimator:
    """
    Remote estimator owning the belief buffer: one predict per slot and at
    most one (possibly delayed) measurement fused per slot.
    """

    def __init__(self, model: ProcessModel, sensors: Sequence[SensorModel], initial: BeliefState,
                 buffer_len: int = DEFAULT_BUFFER_LEN):
        self.model = model
        self.sensors: Dict[int, SensorModel] = {s.id: s for s in sensors}
        self.buffer = BeliefBuffer(buffer_len)
        self.buffer.push(_as_prior(initial))
        self.belief = coast(initial)
        self.stale_drops = 0
        self.log = MeasurementLog(start=_as_prior(initial), end_time=initial.time)

    @property
    def time(self) -> int:
        return self.belief.time

    @property
    def current_prior(self) -> BeliefState:
        return self.buffer.latest.prior

    def advance(self) -> BeliefState:
        """Predict to the next slot and open its buffer entry; returns the prior."""
        prior = predict(self.belief, self.model)
        self.buffer.push(prior)
        self.belief = coast(prior)
        self.log.end_time = prior.time
        return prior

    def dry_run(self, meas: DelayedMeasurement) -> BeliefState:
        """Belief that incorporating `meas` would produce, without committing it."""
        return apply_delayed(self.buffer, meas, self.sensors[meas.sensor_id], self.model)

    def incorporate(self, meas: DelayedMeasurement) -> Optional[BeliefState]:
        """
        Fuse `meas` and adopt the corrected belief for the current slot.

        Returns None (and counts a stale drop) when the sample is older than
        the buffer; the belief is then left untouched.
        """
        try:
            corrected = self.dry_run(meas)
        except StaleMeasurementError:
            self.stale_drops += 1
            return None
        self.buffer.commit(corrected, meas.sensor_id)
        self.belief = corrected
        self.log.add(meas)
        return corrected


@dataclass(frozen=True)
class ReplayGapReport:
    """Relative trace gap (pipeline - replay) / replay over randomized trials."""
    delay: int
    relative_gaps: np.ndarray

    @property
    def mean_gap(self) -> float:
        return float(np.mean(self.relative_gaps))

    @property
    def max_below(self) -> float:
        return float(max(0.0, -np.min(self.relative_gaps)))

    def fraction_within(self, tolerance: float = 0.10) -> float:
        return float(np.mean(np.abs(self.relative_gaps) <= tolerance))


def compare_with_replay(model: ProcessModel, sensors: Sequence[SensorModel], delay: int,
                        rng: np.random.Generator, n_trials: int = 100, warmup: int = 5,
                        fuse_prob: float = 1.0, buffer_len: int = DEFAULT_BUFFER_LEN) -> ReplayGapReport:
    """
    Measure how far posterior fusion lands from exact replay.

    Each trial warms the estimator up with timely updates, fuses random
    timely samples at the intervening steps with probability `fuse_prob`,
    then delivers one sample that is `delay` steps old.
    """
    n = model.dim
    fleet = list(sensors)
    gaps = []
    for _ in range(n_trials):
        initial = BeliefState(mean=np.zeros(n), cov=np.eye(n), time=0)
        estimator = DelayAwareEstimator(model, fleet, initial, buffer_len)

        def timely(t: int) -> DelayedMeasurement:
            s = fleet[int(rng.integers(len(fleet)))]
            return DelayedMeasurement(s.id, t, rng.standard_normal(s.meas_dim), 0)

        for _ in range(warmup):
            estimator.advance()
            estimator.incorporate(timely(estimator.time))
        estimator.advance()
        tau = estimator.time
        late = timely(tau)
        # the arrival slot carries the delayed sample, so timely fusions stop one step short
        for step in range(delay):
            estimator.advance()
            if step < delay - 1 and rng.random() < fuse_prob:
                estimator.incorporate(timely(estimator.time))
        late = DelayedMeasurement(late.sensor_id, tau, late.value, delay)
        pipeline = estimator.incorporate(late)
        oracle = replay_oracle(estimator.log, model, fleet)
        gaps.append((pipeline.trace - oracle.trace) / oracle.trace)
    return ReplayGapReport(delay=delay, relative_gaps=np.asarray(gaps))

