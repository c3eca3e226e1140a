from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ConfigurationError, FilterError
from .utils import min_eigenvalue, symmetrize

Q_PSD_TOL = 1e-10
COV_SYM_TOL = 1e-9
COV_PSD_TOL = 1e-9


def _check_matrix(label: str, value, shape: Optional[tuple] = None) -> np.ndarray:
    mat = np.atleast_2d(np.asarray(value, dtype=float))
    if mat.ndim != 2:
        raise ConfigurationError(f"{label} must be a 2-D matrix, got {mat.ndim} dims")
    if shape is not None and mat.shape != shape:
        raise ConfigurationError(f"{label} must have shape {shape}, got {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ConfigurationError(f"{label} contains non-finite entries")
    return mat


def _relative_tol(mat: np.ndarray, tol: float) -> float:
    scale = float(np.max(np.abs(mat))) if mat.size else 0.0
    return tol * max(1.0, scale)


class BeliefKind(str, Enum):
    PRIOR = "prior"
    POSTERIOR = "posterior"


@dataclass(eq=False)
class ProcessModel:
    """The LTI pair (A, Q): x_{k+1} = A x_k + w_k, w_k ~ N(0, Q)."""
    A: np.ndarray
    Q: np.ndarray
    dim: int = field(default=0)

    def __post_init__(self):
        self.A = _check_matrix("ProcessModel.A", self.A)
        n = self.A.shape[0]
        if self.A.shape != (n, n) or n < 1:
            raise ConfigurationError(f"ProcessModel.A must be square, got {self.A.shape}")
        if self.dim and self.dim != n:
            raise ConfigurationError(f"ProcessModel.dim={self.dim} does not match A ({n}x{n})")
        self.dim = n
        self.Q = _check_matrix("ProcessModel.Q", self.Q, (n, n))
        if np.max(np.abs(self.Q - self.Q.T)) > _relative_tol(self.Q, COV_SYM_TOL):
            raise ConfigurationError("ProcessModel.Q must be symmetric")
        self.Q = symmetrize(self.Q)
        if min_eigenvalue(self.Q) < -Q_PSD_TOL:
            raise ConfigurationError("ProcessModel.Q must be positive semi-definite")


@dataclass(eq=False)
class SensorModel:
    """
    One heterogeneous sensor: y = C x + v, v ~ N(0, R), sampled with
    probability `sample_prob` each step, at `distance` metres from the
    estimator. `energy` (joules per transmission) is filled by link_energy.
    """
    id: int
    C: np.ndarray
    R: np.ndarray
    sample_prob: float
    distance: float
    energy: Optional[float] = None

    def __post_init__(self):
        if int(self.id) < 1:
            raise ConfigurationError(f"SensorModel.id must be >= 1, got {self.id}")
        self.id = int(self.id)
        self.C = _check_matrix(f"Sensor {self.id} C", self.C)
        m, n = self.C.shape
        if not 1 <= m <= n:
            raise ConfigurationError(f"Sensor {self.id}: measurement dimension {m} not in [1, {n}]")
        self.R = _check_matrix(f"Sensor {self.id} R", self.R, (m, m))
        if np.max(np.abs(self.R - self.R.T)) > _relative_tol(self.R, COV_SYM_TOL):
            raise ConfigurationError(f"Sensor {self.id}: R must be symmetric")
        self.R = symmetrize(self.R)
        if min_eigenvalue(self.R) <= 0.0:
            raise ConfigurationError(f"Sensor {self.id}: R must be positive definite")
        if not 0.0 <= float(self.sample_prob) <= 1.0:
            raise ConfigurationError(f"Sensor {self.id}: sample_prob {self.sample_prob} outside [0, 1]")
        self.sample_prob = float(self.sample_prob)
        if float(self.distance) <= 0.0:
            raise ConfigurationError(f"Sensor {self.id}: distance must be positive")
        self.distance = float(self.distance)
        if self.energy is not None:
            if not np.isfinite(self.energy) or self.energy <= 0.0:
                raise ConfigurationError(f"Sensor {self.id}: energy must be positive")
            self.energy = float(self.energy)

    @property
    def meas_dim(self) -> int:
        return self.C.shape[0]

    def with_energy(self, energy: float) -> "SensorModel":
        return replace(self, energy=energy)


@dataclass(eq=False)
class BeliefState:
    """Gaussian belief (x_hat, P) at time k; the covariance is kept symmetric PSD."""
    mean: np.ndarray
    cov: np.ndarray
    time: int
    kind: BeliefKind = BeliefKind.POSTERIOR

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        n = self.mean.shape[0]
        if cov.shape != (n, n):
            raise FilterError(f"Belief covariance shape {cov.shape} does not match mean length {n}")
        if not (np.all(np.isfinite(cov)) and np.all(np.isfinite(self.mean))):
            raise FilterError(f"Belief at time {self.time} has non-finite entries")
        self.cov = symmetrize(cov)
        if min_eigenvalue(self.cov) < -_relative_tol(self.cov, COV_PSD_TOL):
            raise FilterError(f"Belief covariance at time {self.time} is not PSD")
        self.kind = BeliefKind(self.kind)
        self.time = int(self.time)

    @property
    def trace(self) -> float:
        return float(np.trace(self.cov))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(eq=False)
class DelayedMeasurement:
    """A sample generated at `gen_time` that reaches the estimator `delay` steps later."""
    sensor_id: int
    gen_time: int
    value: np.ndarray
    delay: int

    def __post_init__(self):
        self.value = np.atleast_1d(np.asarray(self.value, dtype=float)).reshape(-1)
        if int(self.delay) < 0:
            raise ConfigurationError(f"Measurement delay must be >= 0, got {self.delay}")
        self.delay = int(self.delay)
        self.gen_time = int(self.gen_time)
        self.sensor_id = int(self.sensor_id)

    @property
    def arrival_time(self) -> int:
        return self.gen_time + self.delay


@dataclass(eq=False)
class LinkBudget:
    """
    Link-level constants of the transmission energy model, in SI units
    (noise density in W/Hz, min SNR linear).
    """
    n_bits: float
    bandwidth: float
    wavelength: float
    gain_tx: float
    gain_rx: float
    noise_density: float
    pa_efficiency: float
    circuit_power: float
    tx_power: float
    min_snr: float

    def __post_init__(self):
        for name in ("n_bits", "bandwidth", "wavelength", "gain_tx", "gain_rx", "noise_density",
                     "pa_efficiency", "circuit_power", "tx_power", "min_snr"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value <= 0.0:
                raise ConfigurationError(f"LinkBudget.{name} must be strictly positive, got {value}")
            setattr(self, name, value)
        if self.pa_efficiency > 1.0:
            raise ConfigurationError(f"LinkBudget.pa_efficiency must be <= 1, got {self.pa_efficiency}")
