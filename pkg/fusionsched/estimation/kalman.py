"""
Standard Kalman prediction and timely-measurement update on BeliefState
values, plus steady-state helpers.
"""

import numpy as np
import scipy.linalg

from ..entities import BeliefKind, BeliefState, ProcessModel, SensorModel
from ..errors import ConfigurationError, FilterError, UsageError
from ..utils import as_vector, symmetrize


def predict(belief: BeliefState, model: ProcessModel) -> BeliefState:
    """
    Time update: x' = A x, P' = A P A^T + Q.

    Accepts a posterior, or a prior when coasting without an update.
    """
    A = model.A
    return BeliefState(
        mean=A @ belief.mean,
        cov=symmetrize(A @ belief.cov @ A.T + model.Q),
        time=belief.time + 1,
        kind=BeliefKind.PRIOR,
    )


def kalman_gain(cov: np.ndarray, sensor: SensorModel) -> np.ndarray:
    """K = P C^T (C P C^T + R)^-1, computed with a linear solve."""
    C = sensor.C
    innovation_cov = symmetrize(C @ cov @ C.T + sensor.R)
    try:
        gain_t = scipy.linalg.solve(innovation_cov, C @ cov, assume_a="sym")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise FilterError(f"Innovation covariance of sensor {sensor.id} is singular: {exc}")
    if not np.all(np.isfinite(gain_t)):
        raise FilterError(f"Non-finite Kalman gain for sensor {sensor.id}")
    return gain_t.T


def update(belief: BeliefState, sensor: SensorModel, y, joseph: bool = False) -> BeliefState:
    """
    Measurement update with a timely sample y of `sensor`.

    Args:
        belief: Prior belief at the sample's time
        sensor: Sensor that produced y
        y: Measurement vector of length m_i
        joseph: Use the Joseph-form covariance update instead of (I - K C) P

    Returns:
        Posterior belief at the same time
    """
    if belief.kind is not BeliefKind.PRIOR:
        raise UsageError(f"update expects a prior belief, got {belief.kind.value} at time {belief.time}")
    try:
        y = as_vector(y, sensor.meas_dim, f"measurement of sensor {sensor.id}")
    except ValueError as exc:
        raise UsageError(str(exc))
    P = belief.cov
    C = sensor.C
    K = kalman_gain(P, sensor)
    mean = belief.mean + K @ (y - C @ belief.mean)
    I_KC = np.eye(belief.dim) - K @ C
    if joseph:
        cov = I_KC @ P @ I_KC.T + K @ sensor.R @ K.T
    else:
        cov = I_KC @ P
    return BeliefState(mean=mean, cov=symmetrize(cov), time=belief.time, kind=BeliefKind.POSTERIOR)


def coast(belief: BeliefState) -> BeliefState:
    """Promote a prior to the step's posterior when nothing is fused."""
    return BeliefState(mean=belief.mean, cov=belief.cov, time=belief.time, kind=BeliefKind.POSTERIOR)


def lyapunov_fixed_point(model: ProcessModel) -> np.ndarray:
    """Fixed point of P = A P A^T + Q; only exists when rho(A) < 1."""
    rho = float(np.max(np.abs(np.linalg.eigvals(model.A))))
    if rho >= 1.0:
        raise ConfigurationError(f"No Lyapunov fixed point: spectral radius {rho:.4g} >= 1")
    return symmetrize(scipy.linalg.solve_discrete_lyapunov(model.A, model.Q))


def riccati_fixed_point(model: ProcessModel, sensor: SensorModel) -> np.ndarray:
    """Steady-state prior covariance when `sensor` updates every step (DARE)."""
    return symmetrize(scipy.linalg.solve_discrete_are(model.A.T, sensor.C.T, model.Q, sensor.R))
