from .kalman import coast, kalman_gain, lyapunov_fixed_point, predict, riccati_fixed_point, update
from .delay_fusion import (
    BeliefBuffer,
    BufferEntry,
    DelayAwareEstimator,
    LoggedMeasurement,
    MeasurementLog,
    ReplayGapReport,
    apply_delayed,
    compare_with_replay,
    fuse_posteriors,
    info_gain,
    replay_oracle,
)
from .stability import SpectralSplit, StabilityReport, build_O, check_feasibility, spectral_split

__all__ = [
    "predict", "update", "coast", "kalman_gain", "lyapunov_fixed_point", "riccati_fixed_point",
    "BeliefBuffer", "BufferEntry", "DelayAwareEstimator", "LoggedMeasurement", "MeasurementLog",
    "ReplayGapReport", "apply_delayed", "compare_with_replay", "fuse_posteriors", "info_gain",
    "replay_oracle",
    "SpectralSplit", "StabilityReport", "build_O", "check_feasibility", "spectral_split",
]
