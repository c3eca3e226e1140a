from .scheduling_env import TRANSCRIPT_COLUMNS, EnvConfig, MdpState, SchedulingEnv, StepInfo, StepOutcome

__all__ = ["TRANSCRIPT_COLUMNS", "EnvConfig", "MdpState", "SchedulingEnv", "StepInfo", "StepOutcome"]
