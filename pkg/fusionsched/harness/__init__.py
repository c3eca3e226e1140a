# Harness layer: orchestration, CSV emission and the command line

from .cli import build_parser, cli_main
from .experiment import (SystemRealization, build_system, delay_statistics, episode_transcript, make_env_config,
                         resolve_policies, run_evaluation, run_sweep, run_training, stability_report)
from .summary import emit_learning_curve, emit_summary, emit_traces

__all__ = [
    'build_parser', 'cli_main',
    'SystemRealization', 'build_system', 'delay_statistics', 'episode_transcript', 'make_env_config',
    'resolve_policies', 'run_evaluation', 'run_sweep', 'run_training', 'stability_report',
    'emit_learning_curve', 'emit_summary', 'emit_traces',
]
