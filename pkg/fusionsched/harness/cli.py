"""
Command-line front end.

    python run_experiment.py show-config
    python run_experiment.py train --seed 7 --checkpoint results/ppo.bin
    python run_experiment.py evaluate --policy random --runs 10 --seed 7
    python run_experiment.py sweep --checkpoint results/ppo.bin
"""

import argparse
import os
import sys
from typing import Callable, Dict, List, Optional

from ..config import PARAMETER_VARIATIONS, ConfigLoader, ExperimentConfig
from ..errors import FusionSchedError, StorageError, UsageError
from ..learning.autodiff_nn import Mlp
from ..logger import configure_logging, get_logger
from ..mdp.scheduling_env import TRANSCRIPT_COLUMNS
from ..storage_system.storage import CheckpointStorage, ResultStorage, SnapshotStorage
from .experiment import (DELAY_STATS_COLUMNS, build_system, delay_statistics, episode_transcript,
                         resolve_policies, run_evaluation, run_sweep, run_training, stability_report)
from .summary import emit_learning_curve, emit_summary, emit_traces

_logger = get_logger("cli")

POLICY_CHOICES = ("idle", "random", "greedy", "ppo", "all")
FULL_TRAINING_STEPS = 1_000_000

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_STORAGE = StorageError.exit_code


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Path to a .cfg experiment file (default: built-in defaults)')
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='Override one config key, e.g. --set env.beta=0.2 (repeatable)')
    common.add_argument('--seed', type=int, help='Master seed (run.master_seed)')
    common.add_argument('--runs', type=int, help='Monte Carlo runs (run.n_runs)')
    common.add_argument('--output-dir', help='Directory for CSVs, snapshots and checkpoints (run.output_dir)')
    common.add_argument('--workers', type=int, help='Thread pool size for runs and sweep cells (run.workers)')
    common.add_argument('--variation', choices=list(PARAMETER_VARIATIONS),
                        help='Parameter variation applied to system generation')
    common.add_argument('--log-level', help='DEBUG, INFO, SUCCESS, WARNING or ERROR (run.log_level)')

    parser = argparse.ArgumentParser(prog='fusionsched',
                                     description='Delay- and energy-aware sensor scheduling experiments')
    sub = parser.add_subparsers(dest='command', required=True)

    train = sub.add_parser('train', parents=[common], help='Train the PPO scheduler')
    train.add_argument('--checkpoint', help='Checkpoint output path (default: <output-dir>/checkpoint.bin)')
    train.add_argument('--total-steps', type=int, help='Environment steps (ppo.total_steps)')
    train.add_argument('--full-budget', action='store_true',
                       help=f'Train for {FULL_TRAINING_STEPS} environment steps')

    def add_policy_args(p: argparse.ArgumentParser, default_all: bool = True) -> None:
        p.add_argument('--policy', action='append', choices=POLICY_CHOICES,
                       help='Policy to run (repeatable; default: all)' if default_all else 'Policy to run')
        p.add_argument('--checkpoint', help='Trained PPO checkpoint (enables the ppo policy)')
        p.add_argument('--sample-actions', action='store_true',
                       help='Sample PPO actions instead of taking the argmax')

    evaluate = sub.add_parser('evaluate', parents=[common], help='Evaluate policies on paired seeds')
    add_policy_args(evaluate)
    sweep = sub.add_parser('sweep', parents=[common], help='Evaluate policies across parameter variations')
    add_policy_args(sweep)
    sweep.add_argument('--only', action='append', choices=list(PARAMETER_VARIATIONS),
                       help='Restrict the sweep to these variations (repeatable)')

    sub.add_parser('check-stability', parents=[common], help='Decide stability feasibility of the system')
    sub.add_parser('show-config', parents=[common], help='Print the resolved configuration')
    sub.add_parser('snapshot', parents=[common], help='Write the system realization as plain text')

    delays = sub.add_parser('delay-stats', parents=[common], help='Per-sensor sample age statistics')
    add_policy_args(delays, default_all=False)
    transcript = sub.add_parser('transcript', parents=[common], help='Step-by-step record of one run')
    add_policy_args(transcript, default_all=False)
    transcript.add_argument('--run', type=int, default=0, help='Evaluation run index (default: 0)')
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults < --config file < --set overrides < dedicated flags."""
    overrides = ConfigLoader.parse_assignments(args.overrides)
    flags = {
        'run.master_seed': args.seed,
        'run.n_runs': args.runs,
        'run.output_dir': args.output_dir,
        'run.workers': args.workers,
        'run.log_level': args.log_level,
        'variation.name': args.variation,
        'ppo.total_steps': getattr(args, 'total_steps', None),
    }
    if getattr(args, 'full_budget', False):
        flags['ppo.total_steps'] = FULL_TRAINING_STEPS
    overrides.update({k: v for k, v in flags.items() if v is not None})
    return ConfigLoader.load(args.config, overrides)


def _load_actor(args: argparse.Namespace) -> Optional[Mlp]:
    if not getattr(args, 'checkpoint', None):
        return None
    actor, _, header = CheckpointStorage().load(args.checkpoint)
    _logger.info(f"loaded checkpoint {args.checkpoint} (seed {header.get('seed')})")
    return actor


def _single_policy(args: argparse.Namespace, fallback: str):
    names = args.policy or [fallback]
    if len(names) != 1 or names[0] == 'all':
        raise UsageError(f"{args.command} takes exactly one --policy")
    return resolve_policies(names, _load_actor(args), not args.sample_actions)[0]


def cmd_show_config(args: argparse.Namespace, config: ExperimentConfig) -> int:
    sys.stdout.write(config.to_text())
    return EXIT_OK


def cmd_check_stability(args: argparse.Namespace, config: ExperimentConfig) -> int:
    sys.stdout.write(stability_report(config).to_text())
    return EXIT_OK


def cmd_snapshot(args: argparse.Namespace, config: ExperimentConfig) -> int:
    system = build_system(config)
    path = SnapshotStorage(config.run.output_dir).save('system_snapshot.txt', system.model, system.sensors)
    print(path)
    return EXIT_OK


def cmd_train(args: argparse.Namespace, config: ExperimentConfig) -> int:
    storage = ResultStorage(config.run.output_dir)
    result = run_training(config)
    checkpoint = args.checkpoint or os.path.join(config.run.output_dir, 'checkpoint.bin')
    CheckpointStorage().save(checkpoint, result.actor, result.critic, result.seed,
                             extra={'master_seed': config.run.master_seed, 'variation': config.variation.name})
    emit_learning_curve(result.curve, storage)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace, config: ExperimentConfig) -> int:
    policies = resolve_policies(args.policy or ['all'], _load_actor(args), not args.sample_actions)
    results = [(config.variation.name, r) for r in run_evaluation(config, policies)]
    storage = ResultStorage(config.run.output_dir)
    emit_summary(results, storage)
    emit_traces(results, storage)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, config: ExperimentConfig) -> int:
    policies = resolve_policies(args.policy or ['all'], _load_actor(args), not args.sample_actions)
    results = run_sweep(config, policies, args.only)
    storage = ResultStorage(config.run.output_dir)
    emit_summary(results, storage, 'sweep_summary.csv')
    emit_traces(results, storage, 'sweep_traces.csv')
    return EXIT_OK


def cmd_delay_stats(args: argparse.Namespace, config: ExperimentConfig) -> int:
    rows = delay_statistics(config, _single_policy(args, 'greedy'))
    ResultStorage(config.run.output_dir).write_rows('delay_stats.csv', DELAY_STATS_COLUMNS, rows)
    return EXIT_OK


def cmd_transcript(args: argparse.Namespace, config: ExperimentConfig) -> int:
    policy = _single_policy(args, 'greedy')
    rows = episode_transcript(config, policy, args.run)
    ResultStorage(config.run.output_dir).write_rows(f'transcript_{policy.name}_run{args.run}.csv',
                                                    TRANSCRIPT_COLUMNS, rows)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace, ExperimentConfig], int]] = {
    'show-config': cmd_show_config,
    'check-stability': cmd_check_stability,
    'snapshot': cmd_snapshot,
    'train': cmd_train,
    'evaluate': cmd_evaluate,
    'sweep': cmd_sweep,
    'delay-stats': cmd_delay_stats,
    'transcript': cmd_transcript,
}


def cli_main(argv: Optional[List[str]] = None) -> int:
    """
    Parse `argv`, run the subcommand and return the process exit code:
    0 success, 2 usage, 3 configuration, 4 checkpoint, 5 storage,
    6 training diverged, 7 any other fusionsched error.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    try:
        config = load_config(args)
        configure_logging(config.run.log_level, config.run.log_file or None, to_console=True)
        return COMMANDS[args.command](args, config)
    except FusionSchedError as exc:
        print(f"error: {exc.type}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: StorageError: {exc}", file=sys.stderr)
        return EXIT_STORAGE
