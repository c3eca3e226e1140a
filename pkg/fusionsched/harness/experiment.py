"""
Experiment orchestration: builds the system realization from the master
seed, wires environments, and runs training, paired-seed evaluation,
robustness sweeps and the per-run diagnostics the CLI exposes.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config import PARAMETER_VARIATIONS, ExperimentConfig
from ..entities import LinkBudget, ProcessModel, SensorModel
from ..errors import UsageError
from ..estimation.stability import StabilityReport, check_feasibility, spectral_split
from ..learning.autodiff_nn import Mlp
from ..learning.policies import EvaluationResult, SchedulingPolicy, build_policy, evaluate, policy_rng, truth_seed
from ..learning.ppo import TrainResult, train
from ..logger import get_logger
from ..mdp.scheduling_env import EnvConfig, SchedulingEnv
from ..system.link_energy import EnergyTable, attach_energies, budget_from_config, fleet_energy
from ..system.linmodel import generate_system
from ..utils import derive_seed, make_rng

_logger = get_logger("experiment")

BASELINE_POLICIES = ("idle", "random", "greedy")


@dataclass(eq=False)
class SystemRealization:
    model: ProcessModel
    sensors: List[SensorModel]
    budget: LinkBudget
    energies: EnergyTable
    seed: int
    variation: str


def build_system(config: ExperimentConfig) -> SystemRealization:
    """
    Draw the plant and fleet for this configuration. The generation seed
    depends only on the master seed, so variations redraw with the same
    stream and differ only through their ranges.
    """
    seed = derive_seed(config.run.master_seed, "system")
    model, sensors = generate_system(seed, config=config.generation())
    budget = budget_from_config(config.link)
    energies = fleet_energy(budget, sensors, config.link.calibrate_tx_power)
    return SystemRealization(model=model, sensors=attach_energies(sensors, energies), budget=budget,
                             energies=energies, seed=seed, variation=config.variation.name)


def make_env_config(config: ExperimentConfig, system: SystemRealization) -> EnvConfig:
    return EnvConfig.from_settings(system.model, system.sensors, system.budget, config.env,
                                   seed=derive_seed(config.run.master_seed, "env"),
                                   calibrate_tx_power=config.link.calibrate_tx_power,
                                   energies=system.energies)


def env_factory(env_config: EnvConfig) -> Callable[[int], SchedulingEnv]:
    def make(index: int) -> SchedulingEnv:
        return SchedulingEnv(env_config)
    return make


def run_training(config: ExperimentConfig, system: Optional[SystemRealization] = None) -> TrainResult:
    system = system or build_system(config)
    env_config = make_env_config(config, system)
    return train(env_factory(env_config), config.ppo, derive_seed(config.run.master_seed, "ppo"))


def resolve_policies(names: Sequence[str], actor: Optional[Mlp] = None,
                     deterministic: bool = True) -> List[SchedulingPolicy]:
    """Policy objects for `names`; 'all' expands to the baselines plus ppo when an actor is given."""
    expanded: List[str] = []
    for name in names:
        if name == "all":
            expanded.extend(BASELINE_POLICIES + (("ppo",) if actor is not None else ()))
        else:
            expanded.append(name)
    seen = list(dict.fromkeys(expanded))
    return [build_policy(name, actor, deterministic) for name in seen]


def run_evaluation(config: ExperimentConfig, policies: Sequence[SchedulingPolicy],
                   system: Optional[SystemRealization] = None) -> List[EvaluationResult]:
    """Evaluate every policy on the same n_runs truth seeds."""
    system = system or build_system(config)
    env_config = make_env_config(config, system)
    seed = derive_seed(config.run.master_seed, "evaluation")
    return [evaluate(policy, env_config, config.run.n_runs, seed, config.run.workers) for policy in policies]


def run_sweep(config: ExperimentConfig, policies: Sequence[SchedulingPolicy],
              variations: Optional[Sequence[str]] = None) -> List[Tuple[str, EvaluationResult]]:
    """
    One evaluation cell per (variation, policy). Cells run on up to
    `run.workers` threads and are reduced in grid order.
    """
    names = list(variations) if variations else list(PARAMETER_VARIATIONS)
    cells = [(name, policy) for name in names for policy in policies]
    systems: Dict[str, Tuple[ExperimentConfig, SystemRealization]] = {}
    for name in names:
        varied = config.with_variation(name)
        systems[name] = (varied, build_system(varied))

    def run_cell(cell: Tuple[str, SchedulingPolicy]) -> Tuple[str, EvaluationResult]:
        name, policy = cell
        varied, system = systems[name]
        env_config = make_env_config(varied, system)
        seed = derive_seed(config.run.master_seed, "evaluation")
        return name, evaluate(policy, env_config, config.run.n_runs, seed)

    if config.run.workers > 1:
        with ThreadPoolExecutor(max_workers=config.run.workers) as pool:
            results = list(pool.map(run_cell, cells))
    else:
        results = [run_cell(cell) for cell in cells]
    _logger.success(f"sweep finished: {len(names)} variations x {len(policies)} policies")
    return results


def stability_report(config: ExperimentConfig, system: Optional[SystemRealization] = None) -> StabilityReport:
    system = system or build_system(config)
    split = spectral_split(system.model.A)
    return check_feasibility(system.sensors, split, rng=make_rng(config.run.master_seed, "stability"))


DELAY_STATS_COLUMNS = ("sensor", "sample_prob", "theory_mean_age", "empirical_mean_age", "n_age_obs",
                       "selected_mean_delay", "n_selected")


def delay_statistics(config: ExperimentConfig, policy: SchedulingPolicy,
                     system: Optional[SystemRealization] = None) -> List[Dict[str, float]]:
    """
    Per-sensor age of the latest held sample at every decision slot, against
    the geometric-sampling mean (1 - p_i) / p_i, plus the delays of the
    samples `policy` actually collected.
    """
    system = system or build_system(config)
    env_config = make_env_config(config, system)
    seed = derive_seed(config.run.master_seed, "evaluation")
    ages: Dict[int, List[int]] = {s.id: [] for s in system.sensors}
    selected: Dict[int, List[float]] = {s.id: [] for s in system.sensors}
    env = SchedulingEnv(env_config)
    for run in range(config.run.n_runs):
        rng = policy_rng(seed, policy, run)
        state = env.reset_state(truth_seed(seed, run))
        while not env.done:
            for sid, age in env.latest_sample_ages().items():
                if age is not None:
                    ages[sid].append(age)
            outcome = env.transition(policy.act(env, state, rng))
            if outcome.info.had_sample:
                selected[outcome.info.action].append(outcome.info.delay)
            state = outcome.next_state

    rows = []
    for s in system.sensors:
        p = s.sample_prob
        rows.append({
            "sensor": s.id,
            "sample_prob": p,
            "theory_mean_age": (1.0 - p) / p if p > 0.0 else float("inf"),
            "empirical_mean_age": float(np.mean(ages[s.id])) if ages[s.id] else float("nan"),
            "n_age_obs": len(ages[s.id]),
            "selected_mean_delay": float(np.mean(selected[s.id])) if selected[s.id] else float("nan"),
            "n_selected": len(selected[s.id]),
        })
    return rows


def episode_transcript(config: ExperimentConfig, policy: SchedulingPolicy, run: int = 0,
                       system: Optional[SystemRealization] = None) -> List[Dict[str, float]]:
    """Step-by-step record of evaluation run `run` under `policy`."""
    if run < 0:
        raise UsageError(f"run index must be >= 0, got {run}")
    system = system or build_system(config)
    env = SchedulingEnv(make_env_config(config, system))
    seed = derive_seed(config.run.master_seed, "evaluation")
    rng = policy_rng(seed, policy, run)
    state = env.reset_state(truth_seed(seed, run))
    while not env.done:
        state = env.transition(policy.act(env, state, rng)).next_state
    return env.transcript_rows()
