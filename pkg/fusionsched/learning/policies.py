"""
Scheduling policies and the paired-seed evaluation loop.

Every policy answers `act(env, state, rng)` with an action in 0..M, where 0
keeps all sensors silent. The greedy baseline reads the estimator's buffer
and the sensors' held samples directly, information no deployed scheduler
has; it is reported as `greedy_oracle` with `privileged = True`.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..entities import DelayedMeasurement
from ..errors import UsageError
from ..estimation.delay_fusion import DelayAwareEstimator
from ..logger import get_logger
from ..mdp.scheduling_env import EnvConfig, MdpState, SchedulingEnv
from ..system.link_energy import EnergyTable
from ..utils import derive_seed
from .autodiff_nn import Mlp, predict

_logger = get_logger("policies")


def random_policy(state: MdpState, rng: np.random.Generator) -> int:
    """Uniform over {0..M}, ignoring the state."""
    return int(rng.integers(0, state.n_sensors + 1))


def idle_policy(state: MdpState, rng: Optional[np.random.Generator] = None) -> int:
    return 0


def greedy_policy(estimator: DelayAwareEstimator, candidates: Sequence[DelayedMeasurement],
                  energies: EnergyTable, beta: float, trace_p0: float) -> int:
    """
    Pick the held sample with the best information per joule,
    zeta_i = Delta_i / (beta E^i), among samples whose normalized gain
    Delta_i / trace(P_0) exceeds their normalized cost beta E^i / max E.

    Delta_i comes from a dry run of the delayed-fusion pipeline on the
    estimator's buffer; nothing is committed. Returns 0 when no sample pays
    for itself. Ties go to the lower sensor id.
    """
    prior_trace = estimator.current_prior.trace
    best_action, best_score = 0, -np.inf
    for meas in sorted(candidates, key=lambda m: m.sensor_id):
        # Evicted samples would only be dropped on delivery.
        if estimator.buffer.entry_at(meas.gen_time) is None:
            continue
        fused = estimator.dry_run(meas)
        gain = prior_trace - fused.trace
        cost = beta * energies.normalized(meas.sensor_id)
        if gain / trace_p0 <= cost:
            continue
        score = gain if beta == 0.0 else gain / (beta * energies.energy_of(meas.sensor_id))
        if score > best_score:
            best_action, best_score = meas.sensor_id, score
    return best_action


class SchedulingPolicy:
    name = "policy"
    privileged = False

    def act(self, env: SchedulingEnv, state: MdpState, rng: np.random.Generator) -> int:
        raise NotImplementedError


class IdlePolicy(SchedulingPolicy):
    name = "idle"

    def act(self, env: SchedulingEnv, state: MdpState, rng: np.random.Generator) -> int:
        return idle_policy(state, rng)


class RandomPolicy(SchedulingPolicy):
    name = "random"

    def act(self, env: SchedulingEnv, state: MdpState, rng: np.random.Generator) -> int:
        return random_policy(state, rng)


class GreedyPolicy(SchedulingPolicy):
    name = "greedy_oracle"
    privileged = True

    def act(self, env: SchedulingEnv, state: MdpState, rng: np.random.Generator) -> int:
        return greedy_policy(env.estimator, env.pending_measurements(), env.energies,
                             env.config.beta, env.trace_p0)


class PpoPolicy(SchedulingPolicy):
    """Trained actor; argmax of the logits, or a sample when `deterministic` is off."""
    name = "ppo"

    def __init__(self, actor: Mlp, deterministic: bool = True):
        self.actor = actor
        self.deterministic = deterministic

    def act(self, env: SchedulingEnv, state: MdpState, rng: np.random.Generator) -> int:
        logits = predict(self.actor, state.encode())
        if self.deterministic:
            return int(np.argmax(logits))
        probs = np.exp(logits - np.max(logits))
        probs /= probs.sum()
        return int(rng.choice(probs.size, p=probs))


def build_policy(name: str, actor: Optional[Mlp] = None, deterministic: bool = True) -> SchedulingPolicy:
    if name == "idle":
        return IdlePolicy()
    if name == "random":
        return RandomPolicy()
    if name in ("greedy", "greedy_oracle"):
        return GreedyPolicy()
    if name == "ppo":
        if actor is None:
            raise UsageError("the ppo policy needs a trained actor (pass --checkpoint)")
        return PpoPolicy(actor, deterministic)
    raise UsageError(f"unknown policy '{name}'; expected idle, random, greedy or ppo")


@dataclass(frozen=True, eq=False)
class RunRecord:
    run: int
    objective: float
    trace_final: float
    energy_total: float
    traces: np.ndarray
    energies: np.ndarray
    delays: Dict[int, List[float]]
    stale_drops: int


@dataclass(frozen=True, eq=False)
class EvaluationResult:
    """
    Per-run Monte Carlo outcomes of one policy. The objective of a run is
    (1/T) sum_k [trace(P_k)/trace(P_0) + beta e_hat_k].
    """
    policy: str
    seed: int
    runs: List[RunRecord]
    privileged: bool = False

    @property
    def n_runs(self) -> int:
        return len(self.runs)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.runs])

    @property
    def mean_objective(self) -> float:
        return float(np.mean(self.objectives))

    @property
    def std_objective(self) -> float:
        return float(np.std(self.objectives))

    @property
    def mean_trace_final(self) -> float:
        return float(np.mean([r.trace_final for r in self.runs]))

    @property
    def mean_energy_total(self) -> float:
        return float(np.mean([r.energy_total for r in self.runs]))

    def mean_trace_curve(self) -> np.ndarray:
        return np.mean([r.traces for r in self.runs], axis=0)

    def mean_energy_curve(self) -> np.ndarray:
        return np.mean([r.energies for r in self.runs], axis=0)


def run_episode(env: SchedulingEnv, policy: SchedulingPolicy, seed: int,
                rng: np.random.Generator, run: int = 0) -> RunRecord:
    """Play one full episode from `env.reset_state(seed)`."""
    state = env.reset_state(seed)
    outcome = None
    while outcome is None or not outcome.done:
        outcome = env.transition(policy.act(env, state, rng))
        state = outcome.next_state
    transcript = env.transcript
    beta = env.config.beta
    objective = float(np.mean([info.u_hat + beta * info.e_hat for info in transcript]))
    delays: Dict[int, List[float]] = {}
    for info in transcript:
        if info.had_sample:
            delays.setdefault(info.action, []).append(info.delay)
    return RunRecord(run=run, objective=objective, trace_final=transcript[-1].trace_P,
                     energy_total=float(sum(info.energy for info in transcript)),
                     traces=np.array([info.trace_P for info in transcript]),
                     energies=np.array([info.energy for info in transcript]),
                     delays=delays, stale_drops=env.stale_drops)


def truth_seed(master_seed: int, run: int) -> int:
    """Seed of run `run`'s truth, noise and sampling; shared by every policy."""
    return derive_seed(master_seed, f"truth/run{run}")


def policy_rng(master_seed: int, policy: SchedulingPolicy, run: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, f"policy/{policy.name}/run{run}"))


def evaluate(policy: SchedulingPolicy, env_config: EnvConfig, n_runs: int, seed: int,
             workers: int = 1) -> EvaluationResult:
    """
    Simulate `n_runs` episodes. Run i always uses the truth seed
    derive_seed(seed, "truth/run<i>"), so policies evaluated with the same
    seed see identical noise realizations.
    """
    if n_runs < 1:
        raise UsageError(f"n_runs must be >= 1, got {n_runs}")

    def one_run(run: int) -> RunRecord:
        env = SchedulingEnv(env_config)
        return run_episode(env, policy, truth_seed(seed, run), policy_rng(seed, policy, run), run)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(one_run, range(n_runs)))
    else:
        runs = [one_run(run) for run in range(n_runs)]
    result = EvaluationResult(policy=policy.name, seed=seed, runs=runs, privileged=policy.privileged)
    _logger.info(f"{policy.name}: objective {result.mean_objective:.6g} +/- {result.std_objective:.3g} "
                 f"over {n_runs} runs")
    return result
