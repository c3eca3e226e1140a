"""
Proximal policy optimization for the scheduling MDP.

Separate actor (logits over 0..M) and critic (scalar value) networks are
trained jointly on L = L_clip + c_v L_value - beta_p H. Rollouts come from
n_envs environments stepped in lockstep for n_steps each; episodes end by
truncation at the horizon and restart in place.
"""

from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from ..config import PpoConfig
from ..errors import PolicyUpdateError, TrainingDivergedError, UsageError
from ..logger import get_logger
from ..mdp.scheduling_env import SchedulingEnv
from ..utils import derive_seed, make_rng
from .autodiff_nn import AdamState, Gradients, Mlp, adam_step, backward, forward, init_mlp

_logger = get_logger("ppo")

ADV_NORM_EPS = 1e-8

EnvFactory = Callable[[int], SchedulingEnv]


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def categorical_entropy(logits: np.ndarray) -> np.ndarray:
    logp = log_softmax(logits)
    return -np.sum(np.exp(logp) * logp, axis=-1)


def compute_gae(rewards, values, dones, gamma: float, lam: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Generalized advantage estimation over a rollout.

    Args:
        rewards: (T,) or (T, n_envs)
        values: (T + 1,) or (T + 1, n_envs); the last row bootstraps the tail
        dones: like rewards; dones[t] ends the episode after step t
        gamma: Discount factor
        lam: GAE lambda

    Returns:
        (advantages, returns) with returns = advantages + values[:T]
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    horizon = rewards.shape[0]
    if values.shape[0] != horizon + 1 or values.shape[1:] != rewards.shape[1:] or dones.shape != rewards.shape:
        raise UsageError(f"GAE inputs misaligned: rewards {rewards.shape}, values {values.shape}, dones {dones.shape}")
    advantages = np.zeros_like(rewards)
    running = np.zeros(rewards.shape[1:])
    for t in range(horizon - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * live - values[t]
        running = delta + gamma * lam * live * running
        advantages[t] = running
    return advantages, advantages + values[:horizon]


@dataclass(eq=False)
class RolloutBatch:
    """
    Flattened (env, step) samples of one rollout; advantages and returns are
    filled by GAE.
    """
    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self) -> int:
        return self.actions.shape[0]

    def subset(self, idx: np.ndarray) -> "RolloutBatch":
        return RolloutBatch(*(getattr(self, name)[idx] for name in (
            "obs", "actions", "log_probs", "rewards", "values", "dones", "advantages", "returns")))


@dataclass(frozen=True)
class LossDiagnostics:
    total_loss: float
    policy_loss: float
    value_loss: float
    entropy: float
    approx_kl: float
    clip_fraction: float


@dataclass(eq=False)
class PpoLossResult:
    loss: float
    diagnostics: LossDiagnostics
    actor_grads: Optional[Gradients] = None
    critic_grads: Optional[Gradients] = None


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + ADV_NORM_EPS)


def ppo_loss(minibatch: RolloutBatch, actor: Mlp, critic: Mlp, config: PpoConfig,
             compute_grads: bool = True) -> PpoLossResult:
    """
    Clipped-surrogate loss of a minibatch and, optionally, its exact
    gradients for both networks.

    Raises:
        PolicyUpdateError: probability ratios are not finite
    """
    n = len(minibatch)
    if n == 0:
        raise UsageError("ppo_loss needs a nonempty minibatch")
    adv = normalize_advantages(minibatch.advantages) if config.normalize_advantages else minibatch.advantages

    logits, actor_tape = forward(actor, minibatch.obs)
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    rows = np.arange(n)
    new_logp = logp_all[rows, minibatch.actions]
    log_ratio = new_logp - minibatch.log_probs
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.exp(log_ratio)
    if not np.all(np.isfinite(ratio)):
        bad = int(np.sum(~np.isfinite(ratio)))
        raise PolicyUpdateError(f"{bad} non-finite probability ratio(s) in a minibatch of {n}; update aborted")

    eps = config.clip_coef
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    policy_loss = -float(np.mean(np.minimum(unclipped, clipped)))
    entropy_rows = -np.sum(probs * logp_all, axis=1)
    entropy = float(np.mean(entropy_rows))

    value_out, critic_tape = forward(critic, minibatch.obs)
    values = value_out[:, 0]
    value_err = values - minibatch.returns
    value_loss = float(np.mean(value_err ** 2))

    total = policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy
    diagnostics = LossDiagnostics(
        total_loss=total, policy_loss=policy_loss, value_loss=value_loss, entropy=entropy,
        approx_kl=float(np.mean((ratio - 1.0) - log_ratio)),
        clip_fraction=float(np.mean(np.abs(ratio - 1.0) > eps)),
    )
    if not compute_grads:
        return PpoLossResult(total, diagnostics)

    # d(-min(rA, clip(r)A))/d(log pi_a): only where the unclipped term is selected
    dlogp = np.where(unclipped <= clipped, -adv * ratio, 0.0) / n
    one_hot = np.zeros_like(probs)
    one_hot[rows, minibatch.actions] = 1.0
    grad_logits = dlogp[:, None] * (one_hot - probs)
    grad_logits += (config.entropy_coef / n) * probs * (logp_all + entropy_rows[:, None])
    grad_values = (config.value_coef * 2.0 / n) * value_err[:, None]
    return PpoLossResult(total, diagnostics, backward(actor_tape, grad_logits), backward(critic_tape, grad_values))


@dataclass(frozen=True)
class IterationStats:
    iteration: int
    env_steps: int
    mean_episode_reward: float
    policy_loss: float
    value_loss: float
    entropy: float
    approx_kl: float
    clip_fraction: float
    grad_norm: float

    def row(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class TrainResult:
    actor: Mlp
    critic: Mlp
    seed: int
    curve: List[IterationStats] = field(default_factory=list)


def _sample_actions(logits: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    logp = log_softmax(logits)
    cdf = np.cumsum(np.exp(logp), axis=1)
    u = rng.random(logits.shape[0]) * cdf[:, -1]
    actions = np.minimum((cdf < u[:, None]).sum(axis=1), logits.shape[1] - 1)
    return actions, logp[np.arange(logits.shape[0]), actions]


class _RolloutCollector:
    """Steps n_envs environments in lockstep with a frozen actor."""

    def __init__(self, env_factory: EnvFactory, config: PpoConfig, seed: int):
        self.config = config
        self.envs = [env_factory(e) for e in range(config.n_envs)]
        self.obs = np.stack([env.reset_state(derive_seed(seed, f"rollout/env{e}")).encode()
                             for e, env in enumerate(self.envs)])
        self.episode_returns = np.zeros(config.n_envs)
        self.finished: List[float] = []

    def collect(self, actor: Mlp, critic: Mlp, rng: np.random.Generator) -> RolloutBatch:
        steps, n_envs = self.config.n_steps, self.config.n_envs
        obs_buf = np.zeros((steps, n_envs, self.obs.shape[1]))
        act_buf = np.zeros((steps, n_envs), dtype=np.int64)
        logp_buf = np.zeros((steps, n_envs))
        rew_buf = np.zeros((steps, n_envs))
        done_buf = np.zeros((steps, n_envs))
        val_buf = np.zeros((steps + 1, n_envs))
        self.finished = []

        for t in range(steps):
            logits = forward(actor, self.obs)[0]
            actions, logp = _sample_actions(logits, rng)
            obs_buf[t], act_buf[t], logp_buf[t] = self.obs, actions, logp
            val_buf[t] = forward(critic, self.obs)[0][:, 0]
            for e, env in enumerate(self.envs):
                outcome = env.transition(int(actions[e]))
                rew_buf[t, e] = outcome.reward
                self.episode_returns[e] += outcome.reward
                if outcome.done:
                    done_buf[t, e] = 1.0
                    self.finished.append(self.episode_returns[e])
                    self.episode_returns[e] = 0.0
                    self.obs[e] = env.reset_state().encode()
                else:
                    self.obs[e] = outcome.next_state.encode()
        val_buf[steps] = forward(critic, self.obs)[0][:, 0]

        if np.mean(np.abs(val_buf)) > self.config.divergence_threshold or not np.all(np.isfinite(val_buf)):
            raise TrainingDivergedError(
                f"mean |value| {np.mean(np.abs(val_buf)):.3g} exceeds {self.config.divergence_threshold:g}")

        adv, ret = compute_gae(rew_buf, val_buf, done_buf, self.config.gamma, self.config.gae_lambda)

        def flat(a: np.ndarray) -> np.ndarray:
            return a.reshape(steps * n_envs, *a.shape[2:])

        return RolloutBatch(obs=flat(obs_buf), actions=flat(act_buf), log_probs=flat(logp_buf),
                            rewards=flat(rew_buf), values=flat(val_buf[:steps]), dones=flat(done_buf),
                            advantages=flat(adv), returns=flat(ret))

    def mean_episode_reward(self, batch: RolloutBatch) -> float:
        if self.finished:
            return float(np.mean(self.finished))
        # no episode ended inside this rollout; scale the per-step mean to a horizon
        return float(np.mean(batch.rewards) * self.envs[0].config.horizon)


def train(env_factory: EnvFactory, config: PpoConfig, seed: int,
          on_iteration: Optional[Callable[[IterationStats], None]] = None) -> TrainResult:
    """
    Run PPO for `config.n_iterations` rollout/update cycles.

    Every random stream derives from `seed` through labelled sub-seeds, so a
    fixed seed reproduces the run bit for bit.

    Raises:
        TrainingDivergedError: value estimates blow up or parameters turn non-finite
        PolicyUpdateError: a minibatch produced non-finite probability ratios
    """
    collector = _RolloutCollector(env_factory, config, seed)
    obs_dim = collector.obs.shape[1]
    n_actions = collector.envs[0].action_space.n
    actor = init_mlp((obs_dim, *config.hidden_sizes, n_actions), make_rng(seed, "policy/actor"))
    critic = init_mlp((obs_dim, *config.hidden_sizes, 1), make_rng(seed, "policy/critic"))
    actor_opt, critic_opt = AdamState.for_mlp(actor), AdamState.for_mlp(critic)
    action_rng = make_rng(seed, "policy/actions")
    shuffle_rng = make_rng(seed, "policy/minibatches")
    result = TrainResult(actor=actor, critic=critic, seed=seed)

    _logger.info(f"training {config.n_iterations} iterations of {config.batch_size} samples "
                 f"({config.n_minibatches} minibatches x {config.update_epochs} epochs)")
    for iteration in range(1, config.n_iterations + 1):
        batch = collector.collect(actor, critic, action_rng)
        diagnostics: List[LossDiagnostics] = []
        grad_norms: List[float] = []
        for _ in range(config.update_epochs):
            order = shuffle_rng.permutation(len(batch))
            for idx in np.array_split(order, config.n_minibatches):
                if idx.size == 0:
                    continue
                step = ppo_loss(batch.subset(idx), actor, critic, config)
                adam_step(actor, step.actor_grads, actor_opt, config.learning_rate)
                adam_step(critic, step.critic_grads, critic_opt, config.learning_rate)
                diagnostics.append(step.diagnostics)
                grad_norms.append(step.actor_grads.global_norm())
        if not (actor.is_finite() and critic.is_finite()):
            raise TrainingDivergedError(f"non-finite network parameters after iteration {iteration}")

        stats = IterationStats(
            iteration=iteration,
            env_steps=iteration * config.batch_size,
            mean_episode_reward=collector.mean_episode_reward(batch),
            policy_loss=float(np.mean([d.policy_loss for d in diagnostics])),
            value_loss=float(np.mean([d.value_loss for d in diagnostics])),
            entropy=float(np.mean([d.entropy for d in diagnostics])),
            approx_kl=float(np.mean([d.approx_kl for d in diagnostics])),
            clip_fraction=float(np.mean([d.clip_fraction for d in diagnostics])),
            grad_norm=float(np.mean(grad_norms)),
        )
        result.curve.append(stats)
        _logger.info(f"iter {iteration}/{config.n_iterations} reward {stats.mean_episode_reward:.4f} "
                     f"pi_loss {stats.policy_loss:.4f} v_loss {stats.value_loss:.4f} "
                     f"entropy {stats.entropy:.4f} kl {stats.approx_kl:.2e} clip {stats.clip_fraction:.3f} "
                     f"grad {stats.grad_norm:.3e}")
        if on_iteration is not None:
            on_iteration(stats)
    _logger.success(f"training finished after {config.n_iterations * config.batch_size} environment steps")
    return result
