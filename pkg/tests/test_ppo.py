"""
Test suite for the fusionsched PPO trainer
Covers GAE, the clipped surrogate loss and its gradients, and short
deterministic training runs on a tiny system.
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from fusionsched.config import GenerationConfig, LinkConfig, PpoConfig
from fusionsched.errors import PolicyUpdateError, TrainingDivergedError, UsageError
from fusionsched.learning.autodiff_nn import Mlp, init_mlp, predict
from fusionsched.learning.ppo import (RolloutBatch, categorical_entropy, compute_gae, log_softmax,
                                      normalize_advantages, ppo_loss, train)
from fusionsched.mdp.scheduling_env import EnvConfig, SchedulingEnv
from fusionsched.system.link_energy import budget_from_config
from fusionsched.system.linmodel import generate_system
from fusionsched.utils import make_rng


def tiny_ppo(**overrides):
    values = dict(n_envs=2, n_steps=8, n_minibatches=4, update_epochs=2, total_steps=32, hidden_sizes=(8,))
    values.update(overrides)
    return PpoConfig(**values)


@pytest.fixture
def env_factory():
    """Factory of small stable scheduling environments"""
    gen = GenerationConfig(n_states=2, n_sensors=3, rescale_mode="spectral_radius", rescale_target=0.9)
    model, sensors = generate_system(seed=31, config=gen)
    config = EnvConfig(model=model, sensors=sensors, budget=budget_from_config(LinkConfig()), horizon=10)
    return lambda index: SchedulingEnv(config)


def make_batch(rng, n=12, obs_dim=4, n_actions=3, actor=None):
    obs = rng.standard_normal((n, obs_dim))
    actions = rng.integers(0, n_actions, size=n)
    if actor is not None:
        logp = log_softmax(predict(actor, obs))[np.arange(n), actions]
        log_probs = logp + 0.05 * rng.standard_normal(n)
    else:
        log_probs = np.log(np.full(n, 1.0 / n_actions))
    values = rng.standard_normal(n)
    advantages = rng.standard_normal(n)
    return RolloutBatch(obs=obs, actions=actions, log_probs=log_probs, rewards=np.zeros(n), values=values,
                        dones=np.zeros(n), advantages=advantages, returns=advantages + values)


class TestGae:
    """Test cases for generalized advantage estimation"""

    def test_single_step(self):
        """Test one step with zero values gives A = r"""
        adv, ret = compute_gae([2.5], [0.0, 0.0], [0.0], gamma=0.9, lam=0.95)
        assert adv[0] == pytest.approx(2.5)
        assert ret[0] == pytest.approx(2.5)

    def test_lambda_zero_is_td(self):
        """Test lambda = 0 collapses to one-step TD errors"""
        r = np.array([1.0, -0.5, 2.0])
        v = np.array([0.3, 0.1, -0.2, 0.4])
        adv, _ = compute_gae(r, v, np.zeros(3), gamma=0.9, lam=0.0)
        assert np.allclose(adv, r + 0.9 * v[1:] - v[:-1])

    def test_hand_unrolled(self):
        """Test a three-step case against the hand-unrolled recursion"""
        adv, ret = compute_gae([1.0, 1.0, 1.0], [0.5, 0.5, 0.5, 0.0], [0.0, 0.0, 0.0], gamma=0.9, lam=0.95)
        assert np.allclose(adv, [2.1277625, 1.3775, 0.5])
        assert np.allclose(ret, adv + 0.5)

    def test_done_cuts_bootstrap(self):
        """Test a done flag stops both bootstrapping and accumulation"""
        adv, _ = compute_gae([1.0, 1.0], [0.0, 0.0, 10.0], [1.0, 0.0], gamma=0.9, lam=0.95)
        assert adv[0] == pytest.approx(1.0)
        assert adv[1] == pytest.approx(1.0 + 9.0)

    def test_per_env_columns(self):
        """Test multi-env inputs are handled column by column"""
        r = np.array([[1.0, 0.0], [1.0, 2.0]])
        v = np.zeros((3, 2))
        adv, _ = compute_gae(r, v, np.zeros((2, 2)), gamma=1.0, lam=1.0)
        assert np.allclose(adv, [[2.0, 2.0], [1.0, 2.0]])

    def test_misaligned(self):
        """Test values must have one more row than rewards"""
        with pytest.raises(UsageError):
            compute_gae([1.0, 2.0], [0.0, 0.0], [0.0, 0.0], gamma=0.9, lam=0.9)


class TestLoss:
    """Test cases for the clipped surrogate objective"""

    def test_normalized_advantages(self):
        """Test per-minibatch normalization gives mean 0 and std 1"""
        adv = normalize_advantages(np.random.default_rng(0).normal(3.0, 5.0, size=64))
        assert abs(adv.mean()) < 1e-6
        assert 0.99 <= adv.std() <= 1.01

    def test_uniform_entropy(self):
        """Test a uniform policy over 21 actions has entropy ln 21"""
        assert categorical_entropy(np.zeros(21)) == pytest.approx(np.log(21.0))
        assert np.log(21.0) == pytest.approx(3.0445, abs=1e-4)

    def test_unit_ratio(self):
        """Test identical old and new policies give L_clip = -mean(A)"""
        rng = np.random.default_rng(0)
        actor = init_mlp((4, 5, 3), rng)
        critic = init_mlp((4, 5, 1), rng)
        batch = make_batch(rng, actor=actor)
        batch.log_probs = log_softmax(predict(actor, batch.obs))[np.arange(len(batch)), batch.actions]
        result = ppo_loss(batch, actor, critic, PpoConfig(normalize_advantages=False), compute_grads=False)
        assert result.diagnostics.policy_loss == pytest.approx(-np.mean(batch.advantages))
        assert result.diagnostics.approx_kl == pytest.approx(0.0, abs=1e-12)
        assert result.diagnostics.clip_fraction == 0.0

    def test_clipping_arithmetic(self):
        """Test ratio 1.5 with A = 1 contributes min(1.5, 1.18)"""
        actor = Mlp((1, 2), [np.zeros((1, 2))], [np.zeros(2)])
        critic = Mlp((1, 1), [np.zeros((1, 1))], [np.zeros(1)])
        batch = RolloutBatch(obs=np.zeros((1, 1)), actions=np.array([0]),
                             log_probs=np.array([np.log(0.5) - np.log(1.5)]), rewards=np.zeros(1),
                             values=np.zeros(1), dones=np.zeros(1), advantages=np.ones(1), returns=np.zeros(1))
        result = ppo_loss(batch, actor, critic, PpoConfig(normalize_advantages=False), compute_grads=False)
        assert result.diagnostics.policy_loss == pytest.approx(-1.18)
        assert result.diagnostics.clip_fraction == 1.0

    def test_total_composition(self):
        """Test the total is L_clip + c_v L_value - beta_p H"""
        rng = np.random.default_rng(1)
        actor, critic = init_mlp((4, 5, 3), rng), init_mlp((4, 5, 1), rng)
        config = PpoConfig()
        d = ppo_loss(make_batch(rng, actor=actor), actor, critic, config, compute_grads=False).diagnostics
        assert d.total_loss == pytest.approx(d.policy_loss + 0.5 * d.value_loss - 0.01 * d.entropy)

    def test_non_finite_ratio(self):
        """Test non-finite ratios abort the update"""
        rng = np.random.default_rng(2)
        actor, critic = init_mlp((4, 5, 3), rng), init_mlp((4, 5, 1), rng)
        batch = make_batch(rng)
        batch.log_probs = np.full(len(batch), -np.inf)
        with pytest.raises(PolicyUpdateError):
            ppo_loss(batch, actor, critic, PpoConfig())

    @pytest.mark.parametrize("seed", range(3))
    def test_gradients_match_finite_differences(self, seed):
        """Test analytic loss gradients against central differences"""
        rng = np.random.default_rng(seed)
        actor, critic = init_mlp((4, 5, 3), rng), init_mlp((4, 5, 1), rng)
        batch = make_batch(rng, actor=actor)
        config = PpoConfig(entropy_coef=0.05)
        result = ppo_loss(batch, actor, critic, config)
        for net, grads in ((actor, result.actor_grads), (critic, result.critic_grads)):
            for p, g in zip(net.parameters(), grads.as_list()):
                for idx in np.ndindex(p.shape):
                    saved = p[idx]
                    p[idx] = saved + 1e-6
                    plus = ppo_loss(batch, actor, critic, config, compute_grads=False).loss
                    p[idx] = saved - 1e-6
                    minus = ppo_loss(batch, actor, critic, config, compute_grads=False).loss
                    p[idx] = saved
                    numeric = (plus - minus) / 2e-6
                    assert abs(numeric - g[idx]) <= 1e-4 * max(1.0, abs(numeric))

    def test_empty_minibatch(self):
        """Test an empty minibatch is a usage error"""
        rng = np.random.default_rng(3)
        actor, critic = init_mlp((4, 5, 3), rng), init_mlp((4, 5, 1), rng)
        batch = make_batch(rng).subset(np.array([], dtype=int))
        with pytest.raises(UsageError):
            ppo_loss(batch, actor, critic, PpoConfig())


class TestTrain:
    """Test cases for the training loop"""

    def test_curve_and_shapes(self, env_factory):
        """Test one curve entry per iteration and correctly sized networks"""
        seen = []
        result = train(env_factory, tiny_ppo(), seed=1, on_iteration=seen.append)
        assert len(result.curve) == 2 == len(seen)
        assert result.curve[-1].env_steps == 32
        assert result.actor.layer_sizes == (2 + 20, 8, 4)
        assert result.critic.layer_sizes == (2 + 20, 8, 1)
        assert all(np.isfinite(s.grad_norm) and s.grad_norm > 0.0 for s in result.curve)

    def test_bit_reproducible(self, env_factory):
        """Test a fixed seed reproduces the trained parameters exactly"""
        a = train(env_factory, tiny_ppo(), seed=5)
        b = train(env_factory, tiny_ppo(), seed=5)
        assert np.array_equal(a.actor.flat(), b.actor.flat())
        assert np.array_equal(a.critic.flat(), b.critic.flat())
        assert [s.row() for s in a.curve] == [s.row() for s in b.curve]

    def test_zero_learning_rate(self, env_factory):
        """Test lr = 0 leaves the initial parameters untouched"""
        result = train(env_factory, tiny_ppo(learning_rate=0.0), seed=2)
        initial = init_mlp((22, 8, 4), make_rng(2, "policy/actor"))
        assert np.array_equal(result.actor.flat(), initial.flat())

    def test_zero_budget(self, env_factory):
        """Test a zero step budget trains nothing"""
        assert train(env_factory, tiny_ppo(total_steps=0), seed=0).curve == []

    def test_entropy_dominates(self, env_factory):
        """Test a huge entropy bonus keeps the policy near uniform"""
        config = tiny_ppo(entropy_coef=1e3, learning_rate=0.05, update_epochs=20)
        result = train(env_factory, config, seed=3)
        env = env_factory(0)
        obs = env.reset_state(seed=0).encode()
        assert categorical_entropy(predict(result.actor, obs)) > 0.95 * np.log(4)

    def test_divergence_guard(self, env_factory):
        """Test value estimates above the threshold halt training"""
        with pytest.raises(TrainingDivergedError):
            train(env_factory, tiny_ppo(divergence_threshold=0.0), seed=0)
