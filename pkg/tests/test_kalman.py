"""
Test suite for fusionsched Kalman prediction and timely update
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from fusionsched.entities import BeliefKind, BeliefState, ProcessModel, SensorModel
from fusionsched.errors import ConfigurationError, UsageError
from fusionsched.estimation.kalman import (coast, kalman_gain, lyapunov_fixed_point, predict,
                                           riccati_fixed_point, update)
from fusionsched.system.linmodel import generate_system


def scalar_model(a=1.0, q=1.0):
    return ProcessModel(A=np.array([[a]]), Q=np.array([[q]]))


def scalar_sensor(c=1.0, r=1.0):
    return SensorModel(id=1, C=np.array([[c]]), R=np.array([[r]]), sample_prob=1.0, distance=100.0)


def random_prior(rng, n):
    g = rng.standard_normal((n, n))
    return BeliefState(mean=rng.standard_normal(n), cov=g @ g.T + 0.1 * np.eye(n), time=4, kind="prior")


@pytest.fixture
def rng():
    """Seeded generator for random instances"""
    return np.random.default_rng(1234)


class TestPredict:
    """Test cases for the time update"""

    def test_scalar_step(self):
        """Test A = Q = P = 1 gives P' = 2"""
        belief = BeliefState(mean=[1.0], cov=[[1.0]], time=0)
        prior = predict(belief, scalar_model())
        assert prior.cov[0, 0] == pytest.approx(2.0)
        assert prior.time == 1
        assert prior.kind is BeliefKind.PRIOR

    def test_zero_dynamics(self):
        """Test A = 0 gives exactly Q"""
        model = ProcessModel(A=np.zeros((2, 2)), Q=np.array([[2.0, 0.5], [0.5, 1.0]]))
        prior = predict(BeliefState(mean=[3.0, 4.0], cov=np.eye(2) * 7.0, time=2), model)
        assert np.array_equal(prior.cov, model.Q)
        assert np.array_equal(prior.mean, [0.0, 0.0])

    def test_matches_direct_products(self, rng):
        """Test cov' = A P A^T + Q entry by entry"""
        model, _ = generate_system(seed=3, n_states=5, n_sensors=1)
        belief = random_prior(rng, 5)
        prior = predict(belief, model)
        expected = np.zeros((5, 5))
        for i in range(5):
            for j in range(5):
                expected[i, j] = sum(model.A[i, a] * belief.cov[a, b] * model.A[j, b]
                                     for a in range(5) for b in range(5)) + model.Q[i, j]
        assert np.allclose(prior.cov, expected, atol=1e-12, rtol=1e-12)


class TestUpdate:
    """Test cases for the measurement update"""

    def test_scalar_half_gain(self):
        """Test P = C = R = 1 with y = x_hat gives K = 0.5"""
        prior = BeliefState(mean=[2.0], cov=[[1.0]], time=1, kind="prior")
        sensor = scalar_sensor()
        assert kalman_gain(prior.cov, sensor)[0, 0] == pytest.approx(0.5)
        post = update(prior, sensor, [2.0])
        assert post.cov[0, 0] == pytest.approx(0.5)
        assert post.mean[0] == pytest.approx(2.0)
        assert post.kind is BeliefKind.POSTERIOR

    def test_uninformative_measurement(self, rng):
        """Test R = 1e8 I leaves the belief nearly unchanged"""
        prior = random_prior(rng, 3)
        sensor = SensorModel(id=1, C=rng.standard_normal((2, 3)), R=np.eye(2) * 1e8,
                             sample_prob=1.0, distance=100.0)
        post = update(prior, sensor, rng.standard_normal(2))
        assert np.linalg.norm(post.cov - prior.cov) < 1e-6 * np.linalg.norm(prior.cov)

    @pytest.mark.parametrize("seed", range(20))
    def test_information_form(self, seed):
        """Test cov' = (P^-1 + C^T R^-1 C)^-1 on random instances"""
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, n + 1))
        prior = random_prior(rng, n)
        r = rng.standard_normal((m, m))
        sensor = SensorModel(id=1, C=rng.standard_normal((m, n)), R=r @ r.T + 0.1 * np.eye(m),
                             sample_prob=1.0, distance=100.0)
        post = update(prior, sensor, rng.standard_normal(m))
        info = np.linalg.inv(prior.cov) + sensor.C.T @ np.linalg.solve(sensor.R, sensor.C)
        expected = np.linalg.inv(info)
        assert np.linalg.norm(post.cov - expected) <= 1e-8 * np.linalg.norm(expected)
        assert post.trace <= prior.trace + 1e-9

    def test_joseph_form_agrees(self, rng):
        """Test the Joseph form gives the same covariance with the optimal gain"""
        prior = random_prior(rng, 4)
        sensor = SensorModel(id=1, C=rng.standard_normal((2, 4)), R=np.eye(2), sample_prob=1.0, distance=100.0)
        y = rng.standard_normal(2)
        plain = update(prior, sensor, y)
        joseph = update(prior, sensor, y, joseph=True)
        assert np.allclose(plain.cov, joseph.cov, atol=1e-10)
        assert np.allclose(plain.mean, joseph.mean)

    def test_requires_prior(self):
        """Test updating a posterior is a usage error"""
        post = BeliefState(mean=[0.0], cov=[[1.0]], time=0)
        with pytest.raises(UsageError):
            update(post, scalar_sensor(), [0.0])

    def test_wrong_measurement_length(self):
        """Test a y of the wrong size is a usage error"""
        prior = BeliefState(mean=[0.0], cov=[[1.0]], time=0, kind="prior")
        with pytest.raises(UsageError):
            update(prior, scalar_sensor(), [0.0, 1.0])

    def test_coast(self):
        """Test coasting keeps moments and flips the kind"""
        prior = BeliefState(mean=[1.0], cov=[[3.0]], time=5, kind="prior")
        post = coast(prior)
        assert post.kind is BeliefKind.POSTERIOR
        assert post.cov[0, 0] == 3.0 and post.time == 5


class TestFixedPoints:
    """Test cases for steady-state covariance helpers"""

    def test_scalar_riccati_convergence(self):
        """Test iterating predict/update reaches the closed-form scalar DARE root"""
        a, q, c, r = 1.2, 1.0, 1.0, 2.0
        model, sensor = scalar_model(a, q), scalar_sensor(c, r)
        belief = BeliefState(mean=[0.0], cov=[[10.0]], time=0)
        for _ in range(500):
            prior = predict(belief, model)
            belief = update(prior, sensor, [0.0])
        # P = a^2 P r / (P + r) + q  ->  P^2 + (r - a^2 r - q) P - q r = 0
        b = r - a * a * r - q
        closed = (-b + np.sqrt(b * b + 4 * q * r)) / 2.0
        assert prior.cov[0, 0] == pytest.approx(closed, abs=1e-6)
        assert riccati_fixed_point(model, sensor)[0, 0] == pytest.approx(closed, abs=1e-6)

    def test_lyapunov(self):
        """Test the Lyapunov fixed point is invariant under prediction"""
        model = ProcessModel(A=np.array([[0.5, 0.2], [0.0, 0.8]]), Q=np.eye(2))
        P = lyapunov_fixed_point(model)
        again = predict(BeliefState(mean=[0.0, 0.0], cov=P, time=0), model)
        assert np.allclose(again.cov, P, atol=1e-10)

    def test_lyapunov_unstable(self):
        """Test no Lyapunov fixed point exists for rho(A) >= 1"""
        with pytest.raises(ConfigurationError):
            lyapunov_fixed_point(scalar_model(1.1))
