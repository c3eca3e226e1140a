"""
Test suite for fusionsched plant, sensor fleet and link energy model
"""

import math
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from fusionsched.config import GenerationConfig, LinkConfig
from fusionsched.entities import ProcessModel, SensorModel
from fusionsched.errors import ConfigurationError
from fusionsched.system.link_energy import (attach_energies, budget_from_config, calibrated_tx_power,
                                            channel_gain, db_to_linear, dbm_per_hz_to_watts, fleet_energy,
                                            snr, tx_energy)
from fusionsched.system.linmodel import (GroundTruth, Sample, TruthSimulator, generate_system, maybe_sample,
                                         simulate_trajectory, step_truth)
from fusionsched.utils import psd_sqrt


@pytest.fixture
def budget():
    """Link budget built from the default table values"""
    return budget_from_config(LinkConfig())


@pytest.fixture
def small_system():
    """A random 3-state, 4-sensor system"""
    return generate_system(seed=11, n_states=3, n_sensors=4)


class TestGenerateSystem:
    """Test cases for random system generation"""

    def test_shapes_and_ids(self, small_system):
        """Test dimensions, ids and per-sensor measurement sizes"""
        model, sensors = small_system
        assert model.A.shape == (3, 3)
        assert [s.id for s in sensors] == [1, 2, 3, 4]
        for s in sensors:
            assert 1 <= s.meas_dim <= 3
            assert s.C.shape == (s.meas_dim, 3)
            assert s.R.shape == (s.meas_dim, s.meas_dim)

    def test_deterministic(self):
        """Test the same seed regenerates the same system"""
        m1, s1 = generate_system(seed=5, n_states=4, n_sensors=6)
        m2, s2 = generate_system(seed=5, n_states=4, n_sensors=6)
        assert np.array_equal(m1.A, m2.A)
        assert np.array_equal(m1.Q, m2.Q)
        for a, b in zip(s1, s2):
            assert np.array_equal(a.C, b.C)
            assert a.sample_prob == b.sample_prob

    def test_ranges_respected(self):
        """Test drawn values stay inside the configured ranges"""
        model, sensors = generate_system(seed=3)
        assert np.all((model.A >= 0.0) & (model.A <= 1.0))
        for s in sensors:
            assert 0.4 <= s.sample_prob <= 0.6
            assert 100.0 <= s.distance <= 300.0
            assert np.all((s.C >= -1.0) & (s.C <= 1.0))

    def test_covariances_definite(self, small_system):
        """Test Q and every R_i are positive definite thanks to the epsilon floor"""
        model, sensors = small_system
        assert np.min(np.linalg.eigvalsh(model.Q)) >= 0.01 - 1e-12
        for s in sensors:
            assert np.min(np.linalg.eigvalsh(s.R)) >= 0.01 - 1e-12

    def test_variation_ranges(self):
        """Test generation honours a variation's p range"""
        config = GenerationConfig(p_range=(0.1, 0.3))
        _, sensors = generate_system(seed=8, config=config)
        assert all(0.1 <= s.sample_prob <= 0.3 for s in sensors)

    @pytest.mark.parametrize("mode", ["spectral_radius", "spectral_norm"])
    def test_rescale(self, mode):
        """Test rescaling pins the chosen measure of A to the target"""
        config = GenerationConfig(rescale_mode=mode, rescale_target=0.9)
        model, _ = generate_system(seed=2, config=config)
        if mode == "spectral_radius":
            measure = np.max(np.abs(np.linalg.eigvals(model.A)))
        else:
            measure = np.linalg.norm(model.A, 2)
        assert measure == pytest.approx(0.9)

    def test_annulus_distances(self):
        """Test annulus deployment keeps distances within range"""
        _, sensors = generate_system(seed=4, config=GenerationConfig(deployment="annulus"))
        assert all(100.0 <= s.distance <= 300.0 for s in sensors)

    def test_rejects_empty_fleet(self):
        """Test M = 0 is rejected"""
        with pytest.raises(ConfigurationError):
            generate_system(seed=1, n_states=2, n_sensors=0)


class TestTruth:
    """Test cases for ground truth and sampling"""

    def test_step_without_noise(self):
        """Test a zero-noise step is exactly A x"""
        model = ProcessModel(A=np.array([[0.5, 0.0], [0.0, 2.0]]), Q=np.zeros((2, 2)))
        x = step_truth(model, np.array([2.0, 1.0]), np.random.default_rng(0))
        assert np.allclose(x, [1.0, 2.0])

    def test_always_and_never_sampling(self):
        """Test p = 1 always samples and p = 0 never does"""
        rng = np.random.default_rng(0)
        always = SensorModel(id=1, C=np.eye(2), R=np.eye(2) * 1e-6, sample_prob=1.0, distance=10.0)
        never = SensorModel(id=2, C=np.eye(2), R=np.eye(2), sample_prob=0.0, distance=10.0)
        sample = maybe_sample(always, np.array([1.0, -1.0]), 4, rng)
        assert sample.time == 4
        assert np.allclose(sample.value, [1.0, -1.0], atol=0.05)
        assert maybe_sample(never, np.zeros(2), 4, rng) is None

    def test_process_noise_covariance(self, small_system):
        """Test the empirical covariance of 1e5 noise draws is within 5% of Q"""
        model, _ = small_system
        rng = np.random.default_rng(3)
        factor = psd_sqrt(model.Q)
        zero = np.zeros(model.dim)
        draws = np.array([step_truth(model, zero, rng, factor) for _ in range(100_000)])
        empirical = draws.T @ draws / draws.shape[0]
        assert np.linalg.norm(empirical - model.Q) <= 0.05 * np.linalg.norm(model.Q)

    def test_half_probability_sampling_rate(self):
        """Test p = 0.5 samples on 0.5 +/- 0.02 of 1e4 steps"""
        rng = np.random.default_rng(4)
        sensor = SensorModel(id=1, C=np.eye(2), R=np.eye(2), sample_prob=0.5, distance=10.0)
        hits = sum(maybe_sample(sensor, np.zeros(2), k, rng) is not None for k in range(10_000))
        assert abs(hits / 10_000 - 0.5) <= 0.02

    def test_held_sample_age(self):
        """Test a held sample ages while the sensor stays silent"""
        truth = GroundTruth(trajectory=[np.zeros(1)] * 4)
        truth.record(1, Sample(time=1, value=np.ones(1)))
        truth.record(1, None)
        assert truth.held_sample(1).time == 1
        assert truth.held_age(1) == 2
        assert truth.held_age(2) is None

    def test_rejects_older_sample(self):
        """Test samples cannot move backwards in time"""
        truth = GroundTruth(trajectory=[np.zeros(1)] * 4)
        truth.record(1, Sample(time=2, value=np.ones(1)))
        with pytest.raises(ConfigurationError):
            truth.record(1, Sample(time=1, value=np.ones(1)))

    def test_rejects_future_sample(self):
        """Test samples cannot come from the future"""
        truth = GroundTruth(trajectory=[np.zeros(1)] * 2)
        with pytest.raises(ConfigurationError):
            truth.record(1, Sample(time=5, value=np.ones(1)))

    def test_trajectory_length(self, small_system):
        """Test a horizon-T run stores T + 1 states"""
        model, sensors = small_system
        truth = simulate_trajectory(model, sensors, 12, np.random.default_rng(1))
        assert len(truth.trajectory) == 13
        assert truth.time == 12

    def test_simulator_reproducible(self, small_system):
        """Test equal seeds give identical trajectories and samples"""
        model, sensors = small_system
        runs = []
        for _ in range(2):
            sim = TruthSimulator(model, sensors, np.random.default_rng(9))
            sim.reset(np.zeros(3))
            for _ in range(5):
                sim.advance()
            runs.append(sim.truth)
        assert np.array_equal(runs[0].state, runs[1].state)
        assert runs[0].latest.keys() == runs[1].latest.keys()


class TestLinkEnergy:
    """Test cases for the Friis / Shannon energy model"""

    def test_unit_conversions(self):
        """Test dB and dBm/Hz conversions"""
        assert db_to_linear(10.0) == pytest.approx(10.0)
        assert dbm_per_hz_to_watts(-174.0) == pytest.approx(10 ** -20.4)

    def test_friis_gain(self, budget):
        """Test the free-space gain at 100 m"""
        expected = 0.125 ** 2 / (4 * math.pi * 100.0) ** 2
        assert channel_gain(budget, 100.0) == pytest.approx(expected)
        assert channel_gain(budget, 100.0) == pytest.approx(9.8948e-9, rel=1e-4)

    def test_gain_inverse_square(self, budget):
        """Test doubling distance quarters the gain"""
        assert channel_gain(budget, 200.0) == pytest.approx(channel_gain(budget, 100.0) / 4.0)

    def test_energy_at_min_snr(self, budget):
        """Test E = (P_t + P_c) N_b / (B log2(1 + rho)) at rho = 10"""
        expected = 0.02 * 280.0 / (2e6 * math.log2(11.0))
        assert tx_energy(budget, 10.0) == pytest.approx(expected)

    def test_energy_rejects_zero_snr(self, budget):
        """Test a non-positive SNR is rejected"""
        with pytest.raises(ConfigurationError):
            tx_energy(budget, 0.0)

    def test_energy_grows_with_distance(self, budget):
        """Test farther sensors cost more energy per packet"""
        sensors = [SensorModel(id=i, C=np.eye(1), R=np.eye(1), sample_prob=0.5, distance=d)
                   for i, d in enumerate([100.0, 200.0, 300.0], start=1)]
        table = fleet_energy(budget, sensors)
        assert table.energies[0] < table.energies[1] < table.energies[2]
        assert table.normalized(3) == pytest.approx(1.0)
        assert table.snrs[0] == pytest.approx(snr(budget, channel_gain(budget, 100.0)))

    def test_calibrated_power_meets_min_snr(self, budget):
        """Test calibrated transmit power reaches at least the minimum SNR"""
        gain = channel_gain(budget, 5000.0)
        power = calibrated_tx_power(budget, gain)
        assert power >= budget.tx_power
        assert snr(budget, gain, power) >= budget.min_snr * (1 - 1e-12)

    def test_fleet_requires_ordered_ids(self, budget):
        """Test ids must run 1..M"""
        sensors = [SensorModel(id=2, C=np.eye(1), R=np.eye(1), sample_prob=0.5, distance=100.0)]
        with pytest.raises(ConfigurationError):
            fleet_energy(budget, sensors)

    def test_attach_energies(self, budget, small_system):
        """Test energies are copied onto sensor models"""
        _, sensors = small_system
        table = fleet_energy(budget, sensors)
        charged = attach_energies(sensors, table)
        assert [s.energy for s in charged] == pytest.approx(list(table.energies))
