"""
Per-sensor link budget: Friis channel gain, received SNR and the energy
needed to push one N_b-bit packet through the link.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ..config import LinkConfig
from ..entities import LinkBudget, SensorModel
from ..errors import ConfigurationError
from ..logger import get_logger

_logger = get_logger("link_energy")


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_per_hz_to_watts(dbm_per_hz: float) -> float:
    return 10.0 ** ((dbm_per_hz - 30.0) / 10.0)


def budget_from_config(config: LinkConfig) -> LinkBudget:
    """Build a LinkBudget in SI units from the table-style configuration."""
    return LinkBudget(
        n_bits=config.n_bits,
        bandwidth=config.bandwidth_hz,
        wavelength=config.wavelength_m,
        gain_tx=config.gain_tx,
        gain_rx=config.gain_rx,
        noise_density=dbm_per_hz_to_watts(config.noise_dbm_per_hz),
        pa_efficiency=config.pa_efficiency,
        circuit_power=config.circuit_power_w,
        tx_power=config.tx_power_w,
        min_snr=db_to_linear(config.min_snr_db),
    )


def channel_gain(budget: LinkBudget, distance: float) -> float:
    """Friis free-space gain G = lambda^2 G_t G_r / (4 pi d)^2."""
    if distance <= 0.0:
        raise ConfigurationError(f"distance must be > 0, got {distance}")
    return budget.wavelength ** 2 * budget.gain_tx * budget.gain_rx / (4.0 * math.pi * distance) ** 2


def snr(budget: LinkBudget, gain: float, tx_power: Optional[float] = None) -> float:
    """rho = eta P_t G / (N_0 B)."""
    power = budget.tx_power if tx_power is None else tx_power
    return budget.pa_efficiency * power * gain / (budget.noise_density * budget.bandwidth)


def tx_energy(budget: LinkBudget, rho: float, tx_power: Optional[float] = None) -> float:
    """E = (P_t + P_c) N_b / (B log2(1 + rho))."""
    if rho <= 0.0:
        raise ConfigurationError(f"SNR must be > 0, got {rho}")
    power = budget.tx_power if tx_power is None else tx_power
    return (power + budget.circuit_power) * budget.n_bits / (budget.bandwidth * math.log2(1.0 + rho))


def calibrated_tx_power(budget: LinkBudget, gain: float) -> float:
    """Transmit power meeting the minimum SNR at this gain, floored at the table P_t."""
    needed = budget.min_snr * budget.noise_density * budget.bandwidth / (budget.pa_efficiency * gain)
    return max(budget.tx_power, needed)


@dataclass(frozen=True)
class EnergyTable:
    """Per-sensor transmission energies, computed once at setup."""
    energies: np.ndarray
    snrs: np.ndarray
    gains: np.ndarray

    @property
    def max_energy(self) -> float:
        return float(np.max(self.energies))

    def energy_of(self, sensor_id: int) -> float:
        return float(self.energies[sensor_id - 1])

    def normalized(self, sensor_id: int) -> float:
        return self.energy_of(sensor_id) / self.max_energy


def fleet_energy(budget: LinkBudget, sensors: Sequence[SensorModel], calibrate: bool = False) -> EnergyTable:
    """
    Compute E^i for every sensor (ids must be 1..M in order).

    With `calibrate`, each sensor transmits at max(P_t, power reaching the
    minimum SNR at its distance); otherwise every sensor uses the table P_t.
    """
    gains, snrs, energies = [], [], []
    for expected_id, sensor in enumerate(sensors, start=1):
        if sensor.id != expected_id:
            raise ConfigurationError(f"Sensor ids must be 1..M in order, found {sensor.id} at {expected_id}")
        gain = channel_gain(budget, sensor.distance)
        power = calibrated_tx_power(budget, gain) if calibrate else budget.tx_power
        rho = snr(budget, gain, power)
        if rho < budget.min_snr:
            _logger.warning(f"sensor {sensor.id} at {sensor.distance:.1f} m: SNR {rho:.3g} below minimum {budget.min_snr:.3g}")
        gains.append(gain)
        snrs.append(rho)
        energies.append(tx_energy(budget, rho, power))
    return EnergyTable(energies=np.asarray(energies), snrs=np.asarray(snrs), gains=np.asarray(gains))


def attach_energies(sensors: Sequence[SensorModel], table: EnergyTable) -> List[SensorModel]:
    """Return copies of the sensors with `energy` filled from the table."""
    return [s.with_energy(table.energy_of(s.id)) for s in sensors]
