# System layer: plant, sensor fleet and wireless link model

from .linmodel import (GroundTruth, Sample, TruthSimulator, generate_system, maybe_sample,
                       simulate_trajectory, step_truth)
from .link_energy import (EnergyTable, attach_energies, budget_from_config, channel_gain,
                          fleet_energy, snr, tx_energy)

__all__ = [
    'GroundTruth', 'Sample', 'TruthSimulator', 'generate_system', 'maybe_sample',
    'simulate_trajectory', 'step_truth',
    'EnergyTable', 'attach_energies', 'budget_from_config', 'channel_gain', 'fleet_energy',
    'snr', 'tx_energy',
]
