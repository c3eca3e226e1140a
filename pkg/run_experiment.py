#!/usr/bin/env python3
"""
Experiment launcher for fusionsched.

    python run_experiment.py show-config
    python run_experiment.py train --config configs/standard.cfg
    python run_experiment.py evaluate --checkpoint results/checkpoint.bin --runs 1000
    python run_experiment.py sweep --checkpoint results/checkpoint.bin

Run `python run_experiment.py <command> --help` for the options of each command.
"""

import sys

from fusionsched.harness.cli import cli_main


if __name__ == '__main__':
    sys.exit(cli_main(sys.argv[1:]))
