"""
Experiment Configuration Module
Loads, validates and renders the single key-value configuration file that
drives every experiment.

File format (parsed with python-dotenv, comments allowed):

    # link parameters
    link.n_bits = 280
    gen.p_range = 0.4,0.6
    ppo.total_steps = 200000

Precedence: built-in defaults < config file < `--set` overrides < dedicated
CLI flags. Process environment variables are never read.
"""

import io
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from dotenv import dotenv_values

from .errors import ConfigurationError
from .logger import LoggerLevels

Range = Tuple[float, float]

DEPLOYMENT_MODES = ("uniform", "annulus")
RESCALE_MODES = ("none", "spectral_radius", "spectral_norm")


def _check_range(label: str, rng: Range, lower: Optional[float] = None,
                 upper: Optional[float] = None) -> None:
    low, high = rng
    if not low <= high:
        raise ConfigurationError(f"{label}: low {low} exceeds high {high}")
    if lower is not None and low < lower:
        raise ConfigurationError(f"{label}: low {low} below {lower}")
    if upper is not None and high > upper:
        raise ConfigurationError(f"{label}: high {high} above {upper}")


@dataclass(frozen=True)
class GenerationConfig:
    """Random system generation ranges (setup section of the model)."""
    n_states: int = 5
    n_sensors: int = 20
    a_range: Range = (0.0, 1.0)
    c_range: Range = (-1.0, 1.0)
    q_range: Range = (0.0, 1.0)
    r_range: Range = (0.0, 1.0)
    p_range: Range = (0.4, 0.6)
    d_range: Range = (100.0, 300.0)
    epsilon: float = 0.01
    deployment: str = "uniform"
    rescale_mode: str = "none"
    rescale_target: float = 0.95

    def __post_init__(self):
        if self.n_states < 1:
            raise ConfigurationError(f"gen.n_states must be >= 1, got {self.n_states}")
        if self.n_sensors < 1:
            raise ConfigurationError(f"gen.n_sensors must be >= 1, got {self.n_sensors}")
        for name in ("a_range", "c_range", "q_range", "r_range"):
            _check_range(f"gen.{name}", getattr(self, name))
        _check_range("gen.p_range", self.p_range, 0.0, 1.0)
        _check_range("gen.d_range", self.d_range)
        if self.d_range[0] <= 0.0:
            raise ConfigurationError("gen.d_range must be strictly positive")
        if self.epsilon <= 0.0:
            raise ConfigurationError(f"gen.epsilon must be > 0, got {self.epsilon}")
        if self.deployment not in DEPLOYMENT_MODES:
            raise ConfigurationError(f"gen.deployment must be one of {DEPLOYMENT_MODES}")
        if self.rescale_mode not in RESCALE_MODES:
            raise ConfigurationError(f"gen.rescale_mode must be one of {RESCALE_MODES}")
        if self.rescale_target <= 0.0:
            raise ConfigurationError("gen.rescale_target must be > 0")


@dataclass(frozen=True)
class LinkConfig:
    """Wireless link parameters, defaults exactly as the simulation table."""
    n_bits: float = 280.0
    bandwidth_hz: float = 2e6
    gain_tx: float = 1.0
    gain_rx: float = 1.0
    wavelength_m: float = 0.125
    noise_dbm_per_hz: float = -174.0
    min_snr_db: float = 10.0
    pa_efficiency: float = 0.8
    circuit_power_w: float = 0.01
    tx_power_w: float = 0.01
    calibrate_tx_power: bool = False

    def __post_init__(self):
        for name in ("n_bits", "bandwidth_hz", "gain_tx", "gain_rx", "wavelength_m",
                     "circuit_power_w", "tx_power_w"):
            if getattr(self, name) <= 0.0:
                raise ConfigurationError(f"link.{name} must be > 0")
        if not 0.0 < self.pa_efficiency <= 1.0:
            raise ConfigurationError("link.pa_efficiency must lie in (0, 1]")


@dataclass(frozen=True)
class EnvSettings:
    """MDP environment settings."""
    horizon: int = 100
    beta: float = 0.1
    history_len: int = 10
    log_eps: float = 1e-8
    buffer_len: int = 32
    init_cov_scale: float = 1.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError("env.horizon must be >= 1")
        if self.beta < 0.0:
            raise ConfigurationError("env.beta must be >= 0")
        if self.history_len < 1:
            raise ConfigurationError("env.history_len must be >= 1")
        if self.log_eps <= 0.0:
            raise ConfigurationError("env.log_eps must be > 0")
        if self.buffer_len < 1:
            raise ConfigurationError("env.buffer_len must be >= 1")
        if self.init_cov_scale <= 0.0:
            raise ConfigurationError("env.init_cov_scale must be > 0")


@dataclass(frozen=True)
class PpoConfig:
    """PPO hyperparameters; the defaults are the tuned values."""
    learning_rate: float = 1.9e-4
    gamma: float = 0.94
    clip_coef: float = 0.18
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    n_envs: int = 16
    n_steps: int = 192
    n_minibatches: int = 28
    update_epochs: int = 108
    gae_lambda: float = 0.98
    total_steps: int = 200_000
    hidden_sizes: Tuple[int, ...] = (128, 64)
    normalize_advantages: bool = True
    divergence_threshold: float = 1e6

    def __post_init__(self):
        if self.clip_coef <= 0.0:
            raise ConfigurationError("ppo.clip_coef must be > 0")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigurationError("ppo.gamma must lie in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ConfigurationError("ppo.gae_lambda must lie in [0, 1]")
        if self.learning_rate < 0.0:
            raise ConfigurationError("ppo.learning_rate must be >= 0")
        if self.n_envs < 1 or self.n_steps < 1 or self.update_epochs < 1:
            raise ConfigurationError("ppo.n_envs, ppo.n_steps and ppo.update_epochs must be >= 1")
        if not 1 <= self.n_minibatches <= self.batch_size:
            raise ConfigurationError(
                f"ppo.n_minibatches must lie in [1, {self.batch_size}], got {self.n_minibatches}")
        if self.total_steps < 0:
            raise ConfigurationError("ppo.total_steps must be >= 0")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ConfigurationError("ppo.hidden_sizes must be positive layer widths")

    @property
    def batch_size(self) -> int:
        return self.n_envs * self.n_steps

    @property
    def n_iterations(self) -> int:
        return -(-self.total_steps // self.batch_size) if self.total_steps else 0


@dataclass(frozen=True)
class RunSettings:
    master_seed: int = 2024
    n_runs: int = 1000
    output_dir: str = "results"
    workers: int = 1
    log_level: str = "INFO"
    log_file: str = ""

    def __post_init__(self):
        if self.n_runs < 1:
            raise ConfigurationError("run.n_runs must be >= 1")
        if self.workers < 1:
            raise ConfigurationError("run.workers must be >= 1")
        if self.log_level.upper() not in LoggerLevels.ORDER:
            raise ConfigurationError(f"run.log_level must be one of {list(LoggerLevels.ORDER)}, got {self.log_level}")


@dataclass(frozen=True)
class VariationSpec:
    """Which generation ranges to override (robustness variations)."""
    name: str = "standard"
    p_range: Optional[Range] = None
    q_range: Optional[Range] = None
    r_range: Optional[Range] = None

    def apply(self, gen: GenerationConfig) -> GenerationConfig:
        overrides = {k: getattr(self, k) for k in ("p_range", "q_range", "r_range")
                     if getattr(self, k) is not None}
        return replace(gen, **overrides)


# Robustness grid: one standard cell plus two settings for each of p_i, q_ij, r_ij.
PARAMETER_VARIATIONS: Dict[str, VariationSpec] = {
    "standard": VariationSpec("standard"),
    "p_low": VariationSpec("p_low", p_range=(0.1, 0.3)),
    "p_high": VariationSpec("p_high", p_range=(0.7, 0.9)),
    "q_low": VariationSpec("q_low", q_range=(0.0, 0.1)),
    "q_high": VariationSpec("q_high", q_range=(1.0, 10.0)),
    "r_low": VariationSpec("r_low", r_range=(0.0, 0.1)),
    "r_high": VariationSpec("r_high", r_range=(1.0, 10.0)),
}


@dataclass(frozen=True)
class ExperimentConfig:
    gen: GenerationConfig = field(default_factory=GenerationConfig)
    link: LinkConfig = field(default_factory=LinkConfig)
    env: EnvSettings = field(default_factory=EnvSettings)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    run: RunSettings = field(default_factory=RunSettings)
    variation: VariationSpec = field(default_factory=VariationSpec)

    def generation(self) -> GenerationConfig:
        """Generation ranges with the selected variation applied."""
        return self.variation.apply(self.gen)

    def with_variation(self, name: str) -> "ExperimentConfig":
        if name not in PARAMETER_VARIATIONS:
            raise ConfigurationError(f"Unknown variation '{name}', expected one of {list(PARAMETER_VARIATIONS)}")
        return replace(self, variation=PARAMETER_VARIATIONS[name])

    def with_overrides(self, overrides: Mapping[str, Any]) -> "ExperimentConfig":
        return ConfigLoader.apply(self, overrides)

    def to_text(self) -> str:
        return ConfigLoader.render(self)


class ConfigLoader:
    """Parses, validates and renders ExperimentConfig trees."""

    SECTIONS = {
        "gen": GenerationConfig,
        "link": LinkConfig,
        "env": EnvSettings,
        "ppo": PpoConfig,
        "run": RunSettings,
        "variation": VariationSpec,
    }

    @staticmethod
    def load(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
        """
        Load an experiment configuration.

        Args:
            path: Path to a `.cfg` file; None uses the built-in defaults
            overrides: Extra `section.field -> value` pairs applied last

        Returns:
            Validated ExperimentConfig
        """
        config = ExperimentConfig()
        if path is not None:
            cfg_path = Path(path)
            if not cfg_path.is_file():
                raise ConfigurationError(f"Config file not found: {path}")
            values = dotenv_values(cfg_path, interpolate=False)
            config = ConfigLoader.apply(config, values)
        if overrides:
            config = ConfigLoader.apply(config, overrides)
        return config

    @staticmethod
    def loads(text: str) -> ExperimentConfig:
        values = dotenv_values(stream=io.StringIO(text), interpolate=False)
        return ConfigLoader.apply(ExperimentConfig(), values)

    @staticmethod
    def parse_assignments(pairs) -> Dict[str, str]:
        """Turn CLI `key=value` strings into an override mapping."""
        result: Dict[str, str] = {}
        for pair in pairs or []:
            if "=" not in pair:
                raise ConfigurationError(f"Override '{pair}' is not of the form key=value")
            key, value = pair.split("=", 1)
            result[key.strip()] = value.strip()
        return result

    @staticmethod
    def apply(config: ExperimentConfig, values: Mapping[str, Any]) -> ExperimentConfig:
        grouped: Dict[str, Dict[str, Any]] = {}
        for key, raw in values.items():
            if "." not in key:
                raise ConfigurationError(f"Config key '{key}' must be of the form section.field")
            section, name = key.split(".", 1)
            if section not in ConfigLoader.SECTIONS:
                raise ConfigurationError(f"Unknown config section '{section}' in key '{key}'")
            cls = ConfigLoader.SECTIONS[section]
            hints = typing.get_type_hints(cls)
            if name not in {f.name for f in fields(cls)}:
                raise ConfigurationError(f"Unknown config key '{key}'")
            if raw is None:
                raise ConfigurationError(f"Config key '{key}' has no value")
            grouped.setdefault(section, {})[name] = ConfigLoader._parse(key, hints[name], raw)

        updates = {}
        for section, changes in grouped.items():
            current = getattr(config, section)
            if section == "variation" and "name" in changes:
                base = PARAMETER_VARIATIONS.get(changes["name"], VariationSpec(changes["name"]))
                current = base
            updates[section] = replace(current, **changes)
        return replace(config, **updates)

    @staticmethod
    def _parse(key: str, hint: Any, raw: Any) -> Any:
        if not isinstance(raw, str):
            return raw
        text = raw.strip()
        origin = typing.get_origin(hint)
        args = typing.get_args(hint)
        try:
            if origin is typing.Union and type(None) in args:
                if text.lower() in ("", "none"):
                    return None
                inner = next(a for a in args if a is not type(None))
                return ConfigLoader._parse(key, inner, text)
            if hint is bool:
                if text.lower() in ("true", "1", "yes", "on"):
                    return True
                if text.lower() in ("false", "0", "no", "off"):
                    return False
                raise ValueError(text)
            if hint is int:
                return int(float(text)) if "e" in text.lower() else int(text)
            if hint is float:
                return float(text)
            if hint is str:
                return text
            if origin is tuple:
                parts = [p.strip() for p in text.split(",") if p.strip()]
                if len(args) == 2 and args[1] is Ellipsis:
                    return tuple(ConfigLoader._parse(key, args[0], p) for p in parts)
                if len(parts) != len(args):
                    raise ValueError(f"expected {len(args)} comma-separated values")
                return tuple(ConfigLoader._parse(key, a, p) for a, p in zip(args, parts))
        except (ValueError, StopIteration) as exc:
            raise ConfigurationError(f"Cannot parse value '{raw}' for '{key}': {exc}")
        raise ConfigurationError(f"Unsupported config type for '{key}'")

    @staticmethod
    def _format(value: Any) -> str:
        if value is None:
            return "none"
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, tuple):
            return ",".join(ConfigLoader._format(v) for v in value)
        if isinstance(value, float):
            return repr(value)
        return str(value)

    @staticmethod
    def render(config: ExperimentConfig) -> str:
        lines = ["# fusionsched experiment configuration"]
        for section in ConfigLoader.SECTIONS:
            lines.append("")
            lines.append(f"# [{section}]")
            block = getattr(config, section)
            for f in fields(block):
                lines.append(f"{section}.{f.name} = {ConfigLoader._format(getattr(block, f.name))}")
        return "\n".join(lines) + "\n"
