"""Configuration management for the htprox CLI"""
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from htprox.errors import ConfigError
from htprox.samplers import SamplerConfig
from htprox.targets import FpiParams, GeneralizedCauchy, Holder, QuadraticPotential, TargetSpec

logger = logging.getLogger(__name__)

OUT_ENV_VAR = "HTPROX_OUT"
DEFAULT_OUT = "results"
RESOLVED_NAME = "config.resolved.json"

ExperimentKind = Literal[
    "separation", "validate", "validate_rng", "validate_oracles", "bounds_overlay", "single_run"
]


class TargetConfig(BaseModel):
    """Target density; generalized Cauchy unless `kind` says otherwise."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["generalized_cauchy", "quadratic"] = "generalized_cauchy"
    dim: int = Field(default=1, ge=1)
    nu: float = Field(default=2.0, gt=0.0)
    holder_L: Optional[float] = Field(default=None, gt=0.0)
    holder_beta: Optional[float] = Field(default=None, gt=0.0, le=1.0)
    C_fpi: Optional[float] = Field(default=None, gt=0.0)
    chi2_0: Optional[float] = Field(default=None, gt=0.0)
    wfpi_c: Optional[float] = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def _holder_pair(self):
        if (self.holder_L is None) != (self.holder_beta is None):
            raise ValueError("holder_L and holder_beta must be given together")
        return self

    def build(self) -> TargetSpec:
        fpi = FpiParams(alpha=1.0, C_fpi=self.C_fpi) if self.C_fpi is not None else None
        if self.kind == "quadratic":
            return QuadraticPotential(self.dim, fpi=fpi, wfpi_c=self.wfpi_c)
        holder = None
        if self.holder_L is not None:
            holder = Holder(L=self.holder_L, beta=self.holder_beta)
        return GeneralizedCauchy(
            self.dim, self.nu, holder_override=holder, fpi=fpi, wfpi_c=self.wfpi_c
        )


class BoundsConfig(BaseModel):
    """Theory curves for the `bounds` subcommand."""

    model_config = ConfigDict(extra="forbid")

    curves: List[Literal["langevin", "gaussian_prox", "stable_prox", "chi2_upper", "wfpi"]] = [
        "gaussian_prox",
        "langevin",
    ]
    k_grid: List[float] = Field(
        default_factory=lambda: [10.0**e for e in (3, 3.5, 4, 4.5, 5, 5.5, 6)]
    )
    eta: Optional[float] = Field(default=None, gt=0.0)
    alpha: float = Field(default=1.0, gt=0.0, lt=2.0)
    kappa: Optional[float] = Field(default=None, gt=0.0)
    delta: Optional[float] = Field(default=None, gt=0.0)
    tau: Optional[float] = Field(default=None, gt=0.0)
    E_G0: float = Field(default=1.0, ge=1.0)


class ValidationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    groups: List[Literal["rng", "targets", "oracles", "samplers", "theory"]] = [
        "rng",
        "targets",
        "oracles",
        "samplers",
        "theory",
    ]
    n_draws: int = Field(default=100_000, ge=1000)
    chains: int = Field(default=2000, ge=100)


class ExperimentConfig(BaseModel):
    """Root of a JSON experiment document."""

    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentKind
    target: TargetConfig = Field(default_factory=TargetConfig)
    samplers: List[SamplerConfig] = Field(default_factory=list)
    epsilons: List[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05])
    record_at: List[int] = Field(
        default_factory=lambda: [0, 1, 2, 5, 10, 20, 50, 100, 200, 300, 500, 750, 1000]
    )
    seed: int = Field(default=0, ge=0, lt=2**64)
    out: Optional[str] = None
    sampler_multipliers: List[float] = Field(default_factory=lambda: [1.0])
    bins: int = Field(
        default=20,
        ge=1,
        description=(
            "Equal-probability radial TV bins. The estimate is noise-dominated unless "
            "chains >= 100 * bins: 200 bins want 10^5 chains, the default 20 wants 2000."
        ),
    )
    bounds: BoundsConfig = Field(default_factory=BoundsConfig)
    validation: ValidationConfig = Field(default_factory=ValidationConfig)

    @model_validator(mode="after")
    def _ranges(self):
        if any(not 0.0 < e < 1.0 for e in self.epsilons):
            raise ValueError("epsilons must lie in (0, 1)")
        if any(k < 0 for k in self.record_at):
            raise ValueError("record_at must be non-negative")
        if any(c <= 0 for c in self.sampler_multipliers):
            raise ValueError("sampler_multipliers must be positive")
        return self


def default_config(experiment: ExperimentKind) -> ExperimentConfig:
    """Built-in configuration used when no --config file is given."""
    samplers = []
    if experiment in ("separation", "single_run"):
        samplers = [
            SamplerConfig(kind="stable_proximal", alpha=1.0, iterations=1000, chains=10_000),
            SamplerConfig(kind="gaussian_proximal", iterations=1000, chains=10_000),
        ]
        if experiment == "single_run":
            samplers = samplers[:1]
    return ExperimentConfig(experiment=experiment, samplers=samplers)


def parse_override_value(text: str) -> Any:
    """JSON literal when it parses, the raw string otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _set_path(node: Any, parts: Sequence[str], value: Any, full: str):
    head, rest = parts[0], parts[1:]
    if isinstance(node, list):
        if not head.isdigit() or int(head) >= len(node):
            raise ConfigError(f"override '{full}': no list index '{head}'")
        key = int(head)
    elif isinstance(node, dict):
        if head not in node:
            raise ConfigError(f"override '{full}': unknown key '{head}'")
        key = head
    else:
        raise ConfigError(f"override '{full}': '{head}' is not a container")
    if rest:
        _set_path(node[key], rest, value, full)
    else:
        node[key] = value


def apply_overrides(data: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Apply dotted-path overrides to a fully dumped config dict.

    `sampler.<field>` is shorthand for the same field on every entry of
    `samplers`; `samplers.<i>.<field>` addresses one entry.
    """
    for path, value in overrides.items():
        parts = path.split(".")
        if parts[0] == "sampler":
            if len(parts) < 2:
                raise ConfigError(f"override '{path}' names no sampler field")
            if not data["samplers"]:
                raise ConfigError(f"override '{path}': config has no samplers")
            for item in data["samplers"]:
                _set_path(item, parts[1:], value, path)
        else:
            _set_path(data, parts, value, path)
    return data


class ConfigManager:
    """Loads, overrides, resolves and saves experiment configurations"""

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = Path(config_file).expanduser() if config_file else None

    def config_exists(self) -> bool:
        return self.config_file is not None and self.config_file.exists()

    def load_raw(self) -> Dict[str, Any]:
        if not self.config_exists():
            raise ConfigError(f"config file not found: {self.config_file}")
        try:
            with open(self.config_file, "r") as f:
                raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON in {self.config_file}: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"{self.config_file}: top level must be a JSON object")
        return raw

    def load_config(
        self,
        experiment: Optional[ExperimentKind] = None,
        overrides: Optional[Dict[str, Any]] = None,
    ) -> ExperimentConfig:
        """
        Build the effective configuration

        Args:
            experiment: kind used for the built-in default when no file is set
            overrides: dotted-path values from the command line

        Returns:
            ExperimentConfig: validated configuration
        """
        try:
            if self.config_file is not None:
                config = ExperimentConfig.model_validate(self.load_raw())
            elif experiment is not None:
                config = default_config(experiment)
            else:
                raise ConfigError("no config file and no experiment kind given")
            if overrides:
                data = apply_overrides(config.model_dump(mode="json"), overrides)
                config = ExperimentConfig.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"invalid configuration: {e}") from e
        return config

    @staticmethod
    def resolve_out(config: ExperimentConfig, cli_out: Optional[str] = None) -> Path:
        """--out, then config.out, then HTPROX_OUT, then results/."""
        for candidate in (cli_out, config.out, os.environ.get(OUT_ENV_VAR)):
            if candidate:
                return Path(candidate).expanduser()
        return Path(DEFAULT_OUT)

    @staticmethod
    def save_config(config: ExperimentConfig, out_dir: Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / RESOLVED_NAME
        with open(path, "w") as f:
            json.dump(config.model_dump(mode="json"), f, indent=2)
        logger.info("resolved config saved to %s", path)
        return path
