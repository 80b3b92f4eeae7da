# Proximal samplers for heavy-tailed targets
from htprox.errors import (
    ConfigError,
    HtproxError,
    MissingRegularityError,
    NoClosedFormError,
    OracleBudgetExceeded,
    ParameterRangeError,
    UnsupportedDimensionError,
)
from htprox.rng import RngStream
from htprox.samplers import ChainRun, SamplerConfig, run_chains
from htprox.targets import GeneralizedCauchy, TargetSpec

__all__ = [
    "ChainRun",
    "ConfigError",
    "GeneralizedCauchy",
    "HtproxError",
    "MissingRegularityError",
    "NoClosedFormError",
    "OracleBudgetExceeded",
    "ParameterRangeError",
    "RngStream",
    "SamplerConfig",
    "TargetSpec",
    "UnsupportedDimensionError",
    "run_chains",
]
