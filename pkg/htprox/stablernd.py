"""Isotropic α-stable random vectors.

Vectors are built by Gaussian subordination: X = t^(1/α) · √(2S) · Z with S
a one-sided stable variable of index α/2 and Z a standard Gaussian vector.
The one-sided law uses Kanter's representation, normalized so that
E[exp(-λS)] = exp(-λ^β').
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import gammaln

from htprox.errors import NoClosedFormError, ParameterRangeError
from htprox.rng import RngLike, as_generator

logger = logging.getLogger(__name__)


class StableSpec(BaseModel):
    """Isotropic stable law with characteristic function exp(-t·|ξ|^alpha)."""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(gt=0.0, le=2.0)
    t: float = Field(default=1.0, gt=0.0)
    dim: int = Field(default=1, ge=1)


def sample_one_sided_stable(beta_prime: float, rng: RngLike, size=None):
    """Positive stable draws with Laplace transform exp(-λ^beta_prime).

    Args:
        beta_prime: stability index, strictly inside (0, 1)
        rng: stream or generator
        size: None for a scalar, otherwise an int or shape

    Returns:
        float or np.ndarray: strictly positive draws
    """
    if not 0.0 < beta_prime < 1.0:
        raise ParameterRangeError(f"beta_prime must lie in (0, 1), got {beta_prime}")
    gen = as_generator(rng)
    # U in (0, π], never 0
    u = math.pi * (1.0 - gen.random(size))
    e = gen.standard_exponential(size)
    b = beta_prime
    log_s = (
        np.log(np.sin(b * u))
        - np.log(np.sin(u)) / b
        + (1.0 - b) / b * (np.log(np.sin((1.0 - b) * u)) - np.log(e))
    )
    s = np.exp(log_s)
    return float(s) if size is None else s


def sample_isotropic_stable(spec: StableSpec, rng: RngLike, size=None) -> np.ndarray:
    """Draw from p_t^(alpha) in `spec.dim` dimensions.

    Returns shape (dim,) when size is None, else (size, dim).
    """
    gen = as_generator(rng)
    n = 1 if size is None else int(size)
    z = gen.standard_normal((n, spec.dim))
    if spec.alpha == 2.0:
        scale = np.full(n, math.sqrt(2.0))
    else:
        s = sample_one_sided_stable(spec.alpha / 2.0, gen, size=n)
        scale = np.sqrt(2.0 * s)
    x = spec.t ** (1.0 / spec.alpha) * scale[:, None] * z
    return x[0] if size is None else x


def sample_cauchy_vector(t: float, dim: int, rng: RngLike, size=None) -> np.ndarray:
    """Cauchy vector t·Z₁/|Z₂|, density ∝ (|y|² + t²)^(-(d+1)/2)."""
    if t <= 0:
        raise ParameterRangeError(f"t must be positive, got {t}")
    gen = as_generator(rng)
    n = 1 if size is None else int(size)
    z1 = gen.standard_normal((n, dim))
    z2 = np.abs(gen.standard_normal(n))
    zero = z2 == 0.0
    while np.any(zero):
        z2[zero] = np.abs(gen.standard_normal(int(zero.sum())))
        zero = z2 == 0.0
    x = t * z1 / z2[:, None]
    return x[0] if size is None else x


def stable_char_fn(alpha: float, t: float, xi) -> float:
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    return float(np.exp(-t * np.linalg.norm(xi) ** alpha))


def empirical_char_fn(samples: np.ndarray, xi) -> float:
    """Real part of the empirical characteristic function at ξ."""
    samples = np.atleast_2d(samples)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    return float(np.mean(np.cos(samples @ xi)))


class MomentMode(str, Enum):
    ANALYTIC = "analytic"
    SUBORDINATION = "subordination"
    MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class AbsMoment:
    """Value of E|X|^p, or the explicit infinite marker."""

    value: Optional[float]
    se: float = 0.0
    infinite: bool = False

    def __float__(self) -> float:
        return math.inf if self.infinite else float(self.value)


INFINITE_MOMENT = AbsMoment(value=None, infinite=True)


def stable_abs_moment(
    alpha: float,
    p: float,
    dim: int,
    mode="analytic",
    rng: RngLike = None,
    n: int = 1_000_000,
) -> AbsMoment:
    """Fractional absolute moment of a unit-time isotropic stable vector.

    `analytic` covers α = 1 (p < 1) and α = 2. `subordination` covers any
    α with p < α. `monte_carlo` works everywhere the moment is finite and
    reports a standard error.
    """
    mode = MomentMode(mode)
    if p <= 0:
        raise ParameterRangeError(f"p must be positive, got {p}")
    if not 0.0 < alpha <= 2.0:
        raise ParameterRangeError(f"alpha must lie in (0, 2], got {alpha}")
    if alpha < 2.0 and p >= alpha:
        return INFINITE_MOMENT

    if mode is MomentMode.ANALYTIC:
        if alpha == 1.0:
            log_m = (
                gammaln((dim + p) / 2.0)
                + gammaln((1.0 - p) / 2.0)
                - gammaln(dim / 2.0)
                - gammaln(0.5)
            )
        elif alpha == 2.0:
            log_m = p * math.log(2.0) + gammaln((dim + p) / 2.0) - gammaln(dim / 2.0)
        else:
            raise NoClosedFormError(f"stable_abs_moment(alpha={alpha}, p={p})")
        return AbsMoment(value=float(math.exp(log_m)))

    if mode is MomentMode.SUBORDINATION:
        if alpha == 2.0:
            return stable_abs_moment(alpha, p, dim, mode="analytic")
        log_m = (
            p * math.log(2.0)
            + gammaln((dim + p) / 2.0)
            + gammaln(1.0 - p / alpha)
            - gammaln(dim / 2.0)
            - gammaln(1.0 - p / 2.0)
        )
        return AbsMoment(value=float(math.exp(log_m)))

    x = sample_isotropic_stable(StableSpec(alpha=alpha, dim=dim), rng, size=n)
    vals = np.linalg.norm(x, axis=1) ** p
    se = float(vals.std(ddof=1) / math.sqrt(n))
    logger.debug(
        "monte carlo moment alpha=%s p=%s d=%s: %.5f ± %.5f", alpha, p, dim, vals.mean(), se
    )
    return AbsMoment(value=float(vals.mean()), se=se)
