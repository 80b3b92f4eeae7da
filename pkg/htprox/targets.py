"""Target densities π ∝ exp(-V).

All potentials act on the last axis, so a batch of shape (n, d) gives n
values. Targets are frozen after construction and can be shared between
worker processes.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import betainc, betaincinv, gammaln

from htprox.errors import ParameterRangeError
from htprox.rng import RngLike, as_generator


@dataclass(frozen=True)
class Holder:
    """V(x) - V(x*) ≤ L·|x - x*|^beta."""

    L: float
    beta: float

    def __post_init__(self):
        if self.L <= 0 or not 0.0 < self.beta <= 1.0:
            raise ParameterRangeError(f"invalid Hölder data L={self.L}, beta={self.beta}")


@dataclass(frozen=True)
class FpiParams:
    """User-supplied α-FPI constant; never estimated here."""

    alpha: float
    C_fpi: float


@dataclass(frozen=True)
class TargetSpec:
    dim: int
    fpi: Optional[FpiParams] = field(default=None, kw_only=True)
    wfpi_c: Optional[float] = field(default=None, kw_only=True)

    kind = "abstract"

    def __post_init__(self):
        if self.dim < 1:
            raise ParameterRangeError(f"dim must be ≥ 1, got {self.dim}")

    def potential(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def minimizer(self) -> np.ndarray:
        return np.zeros(self.dim)

    @property
    def min_value(self) -> float:
        return float(self.potential(self.minimizer))

    @property
    def nu1(self) -> Optional[float]:
        return None

    @property
    def nu2(self) -> Optional[float]:
        return None

    @property
    def holder(self) -> Optional[Holder]:
        return None

    @property
    def grad_lipschitz(self) -> Optional[float]:
        return None


@dataclass(frozen=True)
class GeneralizedCauchy(TargetSpec):
    """π_ν ∝ (1 + |x|²)^(-(d+ν)/2), i.e. V = (d+ν)/2 · ln(1 + |x|²)."""

    nu: float = 1.0
    holder_override: Optional[Holder] = field(default=None, kw_only=True)

    kind = "generalized_cauchy"

    def __post_init__(self):
        super().__post_init__()
        if self.nu <= 0:
            raise ParameterRangeError(f"nu must be positive, got {self.nu}")

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * (self.dim + self.nu) * np.log1p(np.sum(x * x, axis=-1))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1, keepdims=True)
        return (self.dim + self.nu) * x / (1.0 + r2)

    @property
    def min_value(self) -> float:
        return 0.0

    @property
    def nu1(self):
        return self.nu

    @property
    def nu2(self):
        return self.nu

    @property
    def holder(self) -> Holder:
        if self.holder_override is not None:
            return self.holder_override
        return holder_preset(self.dim, self.nu)

    @property
    def grad_lipschitz(self) -> float:
        return self.dim + self.nu


@dataclass(frozen=True)
class FlatPotential(TargetSpec):
    """V ≡ 0. Not normalizable; only meant for exercising oracle logic."""

    kind = "flat"

    def potential(self, x):
        return np.zeros(np.shape(x)[:-1])

    def grad(self, x):
        return np.zeros(np.shape(x))

    @property
    def min_value(self) -> float:
        return 0.0


@dataclass(frozen=True)
class QuadraticPotential(TargetSpec):
    """Standard Gaussian target, V = |x|²/2."""

    kind = "quadratic"

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(x * x, axis=-1)

    def grad(self, x):
        return np.asarray(x, dtype=float)

    @property
    def min_value(self) -> float:
        return 0.0

    @property
    def grad_lipschitz(self) -> float:
        return 1.0


def holder_preset(dim: int, nu: float) -> Holder:
    # ν ≥ 1: β = 1/4; ν < 1: β = ν/4
    if nu >= 1.0:
        return Holder(L=4.0 * (dim + nu), beta=0.25)
    return Holder(L=(dim + nu) / nu, beta=nu / 4.0)


def cauchy_radial_cdf(target: GeneralizedCauchy, R):
    """P(|X| ≤ R) = 1 - I_{1/(1+R²)}(ν/2, d/2)."""
    R = np.asarray(R, dtype=float)
    if np.any(R < 0):
        raise ParameterRangeError("R must be non-negative")
    out = 1.0 - betainc(target.nu / 2.0, target.dim / 2.0, 1.0 / (1.0 + R * R))
    return float(out) if out.ndim == 0 else out


def cauchy_radial_quantile(target: GeneralizedCauchy, q):
    """Radius R with cauchy_radial_cdf(R) = q; inf at q = 1."""
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q > 1)):
        raise ParameterRangeError("quantile level must lie in [0, 1]")
    x = betaincinv(target.nu / 2.0, target.dim / 2.0, 1.0 - q)
    with np.errstate(divide="ignore"):
        out = np.sqrt(np.maximum(1.0 / x - 1.0, 0.0))
    return float(out) if out.ndim == 0 else out


def cauchy_radial_pdf(target: GeneralizedCauchy, r):
    """Density of |X|: r^(d-1)(1+r²)^(-(d+ν)/2) / (½ B(ν/2, d/2))."""
    r = np.asarray(r, dtype=float)
    d, nu = target.dim, target.nu
    log_norm = math.log(0.5) + gammaln(nu / 2) + gammaln(d / 2) - gammaln((d + nu) / 2)
    with np.errstate(divide="ignore"):
        log_pdf = (d - 1) * np.log(r) - 0.5 * (d + nu) * np.log1p(r * r) - log_norm
    return np.exp(log_pdf)


def tail_constant(nu1: float) -> float:
    """C_ν₁ = 2^(1-ν₁/2) e^(-ν₁) / ((1+ν₁) Γ(ν₁/2))."""
    if nu1 < 0:
        raise ParameterRangeError(f"nu1 must be non-negative, got {nu1}")
    if nu1 == 0:
        return 0.0
    log_c = (1.0 - nu1 / 2.0) * math.log(2.0) - nu1 - math.log1p(nu1) - gammaln(nu1 / 2.0)
    return math.exp(log_c)


def cauchy_tail_lower_bound(nu1: float, nu2: float, d: int, R):
    """Lower bound on π(|X| ≥ R) under the dissipativity band (ν₁, ν₂)."""
    R = np.asarray(R, dtype=float)
    if np.any(R <= 0):
        raise ParameterRangeError("R must be positive")
    if not 0.0 <= nu1 <= nu2:
        raise ParameterRangeError(f"need 0 ≤ nu1 ≤ nu2, got ({nu1}, {nu2})")
    out = (
        tail_constant(nu1)
        * d ** (nu1 / 2.0)
        * (1.0 + R ** -2.0) ** (-(d + nu2) / 2.0)
        * R ** (-nu2)
    )
    return float(out) if out.ndim == 0 else out


def sample_exact(target: GeneralizedCauchy, n: int, rng: RngLike) -> np.ndarray:
    """i.i.d. draws by radial inverse CDF and a uniform direction. Shape (n, d)."""
    if n < 1:
        raise ParameterRangeError(f"n must be ≥ 1, got {n}")
    gen = as_generator(rng)
    u = 1.0 - gen.random(n)
    x = betaincinv(target.nu / 2.0, target.dim / 2.0, u)
    radius = np.sqrt(1.0 / x - 1.0)
    z = gen.standard_normal((n, target.dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return radius[:, None] * z
