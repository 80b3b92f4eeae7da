"""Sample-based divergence estimates against an analytic generalized Cauchy target.

Both the target and every chain law in scope are isotropic, so distances
are computed on the radial marginal.
"""
import logging
import math
import warnings
from dataclasses import dataclass
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats

from htprox.errors import ParameterRangeError, UnsupportedDimensionError
from htprox.rng import RngLike, RngStream, as_generator
from htprox.samplers import ChainRun
from htprox.targets import GeneralizedCauchy, cauchy_radial_cdf, cauchy_radial_quantile

logger = logging.getLogger(__name__)

RADIAL_COVERAGE = 0.999
CHI2_MIN_MASS = 1e-8
KS_CRITICAL_1PCT = 1.63


class UnreliableEstimateWarning(UserWarning):
    """The estimate is dominated by an infinite-variance tail."""


class DivergenceEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["radial_tv", "hist_chi2", "ks"]
    value: float = Field(ge=0.0)
    n: int
    bins: Optional[int] = None
    se_proxy: float = 0.0
    threshold: Optional[float] = None


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    """½ Σ |p - q| for two probability vectors on the same bins."""
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


def chi2_divergence(p: np.ndarray, q: np.ndarray) -> float:
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    return float(np.sum((p - q) ** 2 / q))


def _radii(samples) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ParameterRangeError("empty sample set")
    if samples.ndim == 1:
        samples = samples[:, None]
    return np.linalg.norm(samples, axis=1)


def _bootstrap_se(counts, n, statistic, rng: RngLike, n_boot: int) -> float:
    if n_boot <= 0:
        return 0.0
    gen = as_generator(rng)
    p_hat = counts / n
    resampled = gen.multinomial(n, p_hat, size=n_boot) / n
    values = np.array([statistic(row) for row in resampled])
    return float(values.std(ddof=1))


def radial_bin_edges(target: GeneralizedCauchy, bins: int) -> np.ndarray:
    """Equal-probability radial edges up to the 0.999 quantile."""
    levels = np.linspace(0.0, RADIAL_COVERAGE, bins + 1)
    edges = cauchy_radial_quantile(target, levels)
    edges[0] = 0.0
    return edges


def radial_tv_estimate(
    samples,
    target: GeneralizedCauchy,
    bins: int = 200,
    rng: RngLike = None,
    n_boot: int = 200,
) -> DivergenceEstimate:
    """TV between the empirical and analytic radial laws.

    `bins` equal-probability bins up to the analytic 0.999 quantile plus one
    tail bin. The standard error comes from a multinomial bootstrap of the
    bin counts.
    """
    radii = _radii(samples)
    n = radii.size
    if n < 100 * bins:
        logger.debug("radial TV with n=%d < 100·bins=%d; noise floor will dominate", n, 100 * bins)
    edges = radial_bin_edges(target, bins)
    idx = np.searchsorted(edges[1:], radii, side="right")
    counts = np.bincount(idx, minlength=bins + 1).astype(float)
    q = np.append(np.full(bins, RADIAL_COVERAGE / bins), 1.0 - RADIAL_COVERAGE)

    value = tv_distance(counts / n, q)
    boot = rng if rng is not None else RngStream(seed=0)
    se = _bootstrap_se(counts, n, lambda p: tv_distance(p, q), boot, n_boot)
    return DivergenceEstimate(kind="radial_tv", value=min(value, 1.0), n=n, bins=bins, se_proxy=se)


def _line_cdf(target: GeneralizedCauchy, x):
    # d = 1: P(X ≤ x) = ½ + ½·sign(x)·P(|X| ≤ |x|)
    x = np.asarray(x, dtype=float)
    return 0.5 + 0.5 * np.sign(x) * cauchy_radial_cdf(target, np.abs(x))


def hist_chi2_estimate(
    samples,
    target: GeneralizedCauchy,
    bins: int = 100,
    rng: RngLike = None,
    n_boot: int = 200,
) -> DivergenceEstimate:
    """Histogram χ²(ρ̂ | π) in one dimension.

    Equal-width bins on the central 0.999 mass; bins with analytic mass
    below 1e-8 are merged with both tails into one bin. The estimate carries
    an upward bias of order bins/n.
    """
    samples = np.asarray(samples, dtype=float)
    if target.dim != 1 or (samples.ndim == 2 and samples.shape[1] != 1):
        raise UnsupportedDimensionError("χ² proxy supported in d=1 only")
    x = samples.reshape(-1)
    if x.size == 0:
        raise ParameterRangeError("empty sample set")
    n = x.size

    r_max = cauchy_radial_quantile(target, RADIAL_COVERAGE)
    edges = np.linspace(-r_max, r_max, bins + 1)
    q_inner = np.diff(_line_cdf(target, edges))
    keep = q_inner > CHI2_MIN_MASS

    idx = np.searchsorted(edges, x, side="right") - 1
    inside = (idx >= 0) & (idx < bins)
    inner_counts = np.bincount(idx[inside], minlength=bins).astype(float)

    counts = np.append(inner_counts[keep], n - inner_counts[keep].sum())
    q = np.append(q_inner[keep], 1.0 - q_inner[keep].sum())

    value = chi2_divergence(counts / n, q)
    boot = rng if rng is not None else RngStream(seed=0)
    se = _bootstrap_se(counts, n, lambda p: chi2_divergence(p, q), boot, n_boot)
    return DivergenceEstimate(kind="hist_chi2", value=value, n=n, bins=bins, se_proxy=se)


def radial_ks_estimate(
    samples, target: GeneralizedCauchy, rng: RngLike = None, n_boot: int = 0
) -> DivergenceEstimate:
    """One-sample KS statistic of the radii against cauchy_radial_cdf."""
    radii = _radii(samples)
    n = radii.size
    result = stats.kstest(radii, lambda r: cauchy_radial_cdf(target, r))
    se = 0.0
    if n_boot > 0:
        gen = as_generator(rng if rng is not None else RngStream(seed=0))
        boots = [
            stats.kstest(gen.choice(radii, n), lambda r: cauchy_radial_cdf(target, r)).statistic
            for _ in range(n_boot)
        ]
        se = float(np.std(boots, ddof=1))
    return DivergenceEstimate(
        kind="ks",
        value=float(result.statistic),
        n=n,
        se_proxy=se,
        threshold=KS_CRITICAL_1PCT / math.sqrt(n),
    )


def radial_ks_two_sample(a, b) -> float:
    return float(stats.ks_2samp(_radii(a), _radii(b)).statistic)


def isotropy_statistic(samples, rotation: np.ndarray) -> float:
    """Largest per-coordinate two-sample KS between X and R·X."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    rotated = samples @ np.asarray(rotation).T
    return max(
        float(stats.ks_2samp(samples[:, j], rotated[:, j]).statistic)
        for j in range(samples.shape[1])
    )


def geometric_fit_pvalue(rejections, min_expected: float = 20.0) -> float:
    """χ² p-value of rejection counts against a geometric law with fitted p.

    Counts past the last bin expecting min_expected draws are folded into
    one tail bin.
    """
    rejections = np.asarray(rejections, dtype=np.int64).ravel()
    n = rejections.size
    p = 1.0 / (1.0 + rejections.mean())
    if p >= 1.0:
        return 1.0
    top = max(1, int(math.log(min_expected / n) / math.log(1.0 - p)))
    probs = p * (1.0 - p) ** np.arange(top)
    observed = np.bincount(np.minimum(rejections, top), minlength=top + 1)
    expected = n * np.append(probs, 1.0 - probs.sum())
    return float(stats.chisquare(observed, expected, ddof=1).pvalue)


@dataclass(frozen=True)
class MomentTrack:
    iterations: List[int]
    mean: np.ndarray
    se: np.ndarray


def surrogate_values(samples, kappa: float, nu2: float) -> np.ndarray:
    """G(x) = (1 + |x|²)^(κ(d+ν₂)/2) for each row."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    d = samples.shape[1]
    expo = 0.5 * kappa * (d + nu2)
    with np.errstate(over="ignore"):
        return np.exp(expo * np.log1p(np.sum(samples * samples, axis=1)))


def surrogate_moment(samples, kappa: float, nu2: float):
    """Monte Carlo E[G] with its standard error."""
    g = surrogate_values(samples, kappa, nu2)
    n = g.size
    mean = float(g.mean())
    se = float(g.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    if n > 3 and np.isfinite(mean) and g.var() > 0:
        kurt = float(stats.kurtosis(g))
        if not np.isfinite(kurt) or kurt > max(50.0, math.sqrt(n)):
            warnings.warn(
                f"surrogate moment kurtosis {kurt:.3g} suggests infinite variance; "
                "E[G] estimate unreliable",
                UnreliableEstimateWarning,
                stacklevel=2,
            )
    elif not np.isfinite(mean):
        warnings.warn("surrogate moment overflowed", UnreliableEstimateWarning, stacklevel=2)
    return mean, se


def surrogate_moment_track(chain: ChainRun, kappa: float, nu2: float) -> MomentTrack:
    means, ses = [], []
    for k in chain.iterations:
        mean, se = surrogate_moment(chain.at(k), kappa, nu2)
        means.append(mean)
        ses.append(se)
    return MomentTrack(iterations=list(chain.iterations), mean=np.array(means), se=np.array(ses))


def track_divergence(
    chain: ChainRun, target: GeneralizedCauchy, kind: str = "radial_tv", bins: Optional[int] = None
) -> List[DivergenceEstimate]:
    """Apply one estimator to every recorded iteration."""
    out = []
    for k in chain.iterations:
        batch = chain.at(k)
        if kind == "radial_tv":
            out.append(radial_tv_estimate(batch, target, bins=bins or 200))
        elif kind == "hist_chi2":
            out.append(hist_chi2_estimate(batch, target, bins=bins or 100))
        elif kind == "ks":
            out.append(radial_ks_estimate(batch, target))
        else:
            raise ParameterRangeError(f"unknown divergence kind '{kind}'")
    return out
