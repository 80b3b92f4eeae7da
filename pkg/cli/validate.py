"""Validation suite: registered statistical checks with pass/fail verdicts"""
import csv
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import integrate

from cli.config import ExperimentConfig, ValidationConfig
from htprox import theory
from htprox.diagnostics import (
    UnreliableEstimateWarning,
    geometric_fit_pvalue,
    isotropy_statistic,
    radial_ks_estimate,
    radial_ks_two_sample,
    surrogate_moment,
)
from htprox.oracles import InexactOracle, RestrictedGaussianOracle, rgo_sample, raso_sample
from htprox.rng import RngStream
from htprox.samplers import SamplerConfig, run_chains, step_size_policy
from htprox.stablernd import (
    StableSpec,
    empirical_char_fn,
    sample_cauchy_vector,
    sample_isotropic_stable,
    stable_abs_moment,
    stable_char_fn,
)
from htprox.targets import GeneralizedCauchy, cauchy_radial_cdf, cauchy_radial_pdf, sample_exact

logger = logging.getLogger(__name__)

REPORT_NAME = "validation.csv"
REPORT_HEADER = ("name", "group", "statistic", "threshold", "passed")
ORACLE_SUP_TOLERANCE = 0.02
KS_1PCT = 1.63


@dataclass(frozen=True)
class CheckResult:
    name: str
    group: str
    statistic: float
    threshold: float
    passed: bool


@dataclass(frozen=True)
class _Check:
    name: str
    group: str
    fn: Callable


_REGISTRY: List[_Check] = []


def check(name: str, group: str):
    """Register a check; the function returns (statistic, threshold, passed)."""

    def register(fn):
        _REGISTRY.append(_Check(name, group, fn))
        return fn

    return register


def registered_checks(groups: Optional[Sequence[str]] = None) -> List[_Check]:
    return [c for c in _REGISTRY if groups is None or c.group in groups]


@dataclass
class ValidationContext:
    settings: ValidationConfig
    seed: int

    def stream(self, stream_id: int) -> np.random.Generator:
        return RngStream(seed=self.seed, stream_id=stream_id).generator()


# ------------------------------------------------------------------ rng


@check("stable_char_fn", "rng")
def _stable_char_fn(ctx: ValidationContext):
    n = ctx.settings.n_draws
    worst = 0.0
    case = 0
    for alpha in (0.5, 1.0, 1.5, 2.0):
        for dim in (1, 3):
            for t in (0.5, 2.0):
                x = sample_isotropic_stable(
                    StableSpec(alpha=alpha, t=t, dim=dim), ctx.stream(case), size=n
                )
                case += 1
                for r in (0.1, 0.3, 0.6, 1.0, 2.0):
                    xi = np.zeros(dim)
                    xi[0] = r
                    gap = abs(empirical_char_fn(x, xi) - stable_char_fn(alpha, t, xi))
                    worst = max(worst, gap)
    threshold = 4.0 / math.sqrt(n)
    return worst, threshold, worst <= threshold


@check("cauchy_generators_agree", "rng")
def _cauchy_generators(ctx: ValidationContext):
    n = ctx.settings.n_draws
    a = sample_isotropic_stable(StableSpec(alpha=1.0, t=1.0, dim=3), ctx.stream(100), size=n)
    b = sample_cauchy_vector(1.0, 3, ctx.stream(101), size=n)
    stat = radial_ks_two_sample(a, b)
    threshold = max(0.01, KS_1PCT * math.sqrt(2.0 / n))
    return stat, threshold, stat <= threshold


@check("cauchy_abs_moment", "rng")
def _cauchy_abs_moment(ctx: ValidationContext):
    mc = stable_abs_moment(
        1.0, 0.5, 1, mode="monte_carlo", rng=ctx.stream(102), n=ctx.settings.n_draws
    )
    exact = stable_abs_moment(1.0, 0.5, 1).value
    z = abs(mc.value - exact) / mc.se
    return z, 3.0, z <= 3.0


@check("self_similarity", "rng")
def _self_similarity(ctx: ValidationContext):
    n = ctx.settings.n_draws
    alpha, t = 1.5, 2.0
    direct = sample_isotropic_stable(StableSpec(alpha=alpha, t=t, dim=2), ctx.stream(103), size=n)
    unit = sample_isotropic_stable(StableSpec(alpha=alpha, t=1.0, dim=2), ctx.stream(104), size=n)
    stat = radial_ks_two_sample(direct, t ** (1.0 / alpha) * unit)
    threshold = KS_1PCT * math.sqrt(2.0 / n)
    return stat, threshold, stat <= threshold


@check("isotropy", "rng")
def _isotropy(ctx: ValidationContext):
    n = ctx.settings.n_draws
    c, s = math.cos(0.7), math.sin(0.7)
    rotation = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    worst = 0.0
    for i, alpha in enumerate((1.0, 1.5)):
        x = sample_isotropic_stable(
            StableSpec(alpha=alpha, t=1.0, dim=3), ctx.stream(105 + i), size=n
        )
        worst = max(worst, isotropy_statistic(x, rotation))
    threshold = max(0.01, KS_1PCT * math.sqrt(2.0 / n))
    return worst, threshold, worst <= threshold


# -------------------------------------------------------------- targets


@check("radial_cdf_quadrature", "targets")
def _radial_cdf(ctx: ValidationContext):
    worst = 0.0
    for dim in (1, 3):
        for nu in (0.5, 2.0):
            target = GeneralizedCauchy(dim, nu)
            for R in (0.1, 1.0, 5.0):
                ref, _ = integrate.quad(lambda r: cauchy_radial_pdf(target, r), 0.0, R, limit=200)
                worst = max(worst, abs(cauchy_radial_cdf(target, R) - ref))
    return worst, 1e-7, worst <= 1e-7


@check("exact_sampler_ks", "targets")
def _exact_sampler(ctx: ValidationContext):
    target = GeneralizedCauchy(3, 0.8)
    est = radial_ks_estimate(sample_exact(target, ctx.settings.n_draws, ctx.stream(200)), target)
    return est.value, est.threshold, est.value <= est.threshold


@check("growth_band", "targets")
def _growth_band(ctx: ValidationContext):
    gen = ctx.stream(201)
    worst = -math.inf
    for dim in (1, 3):
        for nu in (0.5, 2.0):
            target = GeneralizedCauchy(dim, nu)
            x = gen.standard_cauchy((1000, dim))
            r2 = np.sum(x * x, axis=1)
            grad = target.grad(x)
            inner = np.sum(x * grad, axis=1)
            # (d+ν₁)|x|²/(1+|x|²) ≤ ⟨x, ∇V⟩ ≤ (d+ν₂)|x|²/(1+|x|²)
            low = (dim + target.nu1) * r2 / (1.0 + r2)
            high = (dim + target.nu2) * r2 / (1.0 + r2)
            envelope = (dim + target.nu2) * np.sqrt(r2) / (1.0 + r2)
            gaps = (low - inner, inner - high, np.linalg.norm(grad, axis=1) - envelope)
            worst = max(worst, max(float(np.max(g)) for g in gaps))
    return worst, 1e-9, worst <= 1e-9


# -------------------------------------------------------------- oracles


def conditional_cdf(target: GeneralizedCauchy, y: float, kernel: Callable, points: np.ndarray):
    """CDF of π(x)·kernel(x - y) at sorted points, by piecewise quadrature."""

    def density(x):
        return math.exp(-float(target.potential(np.array([x])))) * kernel(x - y)

    cumulative = [integrate.quad(density, -np.inf, points[0], limit=400)[0]]
    for a, b in zip(points[:-1], points[1:]):
        cumulative.append(cumulative[-1] + integrate.quad(density, a, b, limit=400)[0])
    z = cumulative[-1] + integrate.quad(density, points[-1], np.inf, limit=400)[0]
    return np.array(cumulative) / z


def _oracle_sup_distance(ctx, sampler, kernel_for, stream0):
    target = GeneralizedCauchy(1, 2.0)
    n = ctx.settings.n_draws
    worst = 0.0
    case = 0
    for y in (-1.0, 0.0, 0.7):
        for eta in (0.05, 0.2):
            centres = np.full((n, 1), y)
            x = np.sort(sampler(target, centres, eta, ctx.stream(stream0 + case)).sample[:, 0])
            case += 1
            points = np.quantile(x, np.linspace(0.01, 0.99, 99))
            reference = conditional_cdf(target, y, kernel_for(eta), points)
            empirical = np.searchsorted(x, points, side="right") / n
            worst = max(worst, float(np.max(np.abs(empirical - reference))))
    return worst, ORACLE_SUP_TOLERANCE, worst <= ORACLE_SUP_TOLERANCE


@check("rgo_exactness", "oracles")
def _rgo_exactness(ctx: ValidationContext):
    return _oracle_sup_distance(
        ctx,
        lambda target, y, eta, gen: rgo_sample(target, y, eta, gen),
        lambda eta: lambda u: math.exp(-u * u / (2.0 * eta)),
        300,
    )


@check("raso_exactness", "oracles")
def _raso_exactness(ctx: ValidationContext):
    return _oracle_sup_distance(
        ctx,
        lambda target, y, eta, gen: raso_sample(target, y, eta, 1.0, gen),
        lambda eta: lambda u: eta / (math.pi * (eta * eta + u * u)),
        310,
    )


@check("rejections_geometric", "oracles")
def _rejections_geometric(ctx: ValidationContext):
    n = ctx.settings.n_draws
    out = raso_sample(GeneralizedCauchy(1, 2.0), np.full((n, 1), 1.5), 0.2, 1.0, ctx.stream(320))
    pvalue = geometric_fit_pvalue(out.rejections)
    return pvalue, 0.01, pvalue > 0.01


# ------------------------------------------------------------- samplers


@check("stationarity", "samplers")
def _stationarity(ctx: ValidationContext):
    cases = [
        (GeneralizedCauchy(1, 2.0), SamplerConfig(kind="gaussian_proximal")),
        (GeneralizedCauchy(1, 2.0), SamplerConfig(kind="stable_proximal", alpha=1.0)),
        (GeneralizedCauchy(1, 0.8), SamplerConfig(kind="stable_proximal", alpha=1.0)),
    ]
    worst_ratio = 0.0
    for i, (target, base) in enumerate(cases):
        cfg = base.model_copy(
            update={
                "iterations": 50,
                "chains": ctx.settings.chains,
                "init": "exact_target",
                "seed": ctx.seed + i,
            }
        )
        run = run_chains(cfg, target, [1, 10, 50])
        for k in run.iterations:
            est = radial_ks_estimate(run.at(k), target)
            worst_ratio = max(worst_ratio, est.value / est.threshold)
    return worst_ratio, 1.0, worst_ratio <= 1.0


@check("inexact_propagation", "samplers")
def _inexact_propagation(ctx: ValidationContext):
    eps_tv, steps, n = 0.01, 20, ctx.settings.chains
    target = GeneralizedCauchy(1, 2.0)
    eta = step_size_policy(target, "gaussian_proximal")
    oracle = InexactOracle(RestrictedGaussianOracle(target, eta), eps_tv)
    gen = ctx.stream(400)
    x = gen.standard_normal((n, 1))
    diverged = np.zeros(n, dtype=bool)
    for _ in range(steps):
        y = x + math.sqrt(eta) * gen.standard_normal(x.shape)
        outcome = oracle(y, gen)
        diverged |= outcome.corrupted
        x = outcome.sample
    frac = float(diverged.mean())
    p = 1.0 - (1.0 - eps_tv) ** steps
    se = math.sqrt(p * (1.0 - p) / n)
    z = abs(frac - p) / se
    return z, 3.0, z <= 3.0 and frac <= steps * eps_tv + 3.0 * se


@check("moment_growth", "samplers")
def _moment_growth(ctx: ValidationContext):
    target, kappa = GeneralizedCauchy(1, 2.0), 2.0
    m = kappa * (target.dim + target.nu)
    cfg = SamplerConfig(
        kind="gaussian_proximal",
        iterations=100,
        chains=ctx.settings.chains,
        init="point_mass",
        seed=ctx.seed,
    )
    run = run_chains(cfg, target, [1, 10, 50, 100])
    worst = -math.inf
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnreliableEstimateWarning)
        for k in run.iterations:
            mean, se = surrogate_moment(run.at(k), kappa, target.nu)
            lhs = mean ** (2.0 / m)
            se_lhs = (2.0 / m) * mean ** (2.0 / m - 1.0) * se
            rhs = 1.0 + 4.0 * m * run.eta * k
            worst = max(worst, lhs - rhs - 3.0 * se_lhs)
    return worst, 0.0, worst <= 0.0


# --------------------------------------------------------------- theory


@check("prox_langevin_identity", "theory")
def _identity(ctx: ValidationContext):
    q = theory.BoundQuery(nu1=2.0, nu2=2.0, d=1, kappa=2.0)
    eta = 1.0 / 12.0
    gap = 0.0
    for k in (1, 10, 100, 1000):
        prox = theory.gaussian_prox_tv_lower_bound(q, k, eta)
        ld = theory.ld_tv_lower_bound(q, eta * k)
        gap = max(gap, abs(prox - ld))
    return gap, 0.0, gap == 0.0


@check("lower_bounds_monotone", "theory")
def _monotone(ctx: ValidationContext):
    q = theory.BoundQuery(nu1=2.0, nu2=2.0, d=1, kappa=1.0)
    s = theory.BoundQuery(nu1=0.5, nu2=0.5, d=1, alpha=1.0, tau=0.8)
    ks = [0, 1, 10, 100, 1000, 10_000]
    worst = 0.0
    for curve in (
        [theory.gaussian_prox_tv_lower_bound(q, k, 1.0 / 3.0) for k in ks],
        [theory.stable_prox_tv_lower_bound(s, k, 0.05) for k in ks],
    ):
        worst = max(worst, float(np.max(np.diff(curve))))
    return worst, 0.0, worst <= 0.0


# --------------------------------------------------------------- runner


@dataclass
class ValidationReport:
    results: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def write_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(REPORT_HEADER)
            for r in self.results:
                writer.writerow([r.name, r.group, repr(r.statistic), repr(r.threshold), r.passed])
        return path


def groups_for(config: ExperimentConfig) -> List[str]:
    groups = list(config.validation.groups)
    if config.experiment == "validate_rng":
        return [g for g in groups if g in ("rng", "targets")]
    if config.experiment == "validate_oracles":
        return [g for g in groups if g in ("oracles", "samplers")]
    return groups


def run_validation(config: ExperimentConfig, out_dir: Optional[Path] = None) -> ValidationReport:
    """Run every registered check in the configured groups, in registration order."""
    ctx = ValidationContext(config.validation, config.seed)
    results = []
    for c in registered_checks(groups_for(config)):
        logger.info("running check %s", c.name)
        statistic, threshold, passed = c.fn(ctx)
        results.append(
            CheckResult(c.name, c.group, float(statistic), float(threshold), bool(passed))
        )
    report = ValidationReport(results)
    if out_dir is not None:
        report.write_csv(Path(out_dir) / REPORT_NAME)
    return report
