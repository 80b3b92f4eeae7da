"""Evaluators for the convergence upper bounds and TV lower bounds.

Lower bounds are assembled from their ingredients with explicit
constants: a tail function f with π(G ≥ y) ≥ f(y), a bound on E[G(x_k)]
along the chain, and the envelope TV ≥ sup_y f(y) - E[G]/y taken on a
log-spaced grid. Every lower bound is clamped to [0, 1].
"""
import logging
import math
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.special import gammaln

from htprox.errors import MissingRegularityError, ParameterRangeError
from htprox.stablernd import AbsMoment, stable_abs_moment
from htprox.targets import tail_constant

logger = logging.getLogger(__name__)

Y_GRID_POINTS = 400
Y_GRID_DECADES = 12.0
# float64 headroom for g/y
Y_GRID_MAX_DECADES = 300.0


def default_y_grid(points: int = Y_GRID_POINTS, decades: float = Y_GRID_DECADES) -> np.ndarray:
    return np.logspace(0.0, decades, points)


def bracketing_y_grid(a: float, scale: float, moment: float) -> np.ndarray:
    """Default grid, extended to three decades past the maximizer when needed.

    For f(y) ≈ scale·y^(-a) the sup of f(y) - moment/y sits at
    y* = (moment / (a·scale))^(1/(1-a)). Point density stays at the
    default 400 points per 12 decades.
    """
    if scale <= 0 or not 0.0 < a < 1.0 or not math.isfinite(moment):
        return default_y_grid()
    log10_star = (math.log10(moment) - math.log10(a * scale)) / (1.0 - a)
    decades = min(max(Y_GRID_DECADES, log10_star + 3.0), Y_GRID_MAX_DECADES)
    if decades == Y_GRID_DECADES:
        return default_y_grid()
    return default_y_grid(math.ceil(Y_GRID_POINTS * decades / Y_GRID_DECADES), decades)


class BoundQuery(BaseModel):
    """Free parameters of a lower-bound evaluation."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    nu1: float = Field(ge=0.0)
    nu2: float = Field(gt=0.0)
    d: int = Field(ge=1)
    alpha: Optional[float] = Field(default=None, gt=0.0, le=2.0)
    tau: Optional[float] = Field(default=None, gt=0.0)
    kappa: Optional[float] = Field(default=None, ge=0.0)
    delta: Optional[float] = Field(default=None, gt=0.0)
    E_G0: float = Field(default=1.0, ge=1.0)
    y_grid: Optional[List[float]] = None
    C_low: Optional[float] = None
    K0: Optional[int] = None
    kappa_delta: Optional[float] = None
    C_delta_mu0: Optional[float] = None

    @field_validator("y_grid")
    @classmethod
    def _grid_increasing(cls, grid):
        if grid is None:
            return grid
        arr = np.asarray(grid, dtype=float)
        if arr.size == 0 or arr[0] < 1.0 or np.any(np.diff(arr) <= 0):
            raise ValueError("y_grid must be strictly increasing and ≥ 1")
        return grid

    @field_validator("nu2")
    @classmethod
    def _band(cls, nu2, info):
        nu1 = info.data.get("nu1")
        if nu1 is not None and nu2 < nu1:
            raise ValueError(f"need nu1 ≤ nu2, got ({nu1}, {nu2})")
        return nu2

    def grid(self, a: float, scale: float, moment: float) -> np.ndarray:
        if self.y_grid is not None:
            return np.asarray(self.y_grid, dtype=float)
        return bracketing_y_grid(a, scale, moment)


def tv_lower_envelope(f_values: np.ndarray, moment: float, y: np.ndarray) -> float:
    """sup_y f(y) - moment/y, clamped to [0, 1]."""
    best = float(np.max(f_values - moment / y))
    return min(max(best, 0.0), 1.0)


# ---------------------------------------------------------------- upper bounds


def chi2_upper_bound(C_fpi: float, eta: float, k: int, chi2_0: float) -> float:
    """χ²(ρ_k | π) ≤ exp(-kη/(C + η)) · χ²(ρ_0 | π)."""
    if C_fpi <= 0 or eta <= 0 or chi2_0 < 0 or k < 0:
        raise ParameterRangeError("chi2_upper_bound needs C_fpi, eta > 0 and k, chi2_0 ≥ 0")
    return math.exp(-k * eta / (C_fpi + eta)) * chi2_0


def tv_from_chi2(chi2: float) -> float:
    """TV ≤ √(χ²/2), capped at 1."""
    return min(math.sqrt(max(chi2, 0.0) / 2.0), 1.0)


def inexact_tv_bound(tv_0: float, k: int, eps_tv: float) -> float:
    """TV(ρ̃_k, ρ_k) ≤ TV(ρ̃_0, ρ_0) + k·ε_TV."""
    if not 0.0 <= tv_0 <= 1.0:
        raise ParameterRangeError(f"tv_0 must lie in [0, 1], got {tv_0}")
    return tv_0 + k * eps_tv


def iterations_to_eps(C_fpi: float, eta: float, chi2_0: float, eps: float) -> int:
    """K₀ = ⌈(1 + C/η) · log(χ²_0 / ε²)⌉."""
    if not 0.0 < eps < 1.0:
        raise ParameterRangeError(f"eps must lie in (0, 1), got {eps}")
    raw = (1.0 + C_fpi / eta) * math.log(chi2_0 / eps**2)
    return max(0, math.ceil(round(raw, 9)))


def wfpi_beta(c: float, nu: float, r: float) -> float:
    """β(r) = c(1 + r^(-(1-ν)/ν))."""
    return c * (1.0 + r ** (-(1.0 - nu) / nu))


def wfpi_chi2_bound(
    c: float, nu: float, eta: float, k: int, r: float, chi2_0: float, rinf_0: float
) -> float:
    """χ² bound under a weak FPI with parameter β(r)."""
    if not 0.0 < nu < 1.0:
        raise ParameterRangeError(f"nu must lie in (0, 1), got {nu}")
    if r <= 0:
        raise ParameterRangeError(f"r must be positive, got {r}")
    beta = wfpi_beta(c, nu, r)
    decay = math.exp(-k * eta / (beta + eta)) * chi2_0
    floor = 4.0 * r * -math.expm1(-(k + 1) * eta / (beta + eta)) * math.exp(2.0 * rinf_0)
    return decay + floor


def wfpi_optimal_r(c: float, nu: float, eps: float, k: int, eta: float, rinf_0: float) -> float:
    return (
        math.exp(-2.0 * nu * rinf_0) * c**nu * eps**nu / ((k + 1) ** nu * eta**nu)
    )


def wfpi_iteration_threshold(
    c: float, nu: float, eta: float, eps: float, chi2_0: float, rinf_0: float
) -> float:
    """Iterations after which the weak-FPI bound is below ε (optimal r)."""
    bracket = (
        1.0
        + c ** (1.0 / nu) * eta ** (-1.0 / nu)
        + 2.0 ** (1.0 / nu)
        * c
        / eta
        * eps ** (-(1.0 - nu) / nu)
        * math.exp(2.0 * (1.0 - nu) * rinf_0 / nu)
    )
    return bracket * math.log(2.0 * chi2_0 / eps) ** (1.0 / nu)


def renyi_inf_gaussian_init(d: int, nu: float) -> float:
    """Bound on R∞(N(0, I_d) | π_ν): ln(2^(ν/2) Γ(ν/2)) + ln((d+ν)/(2e))."""
    return 0.5 * nu * math.log(2.0) + gammaln(nu / 2.0) + math.log((d + nu) / (2.0 * math.e))


# ---------------------------------------------------- Langevin / Gaussian prox


def kappa_delta(d: int, nu2: float, delta: float) -> float:
    return max(1.0, 2.0 / (d + nu2), nu2 * (1.0 + delta) / ((d + nu2) * delta))


def c_delta_mu0(initial_samples, d: int, nu2: float, kappa: float) -> float:
    """(1/(d+ν₂)) · E[(1 + |X₀|²)^γ]^(1/γ) with γ = κ(d+ν₂)/2, by Monte Carlo."""
    x = np.atleast_2d(np.asarray(initial_samples, dtype=float))
    gamma = 0.5 * kappa * (d + nu2)
    moment = float(np.mean(np.exp(gamma * np.log1p(np.sum(x * x, axis=1)))))
    return moment ** (1.0 / gamma) / (d + nu2)


def delta_schedule(t: float, d: int, nu1: float, nu2: float) -> float:
    """δ = 2 ln ln t/(ν₂ ln t) ∧ 2 ln ln d/((ν₂-ν₁) ln d).

    The dimension term is skipped when ν₁ = ν₂ or ln ln d ≤ 0.
    """
    if t <= math.e:
        raise ParameterRangeError(f"delta schedule needs t > e, got {t}")
    delta = 2.0 * math.log(math.log(t)) / (nu2 * math.log(t))
    if nu2 > nu1 and d > math.e:
        delta = min(delta, 2.0 * math.log(math.log(d)) / ((nu2 - nu1) * math.log(d)))
    return delta


def _check_gaussian_kappa(q: BoundQuery) -> float:
    if q.kappa is None:
        raise ParameterRangeError("kappa is required")
    floor = max(1.0, 2.0 / (q.d + q.nu2))
    if q.kappa < floor:
        raise ParameterRangeError(f"kappa must be ≥ {floor:.6g}, got {q.kappa}")
    return q.kappa


def _tail_scale(q: BoundQuery) -> float:
    return tail_constant(q.nu1) * q.d ** (q.nu1 / 2.0)


def gaussian_tail_f(q: BoundQuery, y: np.ndarray) -> np.ndarray:
    """π(G ≥ y) ≥ C_ν₁ d^(ν₁/2) (1 + y^(-2/m))^(-(d+ν₂)/2) y^(-ν₂/m), m = κ(d+ν₂)."""
    m = q.kappa * (q.d + q.nu2)
    return (
        tail_constant(q.nu1)
        * q.d ** (q.nu1 / 2.0)
        * (1.0 + y ** (-2.0 / m)) ** (-(q.d + q.nu2) / 2.0)
        * y ** (-q.nu2 / m)
    )


def gaussian_moment_growth(E_G0: float, kappa: float, d: int, nu2: float, s: float) -> float:
    """(E_G0^(2/m) + 4κ(d+ν₂)s)^(m/2), m = κ(d+ν₂)."""
    m = kappa * (d + nu2)
    base = E_G0 ** (2.0 / m) + 4.0 * kappa * (d + nu2) * s
    with np.errstate(over="ignore"):
        return float(np.exp(0.5 * m * np.log(base)))


def ld_tv_lower_bound(q: BoundQuery, t: float) -> float:
    """TV lower bound for the Langevin diffusion at time t.

    Compared against the Gaussian proximal bound at t = ηk, where the two
    coincide: the k-step moment growth is evaluated at the same time.
    """
    if t < 0:
        raise ParameterRangeError(f"t must be ≥ 0, got {t}")
    kappa = _check_gaussian_kappa(q)
    g = gaussian_moment_growth(q.E_G0, kappa, q.d, q.nu2, t)
    y = q.grid(q.nu2 / (kappa * (q.d + q.nu2)), _tail_scale(q), g)
    return tv_lower_envelope(gaussian_tail_f(q, y), g, y)


def gaussian_prox_tv_lower_bound(q: BoundQuery, k: int, eta: float) -> float:
    """TV lower bound for iterate k of the Gaussian proximal sampler."""
    if k < 0 or eta <= 0:
        raise ParameterRangeError("need k ≥ 0 and eta > 0")
    kappa = _check_gaussian_kappa(q)
    g = gaussian_moment_growth(q.E_G0, kappa, q.d, q.nu2, eta * k)
    y = q.grid(q.nu2 / (kappa * (q.d + q.nu2)), _tail_scale(q), g)
    return tv_lower_envelope(gaussian_tail_f(q, y), g, y)


# ------------------------------------------------------------ stable prox


def stable_lower_bound_exponent(d: int, nu1: float, nu2: float, tau: float) -> float:
    """g(d, ν₁, ν₂, τ) = ν₂ / (τ(d+ν₁) - ν₂(d+ν₂))."""
    return nu2 / (tau * (d + nu1) - nu2 * (d + nu2))


def _check_tau(q: BoundQuery) -> float:
    if q.tau is None or q.alpha is None:
        raise ParameterRangeError("tau and alpha are required for stable bounds")
    lo = q.nu2 * (q.d + q.nu2) / (q.d + q.nu1)
    if not lo < q.tau < q.alpha:
        raise ParameterRangeError(f"tau must lie in ({lo:.6g}, {q.alpha}), got {q.tau}")
    return q.tau


def stable_moment_recursion(
    E_G0: float, k: int, eta: float, alpha: float, tau: float, m_tau: float
) -> float:
    """E[G(x_k)] bound from k steps of the single-step recursion.

    E_{j+1} = (1+r)^(τ/2) E_j + 2^(τ/α) η^(τ/α) (1 + 1/r)^(τ/2) m_τ with
    r = 2/(τk), summed as a geometric series.
    """
    if k == 0:
        return E_G0
    r = 2.0 / (tau * k)
    c = 0.5 * tau * math.log1p(r)
    b = (2.0 * eta) ** (tau / alpha) * (1.0 + 1.0 / r) ** (tau / 2.0) * m_tau
    return math.exp(k * c) * E_G0 + math.expm1(k * c) / math.expm1(c) * b


def stable_moment_asymptotic(
    E_G0: float, k: int, eta: float, alpha: float, tau: float, m_tau: float
) -> float:
    return E_G0 + m_tau * k ** (tau / 2.0 + 1.0) * eta ** (tau / alpha)


def stable_tail_f(q: BoundQuery, y: np.ndarray) -> np.ndarray:
    """C_ν₁ d^(ν₁/2) (1 + y^(-2/m₁))^(-(d+ν₂)/2) y^(-ν₂/m₁), m₁ = κ(d+ν₁), κ = τ/(d+ν₂)."""
    kappa = q.tau / (q.d + q.nu2)
    m1 = kappa * (q.d + q.nu1)
    return (
        tail_constant(q.nu1)
        * q.d ** (q.nu1 / 2.0)
        * (1.0 + y ** (-2.0 / m1)) ** (-(q.d + q.nu2) / 2.0)
        * y ** (-q.nu2 / m1)
    )


def stable_prox_tv_lower_bound(
    q: BoundQuery, k: int, eta: float, m_tau: Union[float, AbsMoment, None] = None
) -> float:
    """TV lower bound for iterate k of the stable proximal sampler.

    m_tau defaults to the closed-form τ-th moment of the unit-time stable law.
    """
    tau = _check_tau(q)
    if m_tau is None:
        m_tau = stable_abs_moment(q.alpha, tau, q.d, mode="subordination")
    if isinstance(m_tau, AbsMoment):
        if m_tau.infinite:
            raise ParameterRangeError(f"m_tau is infinite for alpha={q.alpha}, tau={tau}")
        m_tau = m_tau.value
    if not math.isfinite(m_tau):
        raise ParameterRangeError("m_tau must be finite")
    moment = stable_moment_recursion(q.E_G0, k, eta, q.alpha, tau, m_tau)
    a = q.nu2 * (q.d + q.nu2) / (tau * (q.d + q.nu1))
    y = q.grid(a, _tail_scale(q), moment)
    return tv_lower_envelope(stable_tail_f(q, y), moment, y)


# ------------------------------------------------------------- complexity


Scenario = Literal[
    "ideal",
    "implementable_nu_ge_1",
    "implementable_nu_lt_1",
    "gaussian_lower",
    "stable_lower",
    "langevin_lower",
]


class ComplexityRecord(BaseModel):
    """Scaling law of an iteration count.

    d_exponent and eps_exponent are the powers of d and ε (ε-exponents are
    negative for poly(1/ε) laws, 0 for log(1/ε) laws).
    """

    scenario: str
    formula: str
    d_exponent: float
    eps_exponent: float
    log_factor: bool
    iterations: float


def _need(name, value):
    if value is None:
        raise MissingRegularityError(f"complexity table needs '{name}'")
    return value


def complexity_tables(
    scenario: Scenario,
    d: int,
    eps: float,
    nu: Optional[float] = None,
    C_fpi: Optional[float] = None,
    eta: Optional[float] = None,
    c: Optional[float] = None,
    tau: Optional[float] = None,
    multiplier: float = 1.0,
) -> ComplexityRecord:
    """Iteration-count scaling for one scenario, evaluated at the given constants."""
    if scenario == "ideal":
        C, h = _need("C_fpi", C_fpi), _need("eta", eta)
        n = multiplier * (1.0 + C / h) * math.log(d / eps)
        return ComplexityRecord(
            scenario=scenario, formula="(1 + C_FPI/η) · log(d/ε)",
            d_exponent=0.0, eps_exponent=0.0, log_factor=True, iterations=n,
        )
    if scenario == "implementable_nu_ge_1":
        C, v = _need("C_fpi", C_fpi), _need("nu", nu)
        n = multiplier * C * d**0.5 * (d + v) ** 4 * math.log(d / eps)
        return ComplexityRecord(
            scenario=scenario, formula="C_FPI · d^(1/2) · (d+ν)^4 · log(d/ε)",
            d_exponent=4.5, eps_exponent=0.0, log_factor=True, iterations=n,
        )
    if scenario == "implementable_nu_lt_1":
        cc, v = _need("c", c), _need("nu", nu)
        if not 0.0 < v < 1.0:
            raise ParameterRangeError(f"nu must lie in (0, 1), got {v}")
        first = cc ** (1.0 / v) * d ** (1.0 / (2.0 * v) + 4.0 / v**2)
        second = cc * d ** (0.5 + 4.0 / v) * eps ** (1.0 - 1.0 / v)
        return ComplexityRecord(
            scenario=scenario,
            formula="max(c^(1/ν) d^(1/(2ν)+4/ν²), c d^(1/2+4/ν) ε^(1-1/ν))",
            d_exponent=max(1.0 / (2.0 * v) + 4.0 / v**2, 0.5 + 4.0 / v),
            eps_exponent=-(1.0 - v) / v,
            log_factor=True,
            iterations=multiplier * max(first, second),
        )
    if scenario == "gaussian_lower":
        v = _need("nu", nu)
        return ComplexityRecord(
            scenario=scenario, formula="d^(3/2) · ε^(-2/ν)",
            d_exponent=1.5, eps_exponent=-2.0 / v, log_factor=True,
            iterations=multiplier * d**1.5 * eps ** (-2.0 / v),
        )
    if scenario == "stable_lower":
        v, t = _need("nu", nu), _need("tau", tau)
        if not 0.0 < v < t < 1.0:
            raise ParameterRangeError(f"need 0 < nu < tau < 1, got nu={v}, tau={t}")
        d_exp = (t + 8.0 * t / v) / (2.0 + t)
        e_exp = -2.0 * (t - v) / (v * (2.0 + t))
        return ComplexityRecord(
            scenario=scenario, formula="d^((τ+8τ/ν)/(2+τ)) · ε^(-2(τ-ν)/(ν(2+τ)))",
            d_exponent=d_exp, eps_exponent=e_exp, log_factor=False,
            iterations=multiplier * d**d_exp * eps**e_exp,
        )
    if scenario == "langevin_lower":
        v = _need("nu", nu)
        return ComplexityRecord(
            scenario=scenario, formula="ε^(-2/ν)",
            d_exponent=0.0, eps_exponent=-2.0 / v, log_factor=True,
            iterations=multiplier * eps ** (-2.0 / v),
        )
    raise ParameterRangeError(f"unknown scenario '{scenario}'")
