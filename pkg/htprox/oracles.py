"""Rejection-sampling oracles for the conditional law π^{X|Y}(·|y).

Every oracle proposes from the forward kernel centred at y and accepts with
probability exp(-(V(x) - floor)), floor being V(x*) or a known lower bound
C_low. Acceptance is decided in log space. Centres may be a single d-vector
or an (n, d) batch; each row is an independent oracle call.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Protocol

import numpy as np
from scipy.special import gammaln

from htprox.errors import OracleBudgetExceeded, ParameterRangeError
from htprox.rng import RngLike, as_generator
from htprox.stablernd import StableSpec, sample_cauchy_vector, sample_isotropic_stable
from htprox.targets import TargetSpec

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 10_000_000
# proposals drawn per round across all pending rows
_ROUND_SIZE = 4096
_MAX_PER_ROW = 1024

Proposal = Callable[[np.ndarray, np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class OracleOutcome:
    sample: np.ndarray
    rejections: np.ndarray
    corrupted: Optional[np.ndarray] = None


class Oracle(Protocol):
    def __call__(self, y: np.ndarray, rng: RngLike) -> OracleOutcome: ...

    def propose(self, y: np.ndarray, gen: np.random.Generator) -> np.ndarray: ...


def _log_acceptance(target: TargetSpec, x: np.ndarray, floor: float) -> np.ndarray:
    return np.minimum(-(target.potential(x) - floor), 0.0)


def _rejection_loop(target, y, propose: Proposal, floor, gen, budget) -> OracleOutcome:
    single = np.ndim(y) == 1
    centres = np.atleast_2d(np.asarray(y, dtype=float))
    n, d = centres.shape
    out = np.empty_like(centres)
    rejections = np.zeros(n, dtype=np.int64)
    pending = np.arange(n)

    while pending.size:
        m = int(min(_MAX_PER_ROW, max(1, _ROUND_SIZE // pending.size)))
        rep = np.repeat(centres[pending], m, axis=0)
        x = propose(rep, gen).reshape(pending.size, m, d)
        log_acc = _log_acceptance(target, x, floor)
        log_u = np.log1p(-gen.random((pending.size, m)))
        accept = log_u <= log_acc
        hit = accept.any(axis=1)
        first = np.argmax(accept, axis=1)

        rows = pending[hit]
        out[rows] = x[hit, first[hit]]
        rejections[rows] += first[hit]
        rejections[pending[~hit]] += m
        pending = pending[~hit]

        if pending.size and rejections[pending].max() >= budget:
            # chain holds the batch row here; run_chains maps it to a chain index
            worst = int(pending[np.argmax(rejections[pending])])
            raise OracleBudgetExceeded(budget, chain=worst)

    if single:
        return OracleOutcome(sample=out[0], rejections=rejections[0])
    return OracleOutcome(sample=out, rejections=rejections)


def _check_eta(eta: float):
    if eta <= 0:
        raise ParameterRangeError(f"eta must be positive, got {eta}")


def gaussian_proposal(eta: float) -> Proposal:
    sd = math.sqrt(eta)

    def propose(y, gen):
        return y + sd * gen.standard_normal(y.shape)

    return propose


def stable_proposal(eta: float, alpha: float) -> Proposal:
    """Forward fractional heat kernel p^(α)(η; y, ·)."""

    def propose(y, gen):
        n, d = y.shape
        if alpha == 1.0:
            return y + sample_cauchy_vector(eta, d, gen, size=n)
        return y + sample_isotropic_stable(StableSpec(alpha=alpha, t=eta, dim=d), gen, size=n)

    return propose


def rgo_sample(target: TargetSpec, y, eta: float, rng: RngLike, budget: int = DEFAULT_BUDGET):
    """Restricted Gaussian oracle: x ∝ π(x)·exp(-|x - y|²/(2η))."""
    _check_eta(eta)
    return _rejection_loop(
        target, y, gaussian_proposal(eta), target.min_value, as_generator(rng), budget
    )


def raso_sample(
    target: TargetSpec,
    y,
    eta: float,
    alpha: float,
    rng: RngLike,
    budget: int = DEFAULT_BUDGET,
):
    """Restricted α-stable oracle: x ∝ π(x)·p^(α)(η; x, y).

    For α = 1 the proposal is the Cauchy ratio construction; other α use
    the subordinated generator with the same accept step.
    """
    _check_eta(eta)
    if not 0.0 < alpha <= 2.0:
        raise ParameterRangeError(f"alpha must lie in (0, 2], got {alpha}")
    return _rejection_loop(
        target, y, stable_proposal(eta, alpha), target.min_value, as_generator(rng), budget
    )


def raso_sample_lower_bounded(
    target: TargetSpec,
    c_low: float,
    y,
    eta: float,
    alpha: float,
    rng: RngLike,
    budget: int = DEFAULT_BUDGET,
):
    """RαSO accepting with exp(-V(x) + C_low); no minimizer needed."""
    _check_eta(eta)
    if not 0.0 < alpha <= 2.0:
        raise ParameterRangeError(f"alpha must lie in (0, 2], got {alpha}")
    min_value = target.min_value
    if min_value is not None and c_low > min_value:
        raise ParameterRangeError(f"C_low={c_low} exceeds inf V = {min_value}")
    return _rejection_loop(
        target, y, stable_proposal(eta, alpha), c_low, as_generator(rng), budget
    )


def inexact_oracle_wrapper(
    inner: Oracle,
    y,
    eps_tv: float,
    rng: RngLike,
    corruptor: Optional[Proposal] = None,
) -> OracleOutcome:
    """Replace the exact answer by corruptor(y) with probability eps_tv.

    The default corruptor is the inner oracle's raw proposal without the
    accept step.
    """
    if not 0.0 <= eps_tv <= 1.0:
        raise ParameterRangeError(f"eps_tv must lie in [0, 1], got {eps_tv}")
    gen = as_generator(rng)
    corruptor = corruptor or inner.propose
    single = np.ndim(y) == 1
    centres = np.atleast_2d(np.asarray(y, dtype=float))

    flags = gen.random(centres.shape[0]) < eps_tv
    exact = inner(centres, gen)
    sample = exact.sample.copy()
    rejections = exact.rejections.copy()
    if flags.any():
        sample[flags] = corruptor(centres[flags], gen)
        rejections[flags] = 0
    if single:
        return OracleOutcome(sample=sample[0], rejections=rejections[0], corrupted=flags[0])
    return OracleOutcome(sample=sample, rejections=rejections, corrupted=flags)


@dataclass(frozen=True)
class RestrictedGaussianOracle:
    target: TargetSpec
    eta: float
    budget: int = DEFAULT_BUDGET

    def __call__(self, y, rng):
        return rgo_sample(self.target, y, self.eta, rng, self.budget)

    def propose(self, y, gen):
        return gaussian_proposal(self.eta)(np.atleast_2d(y), gen)


@dataclass(frozen=True)
class RestrictedStableOracle:
    target: TargetSpec
    eta: float
    alpha: float = 1.0
    budget: int = DEFAULT_BUDGET
    c_low: Optional[float] = None

    def __call__(self, y, rng):
        if self.c_low is None:
            return raso_sample(self.target, y, self.eta, self.alpha, rng, self.budget)
        return raso_sample_lower_bounded(
            self.target, self.c_low, y, self.eta, self.alpha, rng, self.budget
        )

    def propose(self, y, gen):
        return stable_proposal(self.eta, self.alpha)(np.atleast_2d(y), gen)


@dataclass(frozen=True)
class InexactOracle:
    inner: Oracle
    eps_tv: float
    corruptor: Optional[Proposal] = None

    def __call__(self, y, rng):
        return inexact_oracle_wrapper(self.inner, y, self.eps_tv, rng, self.corruptor)

    def propose(self, y, gen):
        return self.inner.propose(y, gen)


def make_oracle(
    kind: str,
    target: TargetSpec,
    eta: float,
    alpha: float = 1.0,
    budget: int = DEFAULT_BUDGET,
    c_low: Optional[float] = None,
    eps_tv: float = 0.0,
) -> Oracle:
    """Build an oracle from its config name (rgo, raso, raso_lower_bounded)."""
    if kind == "rgo":
        oracle = RestrictedGaussianOracle(target, eta, budget)
    elif kind == "raso":
        oracle = RestrictedStableOracle(target, eta, alpha, budget)
    elif kind == "raso_lower_bounded":
        if c_low is None:
            raise ParameterRangeError("raso_lower_bounded needs oracle.c_low")
        oracle = RestrictedStableOracle(target, eta, alpha, budget, c_low=c_low)
    else:
        raise ParameterRangeError(f"unknown oracle kind '{kind}'")
    if eps_tv > 0.0:
        return InexactOracle(oracle, eps_tv)
    return oracle


def raso_rejection_log_bound(target: TargetSpec, y, eta: float, c_low: Optional[float] = None):
    """Upper bound on log E[proposals] for the α = 1 RαSO at centre y.

    L|y - x*|^β + Γ((d+1)/2)Γ((1-β)/2)L / (Γ((d+1-β)/2)√π) · η^β, shifted by
    V(x*) - C_low when a lower bound replaces the minimum.
    """
    holder = target.holder
    if holder is None:
        raise ParameterRangeError("rejection bound needs Hölder data on the target")
    d, L, beta = target.dim, holder.L, holder.beta
    dist = np.linalg.norm(np.atleast_2d(y) - target.minimizer, axis=-1)
    log_coef = gammaln((d + 1) / 2) + gammaln((1 - beta) / 2) - gammaln((d + 1 - beta) / 2)
    bound = L * dist**beta + math.exp(log_coef) / math.sqrt(math.pi) * L * eta**beta
    if c_low is not None:
        bound = bound + (target.min_value - c_low)
    return float(bound[0]) if np.ndim(y) == 1 else bound
