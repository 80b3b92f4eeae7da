"""ULA, the Gaussian proximal sampler and the stable proximal sampler.

Chains are grouped in fixed-size blocks. Each block owns one RngStream
(seed, block index) and advances its chains together, so results do not
depend on the number of worker processes.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from multiprocessing import Pool
from typing import List, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from tqdm import tqdm

from htprox.errors import MissingRegularityError, OracleBudgetExceeded, ParameterRangeError
from htprox.oracles import DEFAULT_BUDGET, Oracle, make_oracle, stable_proposal
from htprox.rng import RngLike, RngStream, as_generator
from htprox.targets import GeneralizedCauchy, QuadraticPotential, TargetSpec, sample_exact

logger = logging.getLogger(__name__)

SamplerKind = Literal["ula", "gaussian_proximal", "stable_proximal"]


class OracleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Optional[Literal["rgo", "raso", "raso_lower_bounded"]] = None
    budget: int = Field(default=DEFAULT_BUDGET, ge=1)
    eps_tv: float = Field(default=0.0, ge=0.0, le=1.0)
    c_low: Optional[float] = None


class SamplerConfig(BaseModel):
    """One sampler run: kind, step size, chain count and initialization."""

    model_config = ConfigDict(extra="forbid")

    kind: SamplerKind
    eta: Optional[float] = Field(default=None, gt=0.0)
    alpha: Optional[float] = Field(default=None, gt=0.0, lt=2.0)
    iterations: int = Field(default=100, ge=0)
    chains: int = Field(default=1000, ge=1)
    init: Literal["point_mass", "standard_gaussian", "exact_target"] = "standard_gaussian"
    x0: Union[float, List[float]] = 0.0
    seed: int = Field(default=0, ge=0)
    c0: float = Field(default=1.0, gt=0.0)
    block_size: int = Field(default=256, ge=1)
    record_y: bool = False
    progress: bool = False
    oracle: OracleConfig = Field(default_factory=OracleConfig)

    @model_validator(mode="after")
    def _alpha_iff_stable(self):
        if self.kind == "stable_proximal" and self.alpha is None:
            raise ValueError("alpha is required for stable_proximal")
        if self.kind != "stable_proximal" and self.alpha is not None:
            raise ValueError(f"alpha is only meaningful for stable_proximal, not {self.kind}")
        return self


@dataclass(frozen=True)
class ChainRun:
    """Recorded sample batches, shape (chains, len(iterations), dim)."""

    samples: np.ndarray
    iterations: List[int]
    rejections: np.ndarray
    wall_ms: np.ndarray
    eta: float
    config: SamplerConfig
    y_samples: Optional[np.ndarray] = None

    @property
    def chains(self) -> int:
        return self.samples.shape[0]

    def at(self, k: int) -> np.ndarray:
        return self.samples[:, self.iterations.index(k), :]

    def rejections_mean(self, k: int) -> float:
        """Mean rejections per chain over iterations 1..k."""
        if k == 0:
            return 0.0
        return float(self.rejections[:k].sum() / (k * self.chains))

    def wall_ms_mean(self, k: int) -> float:
        if k == 0:
            return 0.0
        return float(self.wall_ms[:k].mean())


def step_gaussian_proximal(target: TargetSpec, x, eta: float, rng: RngLike, oracle: Oracle = None):
    """y = x + √η Z, then x' from the restricted Gaussian oracle at y."""
    gen = as_generator(rng)
    oracle = oracle or make_oracle("rgo", target, eta)
    y = x + math.sqrt(eta) * gen.standard_normal(np.shape(x))
    outcome = oracle(y, gen)
    return y, outcome.sample, outcome.rejections


def step_stable_proximal(
    target: TargetSpec, x, eta: float, alpha: float, rng: RngLike, oracle: Oracle = None
):
    """y = x + (α-stable draw at time η), then x' from the RαSO at y."""
    if not 0.0 < alpha < 2.0:
        raise ParameterRangeError(f"alpha must lie in (0, 2), got {alpha}")
    gen = as_generator(rng)
    oracle = oracle or make_oracle("raso", target, eta, alpha=alpha)
    x2 = np.atleast_2d(x)
    y = stable_proposal(eta, alpha)(x2, gen)
    if np.ndim(x) == 1:
        y = y[0]
    outcome = oracle(y, gen)
    return y, outcome.sample, outcome.rejections


def step_ula(target: TargetSpec, x, eta: float, rng: RngLike):
    gen = as_generator(rng)
    return x - eta * target.grad(x) + math.sqrt(2.0 * eta) * gen.standard_normal(np.shape(x))


def step_size_policy(
    target: TargetSpec, kind: str, alpha: Optional[float] = None, c0: float = 1.0
) -> float:
    """Default step size for a sampler kind.

    stable_proximal: c0 · d^(-1/2) · L^(-1/β). For generalized Cauchy targets
    the Θ-form drops the constant factors of the Hölder presets, so L is
    d + ν (η = d^(-1/2)(d+ν)^(-4) for ν ≥ 1, d^(-1/2)(d+ν)^(-4/ν) below).

    gaussian_proximal and ula: c0 / (L · d^(1/2)) with L the gradient
    Lipschitz constant (d + ν for generalized Cauchy).
    """
    d = target.dim
    if kind == "stable_proximal":
        holder = target.holder
        if holder is None:
            raise MissingRegularityError("supply (L, β) or eta explicitly")
        if isinstance(target, GeneralizedCauchy) and target.holder_override is None:
            L = d + target.nu
        else:
            L = holder.L
        return c0 * d**-0.5 * L ** (-1.0 / holder.beta)
    if kind in ("gaussian_proximal", "ula"):
        L = target.grad_lipschitz
        if L is None:
            raise MissingRegularityError("supply a gradient Lipschitz constant or eta explicitly")
        return c0 / (L * math.sqrt(d))
    raise ParameterRangeError(f"unknown sampler kind '{kind}'")


def resolve_eta(config: SamplerConfig, target: TargetSpec) -> float:
    if config.eta is not None:
        return config.eta
    return step_size_policy(target, config.kind, config.alpha, config.c0)


def initial_batch(config: SamplerConfig, target: TargetSpec, n: int, gen) -> np.ndarray:
    d = target.dim
    if config.init == "point_mass":
        x0 = np.broadcast_to(np.asarray(config.x0, dtype=float), (d,))
        return np.tile(x0, (n, 1))
    if config.init == "standard_gaussian":
        return gen.standard_normal((n, d))
    if isinstance(target, GeneralizedCauchy):
        return sample_exact(target, n, gen)
    if isinstance(target, QuadraticPotential):
        return gen.standard_normal((n, d))
    raise ParameterRangeError(f"exact_target init is not available for {target.kind}")


@dataclass
class _Block:
    index: int
    start: int
    size: int
    config: SamplerConfig
    target: TargetSpec
    eta: float
    record_at: Sequence[int] = field(default_factory=list)
    show_progress: bool = False


def _run_block(block: _Block):
    cfg, target, eta = block.config, block.target, block.eta
    gen = RngStream(seed=cfg.seed, stream_id=block.index).generator()
    n_iter = cfg.iterations
    record_pos = {k: i for i, k in enumerate(block.record_at)}

    samples = np.empty((block.size, len(block.record_at), target.dim))
    ys = np.empty_like(samples) if cfg.record_y else None
    rejections = np.zeros(n_iter, dtype=np.int64)
    wall_ms = np.zeros(n_iter)

    oracle = None
    if cfg.kind != "ula":
        default_kind = "rgo" if cfg.kind == "gaussian_proximal" else "raso"
        oracle = make_oracle(
            cfg.oracle.kind or default_kind,
            target,
            eta,
            alpha=cfg.alpha or 1.0,
            budget=cfg.oracle.budget,
            c_low=cfg.oracle.c_low,
            eps_tv=cfg.oracle.eps_tv,
        )

    x = initial_batch(cfg, target, block.size, gen)
    y = np.full_like(x, np.nan)
    if 0 in record_pos:
        samples[:, record_pos[0]] = x
        if ys is not None:
            ys[:, record_pos[0]] = y

    steps = range(n_iter)
    if block.show_progress:
        steps = tqdm(steps, desc=f"{cfg.kind}", leave=False)
    for k in steps:
        tic = time.perf_counter()
        try:
            if cfg.kind == "ula":
                x = step_ula(target, x, eta, gen)
                rej = 0
            elif cfg.kind == "gaussian_proximal":
                y, x, rej = step_gaussian_proximal(target, x, eta, gen, oracle)
            else:
                y, x, rej = step_stable_proximal(target, x, eta, cfg.alpha, gen, oracle)
        except OracleBudgetExceeded as exc:
            raise OracleBudgetExceeded(
                exc.budget, chain=block.start + (exc.chain or 0), iteration=k + 1
            ) from exc
        wall_ms[k] = 1e3 * (time.perf_counter() - tic)
        rejections[k] = int(np.sum(rej))
        if k + 1 in record_pos:
            samples[:, record_pos[k + 1]] = x
            if ys is not None:
                ys[:, record_pos[k + 1]] = y
    return samples, rejections, wall_ms, ys


def run_chains(
    config: SamplerConfig,
    target: TargetSpec,
    record_at: Sequence[int],
    threads: int = 1,
) -> ChainRun:
    """Run `config.chains` independent chains and record the requested iterations."""
    record_at = sorted(set(int(k) for k in record_at))
    if not record_at or record_at[0] < 0 or record_at[-1] > config.iterations:
        raise ParameterRangeError(
            f"record_at must lie in [0, {config.iterations}], got {record_at}"
        )
    eta = resolve_eta(config, target)
    n_blocks = math.ceil(config.chains / config.block_size)
    blocks = []
    for b in range(n_blocks):
        start = b * config.block_size
        size = min(config.block_size, config.chains - start)
        show = config.progress and threads == 1 and b == 0
        blocks.append(_Block(b, start, size, config, target, eta, record_at, show))

    logger.info(
        "running %d %s chains for %d iterations (eta=%.6g, %d blocks, threads=%d)",
        config.chains, config.kind, config.iterations, eta, n_blocks, threads,
    )
    if threads > 1 and n_blocks > 1:
        with Pool(processes=min(threads, n_blocks)) as pool:
            results = pool.map(_run_block, blocks)
    else:
        results = [_run_block(b) for b in blocks]

    samples = np.concatenate([r[0] for r in results], axis=0)
    rejections = np.sum([r[1] for r in results], axis=0)
    wall_ms = np.sum([r[2] for r in results], axis=0)
    y_samples = None
    if config.record_y:
        y_samples = np.concatenate([r[3] for r in results], axis=0)
    return ChainRun(
        samples=samples,
        iterations=record_at,
        rejections=np.asarray(rejections, dtype=np.int64).reshape(config.iterations),
        wall_ms=np.asarray(wall_ms, dtype=float).reshape(config.iterations),
        eta=eta,
        config=config,
        y_samples=y_samples,
    )
