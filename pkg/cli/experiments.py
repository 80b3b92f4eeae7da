"""Experiment orchestration: separation, bounds overlay, single runs, summaries"""
import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from cli.config import ExperimentConfig
from htprox import theory
from htprox.diagnostics import (
    hist_chi2_estimate,
    radial_ks_estimate,
    radial_tv_estimate,
    surrogate_moment,
)
from htprox.errors import ConfigError, HtproxError
from htprox.results import ResultRow, plot_tv_curves, read_rows, write_rows, write_summary
from htprox.rng import RngStream
from htprox.samplers import ChainRun, SamplerConfig, initial_batch, run_chains, step_size_policy
from htprox.targets import GeneralizedCauchy, TargetSpec

logger = logging.getLogger(__name__)

STABLE = "stable_proximal"
GAUSSIAN = "gaussian_proximal"
R2_MIN = 0.9
SLOPE_TOLERANCE = 0.75
SEPARATION_FACTOR = 2.0
GAUSSIAN_EPS_EXPONENT = 0.6
SOUNDNESS_SE = 3.0
MONOTONE_SE = 2.0
# stream ids above any block index
_E_G0_STREAM = 2**32
_BOOTSTRAP_STREAM = 2**33


@dataclass
class DecayFit:
    law: str
    slope: float
    intercept: float
    r2: float
    points: int


def fit_decay(x: Sequence[float], values: Sequence[float], law: str) -> Optional[DecayFit]:
    """Least-squares line through log(values) against x (log_linear) or log(x) (log_log)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = (v > 0) & (x > 0 if law == "log_log" else np.isfinite(x))
    if keep.sum() < 2:
        return None
    xs = np.log(x[keep]) if law == "log_log" else x[keep]
    ys = np.log(v[keep])
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(law, float(slope), float(intercept), r2, int(keep.sum()))


def iterations_to_eps(ks: Sequence[float], values: Sequence[float], eps: float) -> Optional[int]:
    """First recorded k whose divergence is at or below eps."""
    for k, v in sorted(zip(ks, values)):
        if v is not None and v <= eps:
            return int(k)
    return None


def crossing_iteration(ks: Sequence[float], values: Sequence[float], eps: float) -> Optional[float]:
    """k at which the divergence first reaches eps, log-interpolated between records."""
    points = sorted((k, v) for k, v in zip(ks, values) if v is not None)
    for i, (k, v) in enumerate(points):
        if v > eps:
            continue
        if i == 0:
            return float(k)
        k_prev, v_prev = points[i - 1]
        if v <= 0:
            return float(k)
        return k_prev + (k - k_prev) * math.log(v_prev / eps) / math.log(v_prev / v)
    return None


def gaussian_eps_scaling(ks, values, epsilons: Sequence[float]) -> Optional[dict]:
    """Growth of iterations-to-ε from the largest to the smallest ε.

    Passes when the ratio is at least (ε_max/ε_min)^0.6. A run that never
    reaches ε_min is censored at its last recorded k, which understates
    the ratio.
    """
    if len(set(epsilons)) < 2:
        return None
    eps_hi, eps_lo = max(epsilons), min(epsilons)
    threshold = (eps_hi / eps_lo) ** GAUSSIAN_EPS_EXPONENT
    n_hi = crossing_iteration(ks, values, eps_hi)
    n_lo = crossing_iteration(ks, values, eps_lo)
    censored = n_lo is None
    if censored:
        n_lo = float(max(ks))
    ratio = None if n_hi is None else n_lo / max(n_hi, 1.0)
    return {
        "ratio": ratio,
        "threshold": threshold,
        "censored": censored,
        "passed": ratio is not None and ratio >= threshold,
    }


def stable_eps_affine(ks, values, epsilons: Sequence[float]) -> Optional[dict]:
    """Fit of iterations-to-ε against log(1/ε); needs every ε reached."""
    if len(set(epsilons)) < 2:
        return None
    eps = sorted(set(epsilons), reverse=True)
    n = [crossing_iteration(ks, values, e) for e in eps]
    if any(v is None for v in n):
        return {"slope": None, "r2": None, "passed": False}
    x = np.log(1.0 / np.asarray(eps))
    y = np.asarray(n)
    slope, intercept = np.polyfit(x, y, 1)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "r2": r2, "passed": r2 >= R2_MIN}


def _value_at(ks, values, k):
    for kk, v in zip(ks, values):
        if kk == k:
            return v
    return None


def lower_bound_violations(rows: Iterable[ResultRow]) -> List[int]:
    """Recorded k where the measured TV plus 3 SE falls below the lower bound."""
    return [
        r.k
        for r in rows
        if r.bound_value is not None
        and r.div_value + SOUNDNESS_SE * (r.div_se or 0.0) < r.bound_value
    ]


def is_monotone(rows: Sequence[ResultRow]) -> bool:
    """Consecutive estimates never rise by more than 2 combined SE."""
    for prev, cur in zip(rows, rows[1:]):
        slack = MONOTONE_SE * math.hypot(prev.div_se or 0.0, cur.div_se or 0.0)
        if cur.div_value > prev.div_value + slack:
            return False
    return True


def _sampler_summary(rows: List[ResultRow], floor: float, epsilons: Sequence[float]) -> dict:
    rows = sorted(rows, key=lambda r: r.k)
    ks = [r.k for r in rows]
    values = [r.div_value for r in rows]
    sampler, eta = rows[0].sampler, rows[0].eta
    above = [(k, v) for k, v in zip(ks, values) if k > 0 and v is not None and v > 2.0 * floor]
    if sampler == STABLE:
        fit = fit_decay([k for k, _ in above], [v for _, v in above], "log_linear")
    else:
        fit = fit_decay([k * eta for k, _ in above], [v for _, v in above], "log_log")
    return {
        "eta": eta,
        "fit": asdict(fit) if fit else None,
        "iterations_to_eps": {str(e): iterations_to_eps(ks, values, e) for e in epsilons},
        "monotone": is_monotone(rows),
        "lower_bound_violations": lower_bound_violations(rows),
        "k": ks,
        "tv": values,
    }


def summarize(rows: Iterable[ResultRow], epsilons: Sequence[float]) -> dict:
    """Verdict from separation rows alone; identical on a re-read CSV.

    The noise floor of each experiment group is its smallest measured
    radial TV; decay fits only use points above twice that floor.
    """
    groups: Dict[str, Dict[str, List[ResultRow]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        if row.div_kind == "radial_tv" and row.div_value is not None:
            groups[row.experiment][row.sampler].append(row)

    summary = {"experiments": {}, "stable_under_multipliers": None, "lower_bounds_sound": True}
    verdicts = []
    for experiment, by_sampler in sorted(groups.items()):
        floor = min(r.div_value for rs in by_sampler.values() for r in rs)
        samplers = {
            name: _sampler_summary(rs, floor, epsilons) for name, rs in sorted(by_sampler.items())
        }
        entry = {"noise_floor": floor, "samplers": samplers, "verdict": None}
        if any(s["lower_bound_violations"] for s in samplers.values()):
            summary["lower_bounds_sound"] = False
        if epsilons and STABLE in samplers and GAUSSIAN in samplers:
            nu = by_sampler[GAUSSIAN][0].nu
            entry["verdict"] = _verdict(samplers[STABLE], samplers[GAUSSIAN], nu, epsilons)
            verdicts.append(entry["verdict"]["separated"])
        summary["experiments"][experiment] = entry
    if verdicts:
        summary["stable_under_multipliers"] = all(verdicts)
    return summary


def _verdict(stable: dict, gaussian: dict, nu: float, epsilons: Sequence[float]) -> dict:
    """Separation verdict for one experiment group.

    K* is the first recorded k at which the stable sampler reaches the
    smallest ε of the grid. `separated` needs every applicable check in
    `checks` to hold; the ε-scaling checks need at least two ε values.
    """
    eps_star = min(epsilons)
    k_star = stable["iterations_to_eps"][str(eps_star)]
    ratio = None
    if k_star is not None:
        tv_s = _value_at(stable["k"], stable["tv"], k_star)
        tv_g = _value_at(gaussian["k"], gaussian["tv"], k_star)
        if tv_s and tv_g is not None:
            ratio = tv_g / tv_s
    s_fit, g_fit = stable["fit"], gaussian["fit"]
    scaling = gaussian_eps_scaling(gaussian["k"], gaussian["tv"], epsilons)
    affine = stable_eps_affine(stable["k"], stable["tv"], epsilons)
    checks = {
        "stable_reaches_eps": k_star is not None,
        "tv_ratio": ratio is not None and ratio >= SEPARATION_FACTOR,
        "stable_log_linear": s_fit is not None and s_fit["r2"] >= R2_MIN,
        "gaussian_power_law": (
            g_fit is not None and abs(g_fit["slope"] + nu / 2.0) <= SLOPE_TOLERANCE
        ),
        "gaussian_eps_scaling": scaling["passed"] if scaling else None,
        "stable_eps_affine": affine["passed"] if affine else None,
    }
    table = {
        str(e): {
            STABLE: stable["iterations_to_eps"][str(e)],
            GAUSSIAN: gaussian["iterations_to_eps"][str(e)],
        }
        for e in epsilons
    }
    return {
        "iterations_to_eps": table,
        "eps_star": eps_star,
        "k_star": k_star,
        "tv_ratio_at_k_star": ratio,
        "stable_log_linear": checks["stable_log_linear"],
        "gaussian_power_law": checks["gaussian_power_law"],
        "gaussian_eps_ratio": scaling,
        "stable_eps_fit": affine,
        "checks": checks,
        "separated": all(v is not False for v in checks.values()),
    }


def _gaussian_kappa(d: int, nu: float) -> float:
    return max(1.0, 2.0 / (d + nu))


def _estimate_e_g0(cfg: SamplerConfig, target: TargetSpec, run: ChainRun, kappa: float) -> float:
    """E[G(x_0)] by Monte Carlo over the initial law."""
    if 0 in run.iterations:
        x0 = run.at(0)
    else:
        gen = RngStream(seed=cfg.seed, stream_id=_E_G0_STREAM).generator()
        x0 = initial_batch(cfg, target, cfg.chains, gen)
    mean, _ = surrogate_moment(x0, kappa, target.nu2)
    return max(mean, 1.0)


def _bound_curve(cfg: SamplerConfig, target: TargetSpec, run: ChainRun, chi2_0: Optional[float]):
    """k -> theory overlay for this sampler, or None when no bound applies."""
    if not isinstance(target, GeneralizedCauchy):
        return lambda k: None
    if cfg.kind == GAUSSIAN:
        kappa = _gaussian_kappa(target.dim, target.nu)
        q = theory.BoundQuery(
            nu1=target.nu1,
            nu2=target.nu2,
            d=target.dim,
            kappa=kappa,
            E_G0=_estimate_e_g0(cfg, target, run, kappa),
        )
        return lambda k: theory.gaussian_prox_tv_lower_bound(q, k, run.eta)
    if cfg.kind == STABLE and target.fpi is not None and chi2_0 is not None:
        return lambda k: theory.tv_from_chi2(
            theory.chi2_upper_bound(target.fpi.C_fpi, run.eta, k, chi2_0)
        )
    return lambda k: None


def _run_sampler(cfg: SamplerConfig, target: TargetSpec, record_at, threads) -> ChainRun:
    try:
        return run_chains(cfg, target, record_at, threads=threads)
    except HtproxError as e:
        logger.error("%s sampler failed (d=%d, seed=%d): %s", cfg.kind, target.dim, cfg.seed, e)
        raise


def _prepare(sampler: SamplerConfig, config: ExperimentConfig, c0: float = 1.0) -> SamplerConfig:
    return sampler.model_copy(
        update={
            "c0": sampler.c0 * c0,
            "seed": config.seed,
            "iterations": max(config.record_at),
        }
    )


def sampler_rows(
    experiment: str,
    cfg: SamplerConfig,
    config: ExperimentConfig,
    target: TargetSpec,
    threads: int = 1,
    kinds: Sequence[str] = ("radial_tv",),
) -> List[ResultRow]:
    """Run one sampler and turn every recorded iteration into result rows."""
    run = _run_sampler(cfg, target, config.record_at, threads)
    bound = _bound_curve(cfg, target, run, config.target.chi2_0)
    rows = []
    for k in run.iterations:
        batch = run.at(k)
        boot = RngStream(seed=config.seed, stream_id=_BOOTSTRAP_STREAM + k)
        bound_value = bound(k)
        for kind in kinds:
            if kind == "radial_tv":
                est = radial_tv_estimate(batch, target, bins=config.bins, rng=boot)
            elif kind == "ks":
                est = radial_ks_estimate(batch, target)
            else:
                est = hist_chi2_estimate(batch, target, rng=boot)
            rows.append(
                ResultRow(
                    experiment=experiment,
                    sampler=cfg.kind,
                    d=target.dim,
                    nu=target.nu,
                    alpha=cfg.alpha,
                    eta=run.eta,
                    k=k,
                    wall_ms=run.wall_ms_mean(k),
                    rejections_mean=run.rejections_mean(k),
                    div_kind=est.kind,
                    div_value=est.value,
                    div_se=est.se_proxy,
                    bound_value=bound_value if kind == "radial_tv" else None,
                    seed=config.seed,
                )
            )
    return rows


def _require_cauchy(config: ExperimentConfig) -> GeneralizedCauchy:
    if config.target.kind != "generalized_cauchy":
        raise ConfigError(f"{config.experiment} needs a generalized_cauchy target")
    return config.target.build()


def run_separation(config: ExperimentConfig, out_dir: Path, threads: int = 1) -> dict:
    """Gaussian vs. stable proximal sampler on one target, for every c0 multiplier."""
    kinds = {s.kind for s in config.samplers}
    if not {GAUSSIAN, STABLE} <= kinds:
        raise ConfigError("separation needs both gaussian_proximal and stable_proximal samplers")
    target = _require_cauchy(config)
    rows: List[ResultRow] = []
    for c0 in config.sampler_multipliers:
        experiment = f"separation/c0={c0:g}"
        for sampler in config.samplers:
            rows += sampler_rows(experiment, _prepare(sampler, config, c0), config, target, threads)

    out_dir = Path(out_dir)
    write_rows(rows, out_dir / "separation.csv")
    summary = summarize(rows, config.epsilons)
    write_summary(summary, out_dir / "separation_summary.json")
    plot_tv_curves(rows, out_dir / "separation.svg", title="radial TV vs. k")
    return summary


def run_single(config: ExperimentConfig, out_dir: Path, threads: int = 1) -> dict:
    """One sampler configuration with radial TV, KS and (d = 1) χ² rows."""
    if not config.samplers:
        raise ConfigError("single_run needs one sampler")
    target = _require_cauchy(config)
    cfg = _prepare(config.samplers[0], config)
    kinds = ["radial_tv", "ks"] + (["hist_chi2"] if target.dim == 1 else [])
    rows = sampler_rows("single_run", cfg, config, target, threads, kinds)

    out_dir = Path(out_dir)
    write_rows(rows, out_dir / "single_run.csv")
    plot_tv_curves(rows, out_dir / "single_run.svg", title=cfg.kind)
    last = max(r.k for r in rows)
    summary = {
        "sampler": cfg.kind,
        "eta": rows[0].eta,
        "final": {r.div_kind: r.div_value for r in rows if r.k == last},
        "rows": len(rows),
    }
    write_summary(summary, out_dir / "single_run_summary.json")
    return summary


def _curve_kappa(bounds, d: int, nu: float, t_max: float) -> float:
    if bounds.kappa is not None:
        return bounds.kappa
    if bounds.delta is not None:
        return theory.kappa_delta(d, nu, bounds.delta)
    if t_max > math.e:
        return theory.kappa_delta(d, nu, theory.delta_schedule(t_max, d, nu, nu))
    return _gaussian_kappa(d, nu)


def _stable_tau(bounds, d: int, nu: float) -> float:
    if bounds.tau is not None:
        return bounds.tau
    lo = nu  # ν₁ = ν₂
    if lo >= bounds.alpha:
        raise ConfigError(f"stable_prox curve needs nu < alpha, got nu={nu}, alpha={bounds.alpha}")
    return 0.5 * (lo + bounds.alpha)


def bound_rows(config: ExperimentConfig) -> List[ResultRow]:
    target = _require_cauchy(config)
    b = config.bounds
    d, nu = target.dim, target.nu
    grid = b.k_grid
    rows = []

    def emit(curve, eta, values, alpha=None):
        for k, v in zip(grid, values):
            rows.append(
                ResultRow(
                    experiment="bounds", sampler=curve, d=d, nu=nu, alpha=alpha, eta=eta,
                    k=k, div_kind="bound", bound_value=v, seed=config.seed,
                )
            )

    for curve in b.curves:
        if curve == "gaussian_prox":
            eta = b.eta or step_size_policy(target, GAUSSIAN)
            q = theory.BoundQuery(
                nu1=nu, nu2=nu, d=d, E_G0=b.E_G0,
                kappa=_curve_kappa(b, d, nu, eta * max(grid)),
            )
            emit(curve, eta, [theory.gaussian_prox_tv_lower_bound(q, int(k), eta) for k in grid])
        elif curve == "langevin":
            q = theory.BoundQuery(
                nu1=nu, nu2=nu, d=d, E_G0=b.E_G0, kappa=_curve_kappa(b, d, nu, max(grid))
            )
            emit(curve, 0.0, [theory.ld_tv_lower_bound(q, t) for t in grid])
        elif curve == "stable_prox":
            eta = b.eta or step_size_policy(target, STABLE, b.alpha)
            q = theory.BoundQuery(
                nu1=nu, nu2=nu, d=d, alpha=b.alpha, tau=_stable_tau(b, d, nu), E_G0=b.E_G0
            )
            values = [theory.stable_prox_tv_lower_bound(q, int(k), eta) for k in grid]
            emit(curve, eta, values, alpha=b.alpha)
        elif curve == "chi2_upper":
            if target.fpi is None or config.target.chi2_0 is None:
                raise ConfigError("chi2_upper curve needs target.C_fpi and target.chi2_0")
            eta = b.eta or step_size_policy(target, STABLE, b.alpha)
            values = [
                theory.tv_from_chi2(
                    theory.chi2_upper_bound(target.fpi.C_fpi, eta, int(k), config.target.chi2_0)
                )
                for k in grid
            ]
            emit(curve, eta, values, alpha=b.alpha)
        else:
            if target.wfpi_c is None or not nu < 1.0:
                raise ConfigError("wfpi curve needs target.wfpi_c and nu < 1")
            eta = b.eta or step_size_policy(target, STABLE, b.alpha)
            rinf = theory.renyi_inf_gaussian_init(d, nu)
            chi2_0 = config.target.chi2_0 or math.expm1(rinf)
            eps = min(config.epsilons) if config.epsilons else 0.05
            values = []
            for k in grid:
                r = theory.wfpi_optimal_r(target.wfpi_c, nu, eps, int(k), eta, rinf)
                chi2 = theory.wfpi_chi2_bound(target.wfpi_c, nu, eta, int(k), r, chi2_0, rinf)
                values.append(theory.tv_from_chi2(chi2))
            emit(curve, eta, values, alpha=b.alpha)
    return rows


def complexity_summary(config: ExperimentConfig) -> dict:
    """Scaling records for every scenario whose constants the config supplies."""
    t = config.target
    d, nu = t.dim, t.nu
    target = _require_cauchy(config)
    out = defaultdict(dict)
    for eps in config.epsilons:
        key = str(eps)
        records = [theory.complexity_tables("gaussian_lower", d, eps, nu=nu)]
        records.append(theory.complexity_tables("langevin_lower", d, eps, nu=nu))
        if t.C_fpi is not None:
            eta = config.bounds.eta or step_size_policy(target, STABLE, config.bounds.alpha)
            records.append(theory.complexity_tables("ideal", d, eps, C_fpi=t.C_fpi, eta=eta))
            if nu >= 1.0:
                records.append(
                    theory.complexity_tables("implementable_nu_ge_1", d, eps, nu=nu, C_fpi=t.C_fpi)
                )
        if t.wfpi_c is not None and nu < 1.0:
            records.append(
                theory.complexity_tables("implementable_nu_lt_1", d, eps, nu=nu, c=t.wfpi_c)
            )
        tau = config.bounds.tau
        if tau is not None and nu < tau < 1.0:
            records.append(theory.complexity_tables("stable_lower", d, eps, nu=nu, tau=tau))
        for rec in records:
            out[key][rec.scenario] = rec.model_dump()
    return dict(out)


def run_bounds_overlay(config: ExperimentConfig, out_dir: Path) -> dict:
    rows = bound_rows(config)
    out_dir = Path(out_dir)
    write_rows(rows, out_dir / "bounds.csv")
    plot_tv_curves(rows, out_dir / "bounds.svg", title="theory curves")
    summary = {"curves": list(config.bounds.curves), "complexity": complexity_summary(config)}
    write_summary(summary, out_dir / "bounds_summary.json")
    return summary


def summarize_csv(path: Path, epsilons: Sequence[float]) -> dict:
    return summarize(read_rows(path), epsilons)
