import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import stats

from htprox.diagnostics import radial_ks_estimate, surrogate_moment
from htprox.errors import MissingRegularityError, OracleBudgetExceeded, ParameterRangeError
from htprox.rng import RngStream
from htprox.samplers import (
    SamplerConfig,
    run_chains,
    step_gaussian_proximal,
    step_size_policy,
    step_stable_proximal,
    step_ula,
)
from htprox.targets import FlatPotential, GeneralizedCauchy, Holder, QuadraticPotential


def test_alpha_required_only_for_stable():
    SamplerConfig(kind="stable_proximal", alpha=1.0)
    with pytest.raises(ValidationError):
        SamplerConfig(kind="stable_proximal")
    with pytest.raises(ValidationError):
        SamplerConfig(kind="gaussian_proximal", alpha=1.0)
    with pytest.raises(ValidationError):
        SamplerConfig(kind="ula", step=0.1)


def test_step_size_policy(cauchy_1d):
    assert step_size_policy(cauchy_1d, "stable_proximal", 1.0) == pytest.approx(3.0**-4)
    assert step_size_policy(GeneralizedCauchy(4, 2.0), "gaussian_proximal") == pytest.approx(
        1.0 / 12.0
    )
    assert step_size_policy(cauchy_1d, "gaussian_proximal", c0=2.0) == pytest.approx(2.0 / 3.0)
    # ν < 1: d^(-1/2) (d+ν)^(-4/ν)
    assert step_size_policy(GeneralizedCauchy(1, 0.5), "stable_proximal") == pytest.approx(
        1.5**-8
    )


def test_step_size_policy_uses_holder_override():
    target = GeneralizedCauchy(4, 1.0, holder_override=Holder(L=2.0, beta=0.5))
    assert step_size_policy(target, "stable_proximal") == pytest.approx(0.5 * 2.0**-2)


def test_step_size_policy_needs_regularity():
    with pytest.raises(MissingRegularityError):
        step_size_policy(QuadraticPotential(2), "stable_proximal", 1.0)
    with pytest.raises(ParameterRangeError):
        step_size_policy(QuadraticPotential(2), "hmc")


def test_single_steps_shapes(cauchy_3d, gen):
    x = np.zeros((5, 3))
    y, x1, rej = step_gaussian_proximal(cauchy_3d, x, 0.1, gen)
    assert y.shape == x1.shape == (5, 3)
    assert rej.shape == (5,)
    y, x1, rej = step_stable_proximal(cauchy_3d, np.zeros(3), 0.1, 1.0, gen)
    assert y.shape == x1.shape == (3,)
    assert step_ula(cauchy_3d, x, 0.1, gen).shape == (5, 3)
    with pytest.raises(ParameterRangeError):
        step_stable_proximal(cauchy_3d, x, 0.1, 2.0, gen)


def test_flat_gaussian_step_adds_two_heat_increments(gen):
    eta = 0.3
    _, x1, rej = step_gaussian_proximal(FlatPotential(1), np.zeros((100_000, 1)), eta, gen)
    assert x1.var() == pytest.approx(2.0 * eta, rel=0.03)
    assert rej.sum() == 0


def test_flat_stable_step_is_cauchy_at_twice_the_scale(gen):
    # Cauchy(η) + Cauchy(η) = Cauchy(2η)
    eta = 0.3
    _, x1, rej = step_stable_proximal(FlatPotential(1), np.zeros((100_000, 1)), eta, 1.0, gen)
    assert stats.kstest(x1[:, 0], stats.cauchy(scale=2.0 * eta).cdf).statistic <= 0.01
    assert rej.sum() == 0


def test_ula_on_gaussian_target_has_the_ar1_variance():
    # x' = (1-η)x + √(2η)Z has stationary variance 2/(2-η)
    cfg = SamplerConfig(kind="ula", eta=0.1, iterations=200, chains=20_000, init="point_mass")
    run = run_chains(cfg, QuadraticPotential(1), [200])
    assert run.at(200).var() == pytest.approx(2.0 / 1.9, rel=0.05)
    assert run.rejections.sum() == 0


def test_run_chains_layout(cauchy_1d):
    cfg = SamplerConfig(kind="gaussian_proximal", iterations=5, chains=300, block_size=128)
    run = run_chains(cfg, cauchy_1d, [5, 0, 2, 2])
    assert run.iterations == [0, 2, 5]
    assert run.samples.shape == (300, 3, 1)
    assert run.rejections.shape == (5,)
    assert run.wall_ms.shape == (5,)
    assert run.eta == pytest.approx(1.0 / 3.0)
    assert run.rejections_mean(0) == 0.0
    assert run.rejections_mean(5) >= 0.0


def test_record_at_out_of_range(cauchy_1d):
    cfg = SamplerConfig(kind="gaussian_proximal", iterations=5, chains=10)
    with pytest.raises(ParameterRangeError):
        run_chains(cfg, cauchy_1d, [6])
    with pytest.raises(ParameterRangeError):
        run_chains(cfg, cauchy_1d, [])


def test_point_mass_init_is_recorded(cauchy_3d):
    cfg = SamplerConfig(
        kind="stable_proximal", alpha=1.0, iterations=1, chains=4, init="point_mass", x0=[1, 2, 3]
    )
    run = run_chains(cfg, cauchy_3d, [0, 1])
    np.testing.assert_array_equal(run.at(0), np.tile([1.0, 2.0, 3.0], (4, 1)))


def test_block_streams_are_independent_of_threads(cauchy_1d):
    cfg = SamplerConfig(kind="stable_proximal", alpha=1.0, iterations=3, chains=600, seed=9)
    one = run_chains(cfg, cauchy_1d, [3], threads=1)
    two = run_chains(cfg, cauchy_1d, [3], threads=2)
    np.testing.assert_array_equal(one.samples, two.samples)
    np.testing.assert_array_equal(one.rejections, two.rejections)


def test_block_of_one_chain_uses_its_own_stream(cauchy_1d):
    cfg = SamplerConfig(kind="gaussian_proximal", iterations=1, chains=3, block_size=1, seed=4)
    run = run_chains(cfg, cauchy_1d, [0])
    expected = RngStream(seed=4, stream_id=2).generator().standard_normal((1, 1))
    np.testing.assert_array_equal(run.at(0)[2], expected[0])


def test_record_y(cauchy_1d):
    cfg = SamplerConfig(kind="gaussian_proximal", iterations=2, chains=10, record_y=True)
    run = run_chains(cfg, cauchy_1d, [0, 2])
    assert run.y_samples.shape == (10, 2, 1)
    assert np.all(np.isnan(run.y_samples[:, 0]))
    assert np.all(np.isfinite(run.y_samples[:, 1]))


def test_budget_error_names_chain_and_iteration(cauchy_1d):
    cfg = SamplerConfig(
        kind="stable_proximal",
        alpha=1.0,
        iterations=3,
        chains=20,
        block_size=8,
        oracle={"kind": "raso_lower_bounded", "c_low": -60.0, "budget": 100},
    )
    with pytest.raises(OracleBudgetExceeded) as info:
        run_chains(cfg, cauchy_1d, [3])
    assert info.value.iteration == 1
    assert 0 <= info.value.chain < 8
    assert "chain" in str(info.value)


@pytest.mark.parametrize(
    "target,cfg",
    [
        (GeneralizedCauchy(1, 2.0), SamplerConfig(kind="gaussian_proximal")),
        (GeneralizedCauchy(1, 2.0), SamplerConfig(kind="stable_proximal", alpha=1.0)),
        (GeneralizedCauchy(1, 0.8), SamplerConfig(kind="stable_proximal", alpha=1.0)),
        (GeneralizedCauchy(2, 1.0), SamplerConfig(kind="stable_proximal", alpha=1.5)),
    ],
)
def test_exact_target_is_stationary(target, cfg):
    cfg = cfg.model_copy(update={"iterations": 50, "chains": 5000, "init": "exact_target"})
    run = run_chains(cfg, target, [1, 10, 50])
    for k in run.iterations:
        est = radial_ks_estimate(run.at(k), target)
        assert est.value <= 1.95 / math.sqrt(est.n)


def test_stable_sampler_keeps_isotropy():
    target = GeneralizedCauchy(2, 1.0)
    cfg = SamplerConfig(kind="stable_proximal", alpha=1.0, iterations=10, chains=4000)
    x = run_chains(cfg, target, [10]).at(10)
    angle = np.arctan2(x[:, 1], x[:, 0])
    stat = stats.kstest(angle, stats.uniform(loc=-math.pi, scale=2 * math.pi).cdf).statistic
    assert stat <= 1.95 / math.sqrt(x.shape[0])


@pytest.mark.slow
def test_surrogate_moment_growth_along_gaussian_chain(cauchy_1d):
    kappa = 2.0
    m = kappa * (cauchy_1d.dim + cauchy_1d.nu)
    cfg = SamplerConfig(kind="gaussian_proximal", iterations=1000, chains=10_000, init="point_mass")
    run = run_chains(cfg, cauchy_1d, [1, 10, 100, 1000])
    for k in run.iterations:
        mean, se = surrogate_moment(run.at(k), kappa, cauchy_1d.nu)
        # delta method for E[G]^(2/m)
        lhs = mean ** (2.0 / m)
        se_lhs = (2.0 / m) * mean ** (2.0 / m - 1.0) * se
        assert lhs <= 1.0 + 4.0 * m * run.eta * k + 3.0 * se_lhs
