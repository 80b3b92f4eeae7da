import json
import math
from pathlib import Path

import numpy as np
import pytest

import htprox.oracles as oracles
from cli import __version__
from cli.config import (
    OUT_ENV_VAR,
    RESOLVED_NAME,
    ConfigManager,
    ExperimentConfig,
    ValidationConfig,
    apply_overrides,
    default_config,
)
from cli.experiments import (
    crossing_iteration,
    fit_decay,
    gaussian_eps_scaling,
    is_monotone,
    iterations_to_eps,
    lower_bound_violations,
    stable_eps_affine,
    summarize,
    summarize_csv,
)
from cli.main import EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, main, parse_overrides
from cli.validate import ValidationContext, registered_checks, run_validation
from htprox.errors import ConfigError
from htprox.results import CSV_HEADER, ResultRow, read_rows

REPO = Path(__file__).resolve().parent.parent


def write_config(path, data):
    path.write_text(json.dumps(data))
    return str(path)


SMALL_SEPARATION = {
    "experiment": "separation",
    "target": {"dim": 1, "nu": 2.0},
    "samplers": [
        {"kind": "stable_proximal", "alpha": 1.0, "chains": 400},
        {"kind": "gaussian_proximal", "chains": 400},
    ],
    "record_at": [0, 1, 2, 5, 10],
    "bins": 10,
    "seed": 3,
}


# ------------------------------------------------------------------ config


def test_parse_overrides_forms():
    extra = ["--sampler.eta=0.01", "--seed", "7", "--target.kind", "quadratic"]
    assert parse_overrides(extra) == {
        "sampler.eta": 0.01,
        "seed": 7,
        "target.kind": "quadratic",
    }
    with pytest.raises(ConfigError):
        parse_overrides(["--seed"])
    with pytest.raises(ConfigError):
        parse_overrides(["stray"])


def test_sampler_prefix_applies_to_every_sampler():
    data = default_config("separation").model_dump(mode="json")
    data = apply_overrides(data, {"sampler.chains": 50, "samplers.1.eta": 0.2})
    config = ExperimentConfig.model_validate(data)
    assert [s.chains for s in config.samplers] == [50, 50]
    assert config.samplers[0].eta is None
    assert config.samplers[1].eta == 0.2


def test_unknown_override_key():
    data = default_config("separation").model_dump(mode="json")
    with pytest.raises(ConfigError):
        apply_overrides(data, {"target.colour": 1})
    with pytest.raises(ConfigError):
        apply_overrides(data, {"samplers.5.eta": 0.1})


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        ConfigManager(str(tmp_path / "missing.json")).load_config()
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        ConfigManager(str(bad)).load_config()
    extra = write_config(tmp_path / "extra.json", {"experiment": "separation", "colour": 1})
    with pytest.raises(ConfigError):
        ConfigManager(extra).load_config()
    eps = write_config(tmp_path / "eps.json", {"experiment": "separation", "epsilons": [1.5]})
    with pytest.raises(ConfigError):
        ConfigManager(eps).load_config()


def test_override_is_validated(tmp_path):
    path = write_config(tmp_path / "c.json", SMALL_SEPARATION)
    with pytest.raises(ConfigError):
        ConfigManager(path).load_config(overrides={"sampler.chains": 0})


def test_resolve_out_precedence(tmp_path, monkeypatch):
    config = ExperimentConfig(experiment="bounds_overlay", out=str(tmp_path / "from_config"))
    monkeypatch.delenv(OUT_ENV_VAR, raising=False)
    assert ConfigManager.resolve_out(config) == tmp_path / "from_config"
    monkeypatch.setenv(OUT_ENV_VAR, str(tmp_path / "from_env"))
    assert ConfigManager.resolve_out(config) == tmp_path / "from_config"
    assert ConfigManager.resolve_out(config, str(tmp_path / "cli")) == tmp_path / "cli"
    bare = ExperimentConfig(experiment="validate")
    assert ConfigManager.resolve_out(bare) == tmp_path / "from_env"
    monkeypatch.delenv(OUT_ENV_VAR)
    assert str(ConfigManager.resolve_out(bare)) == "results"


def test_out_help_states_precedence(capsys):
    with pytest.raises(SystemExit):
        main(["run", "--help"])
    assert "HTPROX_OUT" in capsys.readouterr().out


def test_bins_field_documents_sample_size_rule():
    schema = ExperimentConfig.model_json_schema()["properties"]["bins"]
    assert schema["default"] == 20
    assert "100 * bins" in schema["description"]


def test_shipped_configs_load():
    for name in ("separation", "bounds", "bounds_stable", "validate", "single_run"):
        ConfigManager(str(REPO / "configs" / f"{name}.json")).load_config()
    ConfigManager(str(REPO / "config.template.json")).load_config()


# ------------------------------------------------------------------ summary


def _rows(sampler, eta, values, nu=2.0):
    return [
        ResultRow(
            experiment="separation/c0=1", sampler=sampler, d=1, nu=nu, eta=eta, k=k,
            div_kind="radial_tv", div_value=v, seed=0,
        )
        for k, v in values
    ]


KS = [0, 1, 2, 5, 10, 20, 50, 100]
ETA_G = 1.0 / 3.0
ETA_S = 1.0 / 81.0


def _stable_curve(floor, ks=KS):
    return [(k, max(0.5 * math.exp(-0.1 * k), floor)) for k in ks]


def _gaussian_curve(power=1.0, ks=KS):
    return [(k, 0.5 / (1.0 + k * ETA_G) ** power) for k in ks]


def _failed_checks(stable, gaussian, nu=2.0):
    rows = _rows("stable_proximal", ETA_S, stable) + _rows("gaussian_proximal", ETA_G, gaussian, nu)
    verdict = summarize(rows, [0.2, 0.1, 0.05])["experiments"]["separation/c0=1"]["verdict"]
    return verdict, {name for name, ok in verdict["checks"].items() if ok is False}


def test_summary_verdict_on_synthetic_curves():
    rows = _rows("stable_proximal", ETA_S, _stable_curve(0.01))
    rows += _rows("gaussian_proximal", ETA_G, _gaussian_curve())
    summary = summarize(rows, [0.2, 0.1, 0.05])
    entry = summary["experiments"]["separation/c0=1"]
    assert entry["noise_floor"] == 0.01
    verdict = entry["verdict"]
    assert verdict["iterations_to_eps"]["0.2"]["stable_proximal"] == 10
    assert verdict["eps_star"] == 0.05
    assert verdict["k_star"] == 50
    assert verdict["tv_ratio_at_k_star"] == pytest.approx(0.5 / (1.0 + 50 * ETA_G) / 0.01)
    assert verdict["stable_log_linear"] and verdict["gaussian_power_law"]
    assert all(verdict["checks"].values())
    assert verdict["gaussian_eps_ratio"]["ratio"] >= verdict["gaussian_eps_ratio"]["threshold"]
    assert verdict["stable_eps_fit"]["r2"] >= 0.9
    assert verdict["separated"]
    assert summary["stable_under_multipliers"] is True


def test_verdict_requires_stable_to_reach_smallest_eps():
    verdict, failed = _failed_checks(_stable_curve(0.12), _gaussian_curve())
    assert "stable_reaches_eps" in failed
    assert verdict["k_star"] is None
    assert not verdict["separated"]


@pytest.mark.parametrize(
    "check, stable, gaussian, nu",
    [
        ("tv_ratio", _stable_curve(0.02), _gaussian_curve(), 2.0),
        (
            "stable_log_linear",
            list(zip(KS, [0.5, 0.45, 0.45, 0.45, 0.45, 0.03, 0.01, 0.01])),
            _gaussian_curve(),
            2.0,
        ),
        ("gaussian_power_law", _stable_curve(0.01), _gaussian_curve(), 6.0),
        (
            "gaussian_eps_scaling",
            _stable_curve(0.01),
            list(zip(KS, [0.5, 0.5, 0.5, 0.5, 0.5, 0.21, 0.04, 0.03])),
            2.0,
        ),
        (
            "stable_eps_affine",
            [(k, v) for k, v in _stable_curve(0.0) if k <= 20] + [(200, 0.01)],
            _gaussian_curve(0.7, KS + [200]),
            2.0,
        ),
    ],
)
def test_each_check_alone_blocks_separation(check, stable, gaussian, nu):
    verdict, failed = _failed_checks(stable, gaussian, nu)
    assert failed == {check}
    assert not verdict["separated"]


def test_eps_scaling_helpers():
    assert crossing_iteration([0, 10], [1.0, 0.01], 0.1) == pytest.approx(5.0)
    assert crossing_iteration([0, 10], [0.05, 0.01], 0.1) == 0.0
    assert crossing_iteration([0, 10], [0.5, 0.3], 0.1) is None

    scaling = gaussian_eps_scaling([0, 10, 100], [0.5, 0.15, 0.1], [0.2, 0.05])
    n_hi = 10 * math.log(0.5 / 0.2) / math.log(0.5 / 0.15)
    assert scaling["censored"]
    assert scaling["ratio"] == pytest.approx(100 / n_hi)
    assert scaling["threshold"] == pytest.approx(4.0**0.6)
    assert scaling["passed"]
    assert gaussian_eps_scaling([0, 10], [0.5, 0.3], [0.2, 0.05])["passed"] is False
    assert gaussian_eps_scaling([0, 10], [0.5, 0.1], [0.05]) is None

    fit = stable_eps_affine([0, 10], [1.0, 0.01], [0.2, 0.1, 0.05])
    assert fit["r2"] == pytest.approx(1.0)
    assert fit["slope"] == pytest.approx(10 / math.log(100))
    assert stable_eps_affine([0, 10], [1.0, 0.3], [0.2, 0.1])["passed"] is False


def test_fit_helpers():
    x = np.array([1.0, 2.0, 4.0, 8.0])
    fit = fit_decay(x, 3.0 * x**-0.5, "log_log")
    assert fit.slope == pytest.approx(-0.5)
    assert fit.r2 == pytest.approx(1.0)
    assert fit_decay([1.0], [0.5], "log_linear") is None
    assert iterations_to_eps([0, 5, 10], [0.5, 0.09, 0.01], 0.1) == 5
    assert iterations_to_eps([0, 5], [0.5, 0.3], 0.1) is None


def test_soundness_and_monotone_checks():
    def row(k, v, se, bound=None):
        return ResultRow(
            experiment="e", sampler="gaussian_proximal", d=1, nu=2.0, eta=0.1, k=k,
            div_kind="radial_tv", div_value=v, div_se=se, bound_value=bound, seed=0,
        )

    rows = [row(0, 0.5, 0.01, 0.4), row(1, 0.3, 0.01, 0.32), row(2, 0.2, 0.01, 0.3)]
    assert lower_bound_violations(rows) == [2]
    assert is_monotone(rows)
    assert is_monotone([row(0, 0.30, 0.01), row(1, 0.32, 0.01)])
    assert not is_monotone([row(0, 0.30, 0.01), row(1, 0.40, 0.01)])

    summary = summarize(rows, [0.1])
    assert summary["lower_bounds_sound"] is False
    assert summary["experiments"]["e"]["samplers"]["gaussian_proximal"]["monotone"]


# --------------------------------------------------------------------- main


def test_version(capsys):
    assert main(["version"]) == EXIT_OK
    assert __version__ in capsys.readouterr().out


def test_no_command_prints_quick_start(capsys):
    assert main([]) == EXIT_OK
    assert "Quick start" in capsys.readouterr().out


def test_config_errors_exit_two(tmp_path):
    out = str(tmp_path / "out")
    bad = tmp_path / "bad.json"
    bad.write_text("[]")
    assert main(["bounds", "--config", str(bad), "--out", out]) == EXIT_CONFIG
    sep = write_config(tmp_path / "sep.json", SMALL_SEPARATION)
    assert main(["bounds", "--config", sep, "--out", out]) == EXIT_CONFIG
    assert main(["separation", "--config", sep, "--out", out, "--target.colour=1"]) == EXIT_CONFIG
    only_stable = dict(SMALL_SEPARATION, samplers=SMALL_SEPARATION["samplers"][:1])
    lonely = write_config(tmp_path / "lonely.json", only_stable)
    assert main(["separation", "--config", lonely, "--out", out]) == EXIT_CONFIG


def test_bounds_overlay_slope(tmp_path):
    config = {
        "experiment": "bounds_overlay",
        "target": {"dim": 1, "nu": 2.0, "C_fpi": 1.0, "chi2_0": 1.0},
        "bounds": {
            "curves": ["gaussian_prox", "langevin", "chi2_upper"],
            "k_grid": [1e3, 1e4, 1e5, 1e6],
            "delta": 0.05,
        },
    }
    out = tmp_path / "out"
    path = write_config(tmp_path / "b.json", config)
    assert main(["bounds", "--config", path, "--out", str(out)]) == EXIT_OK
    assert (out / RESOLVED_NAME).exists()
    assert (out / "bounds.svg").exists()
    rows = read_rows(out / "bounds.csv")
    prox = [r for r in rows if r.sampler == "gaussian_prox"]
    assert len(prox) == 4
    slope = np.polyfit(np.log([r.k for r in prox]), np.log([r.bound_value for r in prox]), 1)[0]
    assert -1.1 <= slope <= -0.9
    assert all(r.eta == 0.0 for r in rows if r.sampler == "langevin")
    summary = json.loads((out / "bounds_summary.json").read_text())
    ideal = summary["complexity"]["0.05"]["ideal"]
    assert ideal["log_factor"] is True
    assert "implementable_nu_ge_1" in summary["complexity"]["0.05"]


def test_stable_bounds_curve(tmp_path):
    out = tmp_path / "out"
    config = str(REPO / "configs" / "bounds_stable.json")
    assert main(["bounds", "--config", config, "--out", str(out)]) == EXIT_OK
    rows = read_rows(out / "bounds.csv")
    stable = [r for r in rows if r.sampler == "stable_prox"]
    assert stable and all(0.0 < r.bound_value <= 1.0 for r in stable)
    assert all(r.bound_value is not None for r in rows if r.sampler == "wfpi")


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV_VAR, str(tmp_path / "env_out"))
    assert main(["bounds", "--bounds.k_grid=[1000, 10000]"]) == EXIT_OK
    assert (tmp_path / "env_out" / "bounds.csv").exists()


def test_separation_summary_is_a_function_of_the_csv(tmp_path, capsys):
    out = tmp_path / "out"
    config = write_config(tmp_path / "sep.json", SMALL_SEPARATION)
    assert main(["separation", "--config", config, "--out", str(out)]) == EXIT_OK
    csv_path = out / "separation.csv"
    assert csv_path.read_text().splitlines()[0] == ",".join(CSV_HEADER)
    written = json.loads((out / "separation_summary.json").read_text())
    assert summarize_csv(csv_path, [0.2, 0.1, 0.05]) == written
    rows = read_rows(csv_path)
    assert {r.sampler for r in rows} == {"stable_proximal", "gaussian_proximal"}
    assert {r.experiment for r in rows} == {"separation/c0=1"}
    gaussian = [r for r in rows if r.sampler == "gaussian_proximal"]
    assert all(r.bound_value is not None for r in gaussian)
    assert main(["summarize", str(csv_path), "--config", config]) == EXIT_OK
    assert "separation/c0=1" in capsys.readouterr().out


def test_summarize_missing_csv(tmp_path):
    assert main(["summarize", str(tmp_path / "nope.csv")]) == EXIT_CONFIG


def _drop(line, col):
    return ",".join(v for i, v in enumerate(line.split(",")) if i != col)


def test_seed_flag_reproduces_rows(tmp_path):
    config = write_config(tmp_path / "sep.json", SMALL_SEPARATION)
    for name in ("a", "b"):
        argv = ["separation", "--config", config, "--out", str(tmp_path / name), "--seed", "11"]
        assert main(argv) == EXIT_OK
    a = (tmp_path / "a" / "separation.csv").read_text().splitlines()
    b = (tmp_path / "b" / "separation.csv").read_text().splitlines()
    # wall_ms differs between runs; everything else must match
    col = CSV_HEADER.index("wall_ms")
    assert [_drop(line, col) for line in a] == [_drop(line, col) for line in b]


def test_single_run(tmp_path):
    config = {
        "experiment": "single_run",
        "target": {"dim": 1, "nu": 0.8},
        "samplers": [{"kind": "stable_proximal", "alpha": 1.0, "chains": 300}],
        "record_at": [0, 1, 5],
    }
    out = tmp_path / "out"
    path = write_config(tmp_path / "r.json", config)
    assert main(["run", "--config", path, "--out", str(out)]) == EXIT_OK
    kinds = {r.div_kind for r in read_rows(out / "single_run.csv")}
    assert kinds == {"radial_tv", "ks", "hist_chi2"}


# ---------------------------------------------------------------- validate


def _oracle_config(tmp_path):
    return write_config(
        tmp_path / "v.json",
        {"experiment": "validate", "validation": {"groups": ["oracles"], "n_draws": 20_000}},
    )


def test_validation_report_covers_registered_checks(tmp_path):
    config = ConfigManager(_oracle_config(tmp_path)).load_config()
    report = run_validation(config, tmp_path)
    assert len(report.results) == len(registered_checks(["oracles"])) == 3
    assert report.passed
    assert (tmp_path / "validation.csv").read_text().startswith("name,group,statistic")


def test_growth_band_and_isotropy_checks_pass():
    ctx = ValidationContext(ValidationConfig(n_draws=50_000), seed=3)
    checks = {c.name: c for c in registered_checks(["rng", "targets"])}
    for name in ("growth_band", "isotropy"):
        statistic, threshold, passed = checks[name].fn(ctx)
        assert passed, (name, statistic, threshold)


def test_validation_fails_on_wrong_acceptance(tmp_path, monkeypatch):
    real = oracles._log_acceptance
    monkeypatch.setattr(
        oracles, "_log_acceptance", lambda target, x, floor: 2.0 * real(target, x, floor)
    )
    out = str(tmp_path / "out")
    assert main(["validate", "--config", _oracle_config(tmp_path), "--out", out]) == EXIT_FAILURE


def test_validate_kind_selects_groups():
    from cli.validate import groups_for

    assert groups_for(ExperimentConfig(experiment="validate_rng")) == ["rng", "targets"]
    assert groups_for(ExperimentConfig(experiment="validate_oracles")) == ["oracles", "samplers"]
    assert len(groups_for(ExperimentConfig(experiment="validate"))) == 5


@pytest.mark.slow
def test_full_validation_suite(tmp_path):
    config = str(REPO / "configs" / "validate.json")
    assert main(["validate", "--config", config, "--out", str(tmp_path)]) == EXIT_OK


@pytest.mark.slow
def test_separation_acceptance(tmp_path):
    config = str(REPO / "configs" / "separation.json")
    out = tmp_path / "separation"
    assert main(["separation", "--config", config, "--out", str(out), "--threads", "4"]) == EXIT_OK
    summary = json.loads((out / "separation_summary.json").read_text())
    assert summary["lower_bounds_sound"] is True
    assert summary["stable_under_multipliers"] is True
    assert len(summary["experiments"]) == 3
    for entry in summary["experiments"].values():
        assert entry["verdict"]["separated"], entry["verdict"]["checks"]
        assert entry["samplers"]["stable_proximal"]["monotone"]
        assert entry["samplers"]["gaussian_proximal"]["lower_bound_violations"] == []
