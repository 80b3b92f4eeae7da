import math

import pytest
from pydantic import ValidationError

from htprox.results import CSV_HEADER, ResultRow, plot_tv_curves, read_rows, write_rows


def make_row(**overrides):
    row = dict(
        experiment="separation/c0=1",
        sampler="stable_proximal",
        d=1,
        nu=2.0,
        alpha=1.0,
        eta=1.0 / 81.0,
        k=10,
        wall_ms=0.25,
        rejections_mean=1.5,
        div_kind="radial_tv",
        div_value=0.123456789012345,
        div_se=0.01,
        bound_value=None,
        seed=0,
    )
    row.update(overrides)
    return ResultRow(**row)


def test_header_order(tmp_path):
    path = write_rows([make_row()], tmp_path / "out.csv")
    first = path.read_text().splitlines()[0]
    assert first == ",".join(CSV_HEADER)
    assert first == (
        "experiment,sampler,d,nu,alpha,eta,k,wall_ms,rejections_mean,"
        "div_kind,div_value,div_se,bound_value,seed"
    )


def test_rows_survive_a_file(tmp_path):
    rows = [make_row(), make_row(sampler="gaussian_proximal", alpha=None, bound_value=0.3, k=0)]
    back = read_rows(write_rows(rows, tmp_path / "nested" / "out.csv"))
    assert back == rows
    assert back[1].alpha is None


def test_unexpected_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_rows(path)


@pytest.mark.parametrize("field", ["eta", "div_value", "bound_value"])
def test_non_finite_values_rejected(field):
    with pytest.raises(ValidationError):
        make_row(**{field: math.nan})
    with pytest.raises(ValidationError):
        make_row(**{field: math.inf})


def test_unknown_column_rejected():
    with pytest.raises(ValidationError):
        make_row(extra_column=1)


def test_plot_writes_svg(tmp_path):
    rows = [make_row(k=k, div_value=1.0 / (k + 1), bound_value=0.5 / (k + 1)) for k in (1, 10, 100)]
    path = plot_tv_curves(rows, tmp_path / "curves.svg", title="radial TV")
    assert path.exists()
    assert "<svg" in path.read_text()


def test_plot_skips_empty(tmp_path):
    assert plot_tv_curves([make_row(k=0)], tmp_path / "none.svg") is None
    assert not (tmp_path / "none.svg").exists()
