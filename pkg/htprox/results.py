"""Result rows, CSV persistence, summary JSON and the optional SVG plot."""
import csv
import json
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from pydantic import BaseModel, ConfigDict, field_validator

logger = logging.getLogger(__name__)

CSV_HEADER = (
    "experiment",
    "sampler",
    "d",
    "nu",
    "alpha",
    "eta",
    "k",
    "wall_ms",
    "rejections_mean",
    "div_kind",
    "div_value",
    "div_se",
    "bound_value",
    "seed",
)


class ResultRow(BaseModel):
    """One (sampler, k, divergence kind) measurement."""

    model_config = ConfigDict(extra="forbid")

    experiment: str
    sampler: str
    d: int
    nu: float
    alpha: Optional[float] = None
    eta: float
    k: float
    wall_ms: float = 0.0
    rejections_mean: float = 0.0
    div_kind: str
    div_value: Optional[float] = None
    div_se: Optional[float] = None
    bound_value: Optional[float] = None
    seed: int

    @field_validator("nu", "eta", "k", "wall_ms", "rejections_mean")
    @classmethod
    def _finite(cls, value):
        if not math.isfinite(value):
            raise ValueError("values must be finite")
        return value

    @field_validator("alpha", "div_value", "div_se", "bound_value")
    @classmethod
    def _finite_or_missing(cls, value):
        if value is not None and not math.isfinite(value):
            raise ValueError("values must be finite")
        return value

    def to_csv(self) -> Dict[str, str]:
        out = {}
        for name in CSV_HEADER:
            value = getattr(self, name)
            if value is None:
                out[name] = ""
            elif isinstance(value, float):
                out[name] = repr(value)
            else:
                out[name] = str(value)
        return out


def write_rows(rows: Iterable[ResultRow], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = list(rows)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_HEADER)
        writer.writeheader()
        for row in rows:
            writer.writerow(row.to_csv())
    logger.info("wrote %d rows to %s", len(rows), path)
    return path


def read_rows(path: Path) -> List[ResultRow]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected CSV header {reader.fieldnames}")
        return [
            ResultRow(**{key: value for key, value in record.items() if value != ""})
            for record in reader
        ]


def write_summary(summary: dict, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    return path


def plot_tv_curves(rows: Iterable[ResultRow], path: Path, title: str = "") -> Optional[Path]:
    """Log-log divergence (and bound) vs. k per sampler, written as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series: Dict[str, List[tuple]] = {}
    for row in rows:
        if row.k <= 0:
            continue
        if row.div_value is not None and row.div_value > 0:
            series.setdefault(f"{row.sampler} {row.div_kind}", []).append((row.k, row.div_value))
        if row.bound_value is not None and row.bound_value > 0:
            series.setdefault(f"{row.sampler} bound", []).append((row.k, row.bound_value))
    if not series:
        logger.info("nothing positive to plot for %s", path)
        return None

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, points in sorted(series.items()):
        points.sort()
        style = "--" if label.endswith("bound") else "-"
        ax.loglog([p[0] for p in points], [p[1] for p in points], style, label=label)
    ax.set_xlabel("iteration k")
    ax.set_ylabel("divergence")
    if title:
        ax.set_title(title)
    ax.legend(fontsize="small")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
