"""Parameter-count tables and loss-curve stability statistics."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from torch import nn

from .domains import DomainRegistry
from .networks import MCD, Decoder, NetConfig, count_parameters

STABILITY_COLUMNS = ("mcd_loss", "decoder_adv", "total")


def cerfgan_counts(n_domains: int, width: float = 1.0, n_down: int = 6) -> dict[str, int]:
    cfg = NetConfig(n_domains, width=width, n_down=n_down)
    m, d = count_parameters(MCD(cfg)), count_parameters(Decoder(cfg))
    return {"mcd": m, "decoder": d, "total": m + d}


def stargan_counts(n_domains: int, width: float = 1.0, image_size: int = 128) -> dict[str, int]:
    from .baselines.stargan import BaselineSpec, build_stargan

    reg = DomainRegistry(tuple(f"d{i}" for i in range(n_domains)), frozenset({frozenset((0, 1))}))
    return build_stargan(reg, BaselineSpec(width=width), image_size).parameter_counts()


def module_counts(**modules: nn.Module) -> dict[str, int]:
    counts = {name: count_parameters(m) for name, m in modules.items()}
    counts["total"] = sum(counts.values())
    return counts


@dataclass
class ParameterReport:
    rows: dict[str, dict[str, int]]
    ratios: dict[str, float]

    def to_text(self) -> str:
        lines = ["model,part,parameters"]
        for model, parts in self.rows.items():
            for part, n in parts.items():
                lines.append(f"{model},{part},{n}")
        for name, r in self.ratios.items():
            lines.append(f"ratio,{name},{r:.4f}")
        return "\n".join(lines) + "\n"

    def write(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text())
        return path


def report_parameters(models: Mapping[str, Mapping[str, int]], pairs: Sequence[tuple[str, str]] = ()) -> ParameterReport:
    """Per-model counts plus total ratios for each (numerator, denominator) pair.

    Without explicit pairs every model is compared with the first one listed.
    """
    rows = {name: dict(parts) for name, parts in models.items()}
    for name, parts in rows.items():
        if "total" not in parts:
            parts["total"] = sum(parts.values())
    if not pairs and len(rows) > 1:
        ref = next(iter(rows))
        pairs = [(name, ref) for name in rows if name != ref]
    ratios = {f"{a}/{b}": rows[a]["total"] / rows[b]["total"] for a, b in pairs}
    return ParameterReport(rows, ratios)


@dataclass
class StabilityReport:
    label: str
    series: str
    n: int
    minimum: float
    maximum: float
    dynamic_range: float
    iqr: float
    outliers: int
    outlier_threshold: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def stability_stats(values: Sequence[float], outlier_threshold: float = 10.0, label: str = "",
                    series: str = "") -> StabilityReport:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty loss series")
    q75, q25 = np.percentile(v, [75, 25])
    return StabilityReport(label, series, int(v.size), float(v.min()), float(v.max()), float(v.max() - v.min()),
                           float(q75 - q25), int((np.abs(v) > outlier_threshold).sum()), outlier_threshold)


def read_metric_log(path: Path | str) -> dict[str, np.ndarray]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty metric log")
        missing = [c for c in ("step", *STABILITY_COLUMNS) if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"{path}: malformed metric log, missing columns {missing}")
        cols: dict[str, list[float]] = {c: [] for c in reader.fieldnames}
        for n, row in enumerate(reader, start=2):
            for c in reader.fieldnames:
                try:
                    cols[c].append(float(row[c]))
                except (TypeError, ValueError):
                    raise ValueError(f"{path}:{n}: malformed value {row[c]!r} in column {c!r}") from None
    return {c: np.asarray(v) for c, v in cols.items()}


def analyze_stability(logs: Mapping[str, Path | str], out_dir: Path | str, outlier_threshold: float = 10.0,
                      columns: Sequence[str] = STABILITY_COLUMNS, plot: bool = True) -> dict[str, list[StabilityReport]]:
    """Statistics per log and loss column; writes ``stability.csv`` and an overlay plot."""
    if not logs:
        raise ValueError("analyze_stability needs at least one metric log")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = {label: read_metric_log(p) for label, p in logs.items()}
    reports = {label: [stability_stats(d[c], outlier_threshold, label, c) for c in columns]
               for label, d in data.items()}
    with open(out_dir / "stability.csv", "w", newline="") as fh:
        fields = list(next(iter(reports.values()))[0].as_dict())
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for rs in reports.values():
            for r in rs:
                w.writerow(r.as_dict())
    if plot:
        plot_losses(data, columns, out_dir / "stability.png")
    return reports


def plot_losses(data: Mapping[str, Mapping[str, np.ndarray]], columns: Sequence[str], path: Path) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(len(columns), 1, figsize=(8, 2.6 * len(columns)), sharex=True, squeeze=False)
    for ax, col in zip(axes[:, 0], columns):
        for label, d in data.items():
            ax.plot(d["step"], d[col], lw=0.8, label=label)
        ax.set_ylabel(col)
        ax.legend(loc="upper right", fontsize=8)
    axes[-1, 0].set_xlabel("step")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def compare_dynamic_range(a: Sequence[StabilityReport], b: Sequence[StabilityReport],
                          series: str = "decoder_adv") -> Optional[bool]:
    """True when ``a``'s range on ``series`` is no wider than ``b``'s."""
    ra = next((r for r in a if r.series == series), None)
    rb = next((r for r in b if r.series == series), None)
    if ra is None or rb is None:
        return None
    return ra.dynamic_range <= rb.dynamic_range
