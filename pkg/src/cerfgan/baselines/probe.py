"""StarGAN failure probe on a toy task with known ground truth.

For each translator the probe measures, per test image, the L1 distance of
the output to its input and to the paired ground-truth target. A translator
that barely changes its input sits closer to the input than to the target.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import torch
from torch import Tensor

from ..data import AugmentSpec, DomainDataset, center_view
from ..domains import DomainRegistry, one_hot
from ..networks import translate_images
from ..trainer import CerfGANTrainer, TrainConfig, run_training
from .stargan import BaselineSpec, StarGANTrainer

Translator = Callable[[Tensor, int], Tensor]


@dataclass
class ProbeRow:
    model: str
    lambda_cls: Optional[float]
    l1_input: float
    l1_target: float
    frac_closer_to_input: float
    log: Optional[Path] = None

    def as_dict(self) -> dict:
        return {"model": self.model, "lambda_cls": "" if self.lambda_cls is None else self.lambda_cls,
                "l1_input": self.l1_input, "l1_target": self.l1_target,
                "frac_closer_to_input": self.frac_closer_to_input, "log": self.log or ""}


def stack_views(ds: DomainDataset, size: int) -> Tensor:
    return torch.stack([center_view(ds.raw(j), size) for j in range(len(ds))])


def per_image_l1(out: Tensor, ref: Tensor) -> np.ndarray:
    return (out - ref).abs().flatten(1).mean(1).numpy()


def evaluate_translator(fn: Translator, test: tuple[DomainDataset, DomainDataset], size: int) -> dict[str, np.ndarray]:
    """Per-image distances for both directions of a paired two-domain test set."""
    xa, xb = stack_views(test[0], size), stack_views(test[1], size)
    ya, yb = fn(xb, 0), fn(xa, 1)
    return {
        "l1_input": np.concatenate([per_image_l1(yb, xa), per_image_l1(ya, xb)]),
        "l1_target": np.concatenate([per_image_l1(yb, xb), per_image_l1(ya, xa)]),
    }


def summarize(model: str, lambda_cls: Optional[float], metrics: dict[str, np.ndarray],
              log: Optional[Path] = None) -> ProbeRow:
    return ProbeRow(model, lambda_cls, float(metrics["l1_input"].mean()), float(metrics["l1_target"].mean()),
                    float((metrics["l1_input"] < metrics["l1_target"]).mean()), log)


def cerfgan_translator(trainer: CerfGANTrainer) -> Translator:
    n = trainer.registry.N
    return lambda x, t: translate_images(x, one_hot(t, n), trainer.mcd, trainer.decoder)


def stargan_translator(trainer: StarGANTrainer) -> Translator:
    return lambda x, t: torch.cat([trainer.translate(x[j:j + 1], t) for j in range(len(x))])


def identity_translator() -> Translator:
    return lambda x, t: x.clone()


def write_table(rows: Sequence[ProbeRow], path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].as_dict()), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r.as_dict())
    return path


def run_stargan_failure_probe(registry: DomainRegistry, train: tuple[DomainDataset, DomainDataset],
                              test: tuple[DomainDataset, DomainDataset], cfg: TrainConfig,
                              run_dir: Path | str, lambda_grid: Sequence[float] = (0.0, 10.0),
                              spec: BaselineSpec = BaselineSpec(), augment: Optional[AugmentSpec] = None,
                              cerfgan: Optional[CerfGANTrainer] = None,
                              cerfgan_cfg: Optional[TrainConfig] = None,
                              max_steps: Optional[int] = None) -> list[ProbeRow]:
    """Train StarGAN for each lambda_cls (and CerfGAN unless given), then tabulate."""
    run_dir = Path(run_dir)
    rows = [summarize("identity", None, evaluate_translator(identity_translator(), test, cfg.resolution))]
    for lam in lambda_grid:
        s = replace(spec, variant="stargan", lambda_cls=float(lam))
        trainer = StarGANTrainer(cfg, registry, s)
        res = run_training(cfg, registry, list(train), run_dir / f"stargan_cls{lam:g}", trainer=trainer,
                           augment=augment, max_steps=max_steps)
        rows.append(summarize("stargan", float(lam), evaluate_translator(stargan_translator(trainer), test,
                                                                         cfg.resolution), res.log_path))
    log = None
    if cerfgan is None:
        res = run_training(cerfgan_cfg or cfg, registry, list(train), run_dir / "cerfgan", augment=augment,
                           max_steps=max_steps)
        cerfgan, log = res.trainer, res.log_path
    rows.append(summarize("cerfgan", None, evaluate_translator(cerfgan_translator(cerfgan), test,
                                                               cfg.resolution), log))
    write_table(rows, run_dir / "probe.csv")
    return rows
