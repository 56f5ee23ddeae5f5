"""Config-driven experiment runners shared by the CLI and the acceptance suite."""

from __future__ import annotations

import csv
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .baselines.cgan_mnist import (CGANResult, classify, conditional_fidelity, run_cgan_mcd_mnist,
                                   to_tensor, train_digit_classifier)
from .baselines.probe import ProbeRow, run_stargan_failure_probe
from .baselines.stargan import StarGANTrainer
from .checkpoint import Checkpoint
from .config import ConfigError, ExperimentConfig, load_config, write_snapshot
from .data import DomainDataset, center_view, load_domains, load_mnist, make_toy_translation_dataset
from .domains import one_hot
from .inference import render_grid
from .networks import translate_images
from .reporting import ParameterReport, analyze_stability, cerfgan_counts, module_counts, report_parameters
from .trainer import AlternatingTrainer, CerfGANTrainer, TrainResult, run_training


class DataError(RuntimeError):
    pass


def toy_split(cfg: ExperimentConfig, test: bool = False) -> tuple[DomainDataset, DomainDataset]:
    toy = cfg.data.toy
    if toy is None:
        raise ConfigError("data.toy is not set")
    n, seed = (toy.test_n, toy.test_seed) if test else (toy.n, toy.seed)
    return make_toy_translation_dataset(toy.kind, n, np.random.default_rng(seed), toy.size)


def load_datasets(cfg: ExperimentConfig) -> list[DomainDataset]:
    registry = cfg.registry_obj()
    if cfg.data.toy is not None:
        if registry.N != 2:
            raise ConfigError(f"toy data provides 2 domains but registry lists {registry.N}")
        return list(toy_split(cfg))
    root = cfg.data_root()
    if root is None:
        raise DataError("no data root: set data.root, data.toy or $CERFGAN_DATA_ROOT")
    try:
        return load_domains(root, registry.names)
    except (FileNotFoundError, ValueError) as e:
        raise DataError(str(e)) from None


def make_trainer(cfg: ExperimentConfig) -> AlternatingTrainer:
    tc, registry = cfg.train_config(), cfg.registry_obj()
    if cfg.variant.model == "cerfgan":
        return CerfGANTrainer(tc, registry)
    return StarGANTrainer(tc, registry, cfg.baseline_spec())


def train(cfg: ExperimentConfig, run_dir: Optional[Path | str] = None) -> TrainResult:
    """Snapshot the resolved config, then train."""
    run_dir = Path(run_dir or cfg.output.run_dir)
    datasets = load_datasets(cfg)
    write_snapshot(cfg, run_dir / "config.yaml")
    tc = cfg.train_config()
    return run_training(tc, cfg.registry_obj(), datasets, run_dir, trainer=make_trainer(cfg),
                        augment=cfg.augment_spec(), max_steps=cfg.train.max_steps)


def rerun(run_dir: Path | str, new_dir: Path | str) -> TrainResult:
    return train(load_config(Path(run_dir) / "config.yaml"), new_dir)


def ablate_skip_depth(cfg: ExperimentConfig, out_dir: Path | str) -> list[Path]:
    """Train one CerfGAN per skip depth and render a grid for each."""
    out_dir = Path(out_dir)
    datasets = load_datasets(cfg)
    registry = cfg.registry_obj()
    grids = []
    for s in cfg.ablation.skip_depths:
        sub = replace(cfg, variant=replace(cfg.variant, skip_depth=s, model="cerfgan"))
        res = train(sub, out_dir / f"skip{s}")
        tr = res.trainer
        sources = torch.stack([center_view(ds.raw(j), cfg.train.resolution)
                               for ds in datasets for j in range(min(2, len(ds)))])
        outs = [[translate_images(sources[r:r + 1], one_hot(t, registry.N), tr.mcd, tr.decoder)[0]
                 for t in range(registry.N)] for r in range(len(sources))]
        grids.append(render_grid(sources, outs, list(registry.names), out_dir / f"skip{s}_grid.png"))
    return grids


def ablate_stargan_probe(cfg: ExperimentConfig, out_dir: Path | str) -> list[ProbeRow]:
    if cfg.data.toy is None:
        raise ConfigError("the StarGAN probe needs data.toy (ground truth comes from the toy pairing)")
    return run_stargan_failure_probe(cfg.registry_obj(), toy_split(cfg), toy_split(cfg, test=True),
                                     cfg.train_config(), out_dir, cfg.ablation.lambda_grid,
                                     cfg.baseline_spec(), cfg.augment_spec(), max_steps=cfg.train.max_steps)


def ablate_mnist(cfg: ExperimentConfig, out_dir: Path | str) -> tuple[CGANResult, dict]:
    """CGAN-MCD run, digit grid, and conditional fidelity under an independent classifier."""
    out_dir = Path(out_dir)
    mcfg = cfg.ablation.mnist
    try:
        train_x, train_y = load_mnist(mcfg.data_dir, "train")
        test_x, test_y = load_mnist(mcfg.data_dir, "test")
    except (FileNotFoundError, ValueError) as e:
        raise DataError(str(e)) from None
    result = run_cgan_mcd_mnist(mcfg, out_dir)
    clf = train_digit_classifier(train_x, train_y, epochs=cfg.ablation.classifier_epochs, seed=mcfg.seed + 1)
    acc = (classify(clf, to_tensor(test_x)).numpy() == test_y).mean()
    fid = conditional_fidelity(result.generator, clf, cfg.ablation.fidelity_samples, mcfg.seed)
    summary = {"classifier_heldout_accuracy": float(acc), "conditional_fidelity": fid,
               "samples": cfg.ablation.fidelity_samples, "epochs": mcfg.epochs}
    with open(out_dir / "fidelity.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(summary))
        w.writerow(list(summary.values()))
    return result, summary


def _model_counts(run_dir: Path) -> dict[str, int]:
    cfg_path = run_dir / "config.yaml"
    if not cfg_path.exists():
        raise DataError(f"{run_dir} has no config.yaml snapshot")
    cfg = load_config(cfg_path)
    tc, registry = cfg.train_config(), cfg.registry_obj()
    if cfg.variant.model == "cerfgan":
        return cerfgan_counts(registry.N, tc.width, tc.n_down)
    tr = StarGANTrainer(tc, registry, cfg.baseline_spec())
    return module_counts(generator=tr.g_net, discriminator=tr.d_net)


def report(run_dirs: list[Path], out_dir: Path, params: bool, stability: bool,
           outlier_threshold: float = 10.0) -> list[Path]:
    if not run_dirs:
        raise DataError("report needs at least one run directory")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    labels = {}
    for d in run_dirs:
        label = d.name
        while label in labels:
            label += "_"
        labels[label] = d
    if params:
        rep: ParameterReport = report_parameters({k: _model_counts(d) for k, d in labels.items()})
        written.append(rep.write(out_dir / "parameters.csv"))
    if stability:
        logs = {}
        for k, d in labels.items():
            if not (d / "metrics.csv").exists():
                raise DataError(f"{d} has no metrics.csv")
            logs[k] = d / "metrics.csv"
        try:
            analyze_stability(logs, out_dir, outlier_threshold)
        except ValueError as e:
            raise DataError(str(e)) from None
        written += [out_dir / "stability.csv", out_dir / "stability.png"]
    return written


def latest_checkpoint(run_dir: Path | str) -> Checkpoint:
    ckpts = sorted((Path(run_dir) / "checkpoints").glob("step*"))
    if not ckpts:
        raise FileNotFoundError(f"no checkpoints under {run_dir}")
    return Checkpoint(ckpts[-1])
