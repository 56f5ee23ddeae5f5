"""Alternating two-phase optimisation of the MCD and the decoder.

Each iteration samples a directed task (target i, source k), updates the
MCD once with the decoder frozen, then updates the decoder once with the
MCD frozen. Frozen means no gradients reach its parameters and its
normalization statistics are not touched.
"""

from __future__ import annotations

import contextlib
import csv
import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np
import torch
from torch import Tensor, nn

from . import losses
from .checkpoint import save_checkpoint
from .data import AugmentSpec, DomainDataset, DomainSampler, center_view, iterations_per_epoch
from .inference import render_grid
from .domains import DomainRegistry, label_batch
from .networks import (MCD, Decoder, NetConfig, batch_stats_no_update, decode,
                       inference_mode, select_adversarial, translate_images)

log = logging.getLogger(__name__)

STANDARD = "standard"
WGAN_GP = "wgan-gp"
LOG_COLUMNS = ("step", "epoch", "task_i", "task_k", "mcd_loss", "decoder_adv",
               "reconstruction", "total", "lr")


@dataclass
class TrainConfig:
    resolution: int = 128
    batch_size: int = 4
    total_epochs: Optional[int] = None  # None -> 200 * N
    iterations_per_epoch: Optional[int] = None  # None -> ceil(largest domain / batch_size)
    base_lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    lambda_rec: float = losses.DEFAULT_LAMBDA_REC
    loss_mode: str = STANDARD
    decoder_adv_mode: str = losses.NON_SATURATING
    lambda_gp: float = losses.DEFAULT_LAMBDA_GP
    n_critic: Optional[int] = None  # None -> 1 (standard) or 5 (wgan-gp)
    skip_depth: Optional[int] = None
    width: float = 1.0
    n_down: int = 6
    seed: int = 0
    checkpoint_every: int = 1
    sample_every: int = 0
    deterministic: bool = True
    check_freeze: bool = False

    def __post_init__(self):
        for name in ("resolution", "batch_size", "checkpoint_every", "n_down"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("total_epochs", "iterations_per_epoch", "n_critic"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")
        if self.base_lr <= 0 or self.width <= 0:
            raise ValueError("base_lr and width must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must be in [0, 1)")
        if self.lambda_rec < 0 or self.lambda_gp < 0:
            raise ValueError("loss weights must be non-negative")
        if self.loss_mode not in (STANDARD, WGAN_GP):
            raise ValueError(f"unknown loss_mode {self.loss_mode!r}")
        if self.decoder_adv_mode not in (losses.SATURATING, losses.NON_SATURATING):
            raise ValueError(f"unknown decoder_adv_mode {self.decoder_adv_mode!r}")
        if self.sample_every < 0:
            raise ValueError("sample_every must be >= 0")
        if self.resolution % 2**self.n_down:
            raise ValueError(f"resolution must be a multiple of {2**self.n_down}")

    def epochs(self, n_domains: int) -> int:
        return self.total_epochs if self.total_epochs is not None else 200 * n_domains

    def critic_steps(self) -> int:
        if self.n_critic is not None:
            return self.n_critic
        return 5 if self.loss_mode == WGAN_GP else 1

    def net_config(self, n_domains: int) -> NetConfig:
        return NetConfig(n_domains, width=self.width, n_down=self.n_down, skip_depth=self.skip_depth)


@dataclass
class LossReport:
    mcd_loss: float = math.nan
    decoder_adv: float = math.nan
    reconstruction: float = math.nan
    total_decoder: float = math.nan
    extra: dict = field(default_factory=dict)

    def finite(self) -> bool:
        vals = [self.mcd_loss, self.decoder_adv, self.reconstruction, self.total_decoder, *self.extra.values()]
        return all(math.isfinite(v) for v in vals)

    def merge(self, other: "LossReport") -> "LossReport":
        out = LossReport(**{k: v for k, v in asdict(self).items() if k != "extra"}, extra=dict(self.extra))
        for name in ("mcd_loss", "decoder_adv", "reconstruction", "total_decoder"):
            v = getattr(other, name)
            if not math.isnan(v):
                setattr(out, name, v)
        out.extra.update(other.extra)
        return out


class FreezeViolation(RuntimeError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, checkpoint: Optional[Path] = None):
        super().__init__(message)
        self.checkpoint = checkpoint


def checksum(module: nn.Module, buffers: bool = True) -> str:
    h = hashlib.sha256()
    tensors = list(module.state_dict().items()) if buffers else list(module.named_parameters())
    for name, t in tensors:
        h.update(name.encode())
        h.update(t.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def lr_schedule(epoch: int, total_epochs: int, base_lr: float) -> float:
    """Constant for the first half, then linear decay reaching 0 at ``total_epochs``."""
    if not 0 <= epoch <= total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs}]")
    half = total_epochs / 2
    if epoch <= half:
        return base_lr
    return base_lr * (total_epochs - epoch) / (total_epochs - half)


def sample_domain_pair(registry: DomainRegistry, rng: np.random.Generator) -> tuple[int, int]:
    """Uniform over allowed pairs, then uniform direction. Returns (target, source)."""
    pairs = registry.sorted_pairs()
    if not pairs:
        raise ValueError("registry has no translation pairs")
    a, b = pairs[int(rng.integers(len(pairs)))]
    return (a, b) if rng.random() < 0.5 else (b, a)


def set_frozen(module: nn.Module, frozen: bool) -> None:
    module.requires_grad_(not frozen)


@contextlib.contextmanager
def deterministic_mode(enabled: bool) -> Iterator[None]:
    if not enabled:
        yield
        return
    prev = torch.are_deterministic_algorithms_enabled()
    prev_threads = torch.get_num_threads()
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)
    try:
        yield
    finally:
        torch.use_deterministic_algorithms(prev)
        torch.set_num_threads(prev_threads)


class AlternatingTrainer:
    """Shared bookkeeping for models trained by discriminator/generator alternation.

    Subclasses implement ``d_step`` and ``g_step`` and name their two networks.
    """

    d_name = "mcd"
    g_name = "decoder"

    def __init__(self, cfg: TrainConfig, registry: DomainRegistry):
        self.cfg = cfg
        self.registry = registry
        self.step = 0
        self.epoch = 0

    # subclasses set these
    d_net: nn.Module
    g_net: nn.Module
    opt_d: torch.optim.Optimizer
    opt_g: torch.optim.Optimizer

    def make_optimizer(self, module: nn.Module) -> torch.optim.Optimizer:
        return torch.optim.Adam(module.parameters(), lr=self.cfg.base_lr,
                                betas=(self.cfg.beta1, self.cfg.beta2))

    def set_lr(self, lr: float) -> None:
        for opt in (self.opt_d, self.opt_g):
            for group in opt.param_groups:
                group["lr"] = lr

    def labels(self, domain: int, batch: int) -> Tensor:
        return label_batch([domain] * batch, self.registry.N)

    def _guarded(self, updated: nn.Module, frozen: nn.Module, fn, *args) -> LossReport:
        before = checksum(frozen) if self.cfg.check_freeze else None
        report = fn(*args)
        if before is not None and checksum(frozen) != before:
            raise FreezeViolation(f"{type(frozen).__name__} changed during a {type(updated).__name__} update")
        return report

    def mcd_step(self, x_real: Tensor, x_src: Tensor, i: int, k: int) -> LossReport:
        return self._guarded(self.d_net, self.g_net, self.d_step, x_real, x_src, i, k)

    def decoder_step(self, x_src: Tensor, i: int, k: int) -> LossReport:
        return self._guarded(self.g_net, self.d_net, self.g_step, x_src, i, k)

    def d_step(self, x_real: Tensor, x_src: Tensor, i: int, k: int) -> LossReport:
        raise NotImplementedError

    def g_step(self, x_src: Tensor, i: int, k: int) -> LossReport:
        raise NotImplementedError

    def _update(self, loss: Tensor, opt: torch.optim.Optimizer) -> None:
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        opt.zero_grad(set_to_none=True)

    def save(self, path: Path) -> Path:
        raise NotImplementedError

    def sample(self, datasets: Sequence[DomainDataset], path: Path) -> None:
        pass


class CerfGANTrainer(AlternatingTrainer):
    def __init__(self, cfg: TrainConfig, registry: DomainRegistry):
        super().__init__(cfg, registry)
        torch.manual_seed(cfg.seed)
        net_cfg = cfg.net_config(registry.N)
        self.mcd = MCD(net_cfg)
        self.decoder = Decoder(net_cfg)
        self.d_net, self.g_net = self.mcd, self.decoder
        self.opt_d = self.make_optimizer(self.mcd)
        self.opt_g = self.make_optimizer(self.decoder)
        self.gp_generator = torch.Generator().manual_seed(cfg.seed + 1)

    def d_step(self, x_real: Tensor, x_src: Tensor, i: int, k: int) -> LossReport:
        set_frozen(self.decoder, True)
        set_frozen(self.mcd, False)
        c_i = self.labels(i, x_src.shape[0])
        with torch.no_grad(), batch_stats_no_update(self.decoder), inference_mode(self.mcd):
            fake = decode(self.decoder, self.mcd.encode(x_src), c_i)
        self.mcd.train()
        n_real = x_real.shape[0]
        d = self.mcd(torch.cat([x_real, fake]))
        d_real = select_adversarial(d[:n_real], self.labels(i, n_real))
        d_fake = select_adversarial(d[n_real:], c_i)
        extra = {}
        if self.cfg.loss_mode == WGAN_GP:
            def critic_sel(z: Tensor) -> Tensor:
                return select_adversarial(self.mcd(z), self.labels(i, z.shape[0]))
            n = min(n_real, fake.shape[0])
            loss, _ = losses.wgan_gp_losses(d_real, d_fake, critic_sel, x_real[:n], fake[:n],
                                            self.cfg.lambda_gp, generator=self.gp_generator)
            extra["critic"] = loss.item()
        else:
            loss = losses.mcd_loss(d_real, d_fake)
        self._update(loss, self.opt_d)
        set_frozen(self.decoder, False)
        return LossReport(mcd_loss=loss.item(), extra=extra)

    def g_step(self, x_src: Tensor, i: int, k: int) -> LossReport:
        set_frozen(self.mcd, True)
        set_frozen(self.decoder, False)
        self.decoder.train()
        b = x_src.shape[0]
        c_i, c_k = self.labels(i, b), self.labels(k, b)
        with inference_mode(self.mcd):
            fake = decode(self.decoder, self.mcd.encode(x_src), c_i)
            feats_fake = self.mcd.encode(fake)
            d_fake = select_adversarial(self.mcd.adversarial(feats_fake[-1]), c_i)
            rec = decode(self.decoder, feats_fake, c_k)
        if self.cfg.loss_mode == WGAN_GP:
            adv = -d_fake.mean()
        else:
            adv = losses.decoder_adv_loss(d_fake, self.cfg.decoder_adv_mode)
        rec_loss = losses.reconstruction_loss(x_src, rec)
        total = adv + self.cfg.lambda_rec * rec_loss
        self._update(total, self.opt_g)
        set_frozen(self.mcd, False)
        return LossReport(decoder_adv=adv.item(), reconstruction=rec_loss.item(), total_decoder=total.item())

    def save(self, path: Path) -> Path:
        return save_checkpoint(path, self.mcd, self.decoder, self.registry,
                               resolution=self.cfg.resolution, loss_mode=self.cfg.loss_mode,
                               decoder_adv_mode=self.cfg.decoder_adv_mode, step=self.step,
                               epoch=self.epoch, optimizers={"mcd": self.opt_d, "decoder": self.opt_g})

    def sample(self, datasets: Sequence[DomainDataset], path: Path) -> None:
        sources = torch.stack([center_view(ds.raw(0), self.cfg.resolution) for ds in datasets])
        targets = list(range(self.registry.N))
        outs = [[translate_images(sources[r:r + 1], self.labels(t, 1), self.mcd, self.decoder)[0]
                 for t in targets] for r in range(len(sources))]
        render_grid(sources, outs, [self.registry.names[t] for t in targets], path)


@dataclass
class TrainResult:
    run_dir: Path
    log_path: Path
    checkpoints: list[Path]
    trainer: AlternatingTrainer


def _fmt(v: float) -> str:
    return repr(float(v))


def run_training(cfg: TrainConfig, registry: DomainRegistry, datasets: Sequence[DomainDataset],
                 run_dir: Path | str, trainer: Optional[AlternatingTrainer] = None,
                 augment: Optional[AugmentSpec] = None, max_steps: Optional[int] = None) -> TrainResult:
    """Train for ``cfg.epochs(N)`` epochs, logging one CSV row per iteration.

    ``max_steps`` truncates the run (the learning-rate schedule still spans
    the configured epochs).
    """
    if len(datasets) != registry.N:
        raise ValueError(f"expected {registry.N} datasets, got {len(datasets)}")
    for idx, ds in enumerate(datasets):
        if ds is None or len(ds) == 0:
            raise ValueError(f"dataset for domain {registry.names[idx]!r} is missing or empty")
    run_dir = Path(run_dir)
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    augment = augment or AugmentSpec(crop=cfg.resolution, resize_to=max(cfg.resolution, round(cfg.resolution * 143 / 128)))
    with deterministic_mode(cfg.deterministic):
        trainer = trainer or CerfGANTrainer(cfg, registry)
        seq = np.random.SeedSequence(cfg.seed)
        data_rng, pair_rng = (np.random.default_rng(s) for s in seq.spawn(2))
        sampler = DomainSampler(datasets, augment, cfg.batch_size, data_rng)
        ipe = cfg.iterations_per_epoch or iterations_per_epoch(datasets, cfg.batch_size)
        total_epochs = cfg.epochs(registry.N)
        log_path = run_dir / "metrics.csv"
        checkpoints: list[Path] = []
        with open(log_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(LOG_COLUMNS)
            done = False
            for epoch in range(total_epochs):
                trainer.epoch = epoch
                lr = lr_schedule(epoch, total_epochs, cfg.base_lr)
                trainer.set_lr(lr)
                for _ in range(ipe):
                    i, k = sample_domain_pair(registry, pair_rng)
                    x_src = sampler.batch(k)
                    report = LossReport()
                    for _ in range(cfg.critic_steps()):
                        report = report.merge(trainer.mcd_step(sampler.batch(i), x_src, i, k))
                    report = report.merge(trainer.decoder_step(x_src, i, k))
                    trainer.step += 1
                    writer.writerow([trainer.step, epoch, i, k, _fmt(report.mcd_loss), _fmt(report.decoder_adv),
                                     _fmt(report.reconstruction), _fmt(report.total_decoder), _fmt(lr)])
                    if not report.finite():
                        fh.flush()
                        ckpt = trainer.save(run_dir / "checkpoints" / f"diverged_step{trainer.step:07d}")
                        raise TrainingDiverged(f"non-finite loss at step {trainer.step}: {report}", ckpt)
                    if max_steps is not None and trainer.step >= max_steps:
                        done = True
                        break
                last = done or epoch == total_epochs - 1
                if (epoch + 1) % cfg.checkpoint_every == 0 or last:
                    checkpoints.append(trainer.save(run_dir / "checkpoints" / f"step{trainer.step:07d}"))
                if cfg.sample_every and ((epoch + 1) % cfg.sample_every == 0 or last):
                    trainer.sample(datasets, run_dir / "samples" / f"step{trainer.step:07d}.png")
                if done:
                    break
    return TrainResult(run_dir, log_path, checkpoints, trainer)
