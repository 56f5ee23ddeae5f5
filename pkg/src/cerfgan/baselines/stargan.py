"""StarGAN (encoder-decoder generator + binary/classifier discriminator) and StarGAN-MCD.

The generator follows the usual StarGAN layout: 7x7 stem, two stride-2
downsamples, residual blocks, two transposed-conv upsamples, 7x7 Tanh
output, instance normalization throughout and the target label broadcast
over the image as extra input channels. ``width`` scales every channel
count; ``width=1`` is the full-size model.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import torch
from torch import Tensor, nn

from .. import losses
from ..checkpoint import write_manifest
from ..domains import DomainRegistry, label_batch
from ..networks import MCD, NetConfig, inference_mode, init_weights, select_adversarial
from ..trainer import AlternatingTrainer, LossReport, TrainConfig

VARIANTS = ("stargan", "stargan-mcd", "cgan-mcd-mnist")


@dataclass(frozen=True)
class BaselineSpec:
    variant: str = "stargan"
    lambda_cls: float = 1.0
    lambda_rec: float = 10.0
    width: float = 0.5
    n_res: int = 6

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown baseline variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if self.lambda_cls < 0 or self.lambda_rec < 0:
            raise ValueError("lambda values must be non-negative")
        if self.width <= 0:
            raise ValueError("width must be positive")


def _c(n: int, width: float) -> int:
    return max(1, int(round(n * width)))


class ResidualBlock(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.main = nn.Sequential(
            nn.Conv2d(dim, dim, 3, 1, 1, bias=False),
            nn.InstanceNorm2d(dim, affine=True),
            nn.ReLU(),
            nn.Conv2d(dim, dim, 3, 1, 1, bias=False),
            nn.InstanceNorm2d(dim, affine=True),
        )

    def forward(self, x: Tensor) -> Tensor:
        return x + self.main(x)


class StarGANGenerator(nn.Module):
    def __init__(self, n_domains: int, width: float = 1.0, n_res: int = 6):
        super().__init__()
        self.n_domains = n_domains
        d = _c(64, width)
        layers = [nn.Conv2d(3 + n_domains, d, 7, 1, 3, bias=False), nn.InstanceNorm2d(d, affine=True), nn.ReLU()]
        for _ in range(2):
            layers += [nn.Conv2d(d, 2 * d, 4, 2, 1, bias=False), nn.InstanceNorm2d(2 * d, affine=True), nn.ReLU()]
            d *= 2
        layers += [ResidualBlock(d) for _ in range(n_res)]
        for _ in range(2):
            layers += [nn.ConvTranspose2d(d, d // 2, 4, 2, 1, bias=False),
                       nn.InstanceNorm2d(d // 2, affine=True), nn.ReLU()]
            d //= 2
        layers += [nn.Conv2d(d, 3, 7, 1, 3, bias=False), nn.Tanh()]
        self.main = nn.Sequential(*layers)
        init_weights(self)

    def forward(self, x: Tensor, labels: Tensor) -> Tensor:
        if labels.dim() == 1:
            labels = labels.unsqueeze(0).expand(x.shape[0], -1)
        c = labels.to(x.dtype)[:, :, None, None].expand(-1, -1, *x.shape[-2:])
        return self.main(torch.cat([x, c], dim=1))


class StarGANDiscriminator(nn.Module):
    """PatchGAN realness map plus an N-way domain classifier."""

    def __init__(self, image_size: int, n_domains: int, width: float = 1.0, n_layers: int = 6):
        super().__init__()
        if image_size % 2**n_layers:
            raise ValueError(f"image_size must be a multiple of {2**n_layers}")
        d = _c(64, width)
        layers = [nn.Conv2d(3, d, 4, 2, 1), nn.LeakyReLU(0.01)]
        for _ in range(1, n_layers):
            layers += [nn.Conv2d(d, 2 * d, 4, 2, 1), nn.LeakyReLU(0.01)]
            d *= 2
        self.main = nn.Sequential(*layers)
        self.src = nn.Conv2d(d, 1, 3, 1, 1, bias=False)
        self.cls = nn.Conv2d(d, n_domains, image_size // 2**n_layers, bias=False)
        init_weights(self)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        h = self.main(x)
        return self.src(h), self.cls(h).flatten(1)


@dataclass
class StarGANModel:
    spec: BaselineSpec
    generator: StarGANGenerator
    discriminator: nn.Module

    @property
    def uses_mcd(self) -> bool:
        return isinstance(self.discriminator, MCD)

    def parameter_counts(self) -> dict[str, int]:
        g = sum(p.numel() for p in self.generator.parameters())
        d = sum(p.numel() for p in self.discriminator.parameters())
        return {"generator": g, "discriminator": d, "total": g + d}


def build_stargan(registry: DomainRegistry, spec: BaselineSpec, image_size: int = 128) -> StarGANModel:
    g = StarGANGenerator(registry.N, spec.width, spec.n_res)
    d = StarGANDiscriminator(image_size, registry.N, spec.width)
    return StarGANModel(spec, g, d)


def build_stargan_mcd(registry: DomainRegistry, spec: BaselineSpec, image_size: int = 128,
                      mcd_width: Optional[float] = None, n_down: Optional[int] = None) -> StarGANModel:
    """StarGAN generator trained against an MCD; no classifier head, no classification term."""
    n_down = n_down if n_down is not None else (6 if image_size % 64 == 0 and image_size >= 128 else 5)
    mcd = MCD(NetConfig(registry.N, width=mcd_width if mcd_width is not None else spec.width, n_down=n_down))
    spec = BaselineSpec("stargan-mcd", 0.0, spec.lambda_rec, spec.width, spec.n_res)
    return StarGANModel(spec, StarGANGenerator(registry.N, spec.width, spec.n_res), mcd)


class StarGANTrainer(AlternatingTrainer):
    """Alternating training for both StarGAN variants, logged like CerfGAN runs."""

    def __init__(self, cfg: TrainConfig, registry: DomainRegistry, spec: BaselineSpec,
                 model: Optional[StarGANModel] = None):
        super().__init__(cfg, registry)
        torch.manual_seed(cfg.seed)
        if model is None:
            if spec.variant == "stargan-mcd":
                model = build_stargan_mcd(registry, spec, cfg.resolution, cfg.width, cfg.n_down)
            else:
                model = build_stargan(registry, spec, cfg.resolution)
        self.model = model
        self.spec = model.spec
        self.d_net, self.g_net = model.discriminator, model.generator
        self.opt_d = self.make_optimizer(self.d_net)
        self.opt_g = self.make_optimizer(self.g_net)
        self.batch_generator = torch.Generator().manual_seed(cfg.seed + 2)
        self._batch: Optional[tuple[Tensor, Tensor, Tensor]] = None

    def _mixed_batch(self, x_real: Tensor, x_src: Tensor, i: int, k: int) -> tuple[Tensor, Tensor, Tensor]:
        """Half source-domain and half target-domain images; targets are a shuffle of their own labels."""
        b = x_src.shape[0]
        half = b // 2
        x = torch.cat([x_src[:b - half], x_real[:half]])
        org = torch.tensor([k] * (b - half) + [i] * half)
        trg = org[torch.randperm(b, generator=self.batch_generator)]
        return x, org, trg

    def d_step(self, x_real: Tensor, x_src: Tensor, i: int, k: int) -> LossReport:
        self.g_net.requires_grad_(False)
        self.d_net.requires_grad_(True)
        self.d_net.train()
        if self.model.uses_mcd:
            c_i = self.labels(i, x_src.shape[0])
            with torch.no_grad():
                fake = self.g_net(x_src, c_i)
            n = x_real.shape[0]
            d = self.d_net(torch.cat([x_real, fake]))
            loss = losses.mcd_loss(select_adversarial(d[:n], self.labels(i, n)),
                                   select_adversarial(d[n:], c_i))
        else:
            # the realness head is unconditional, so each batch mixes domains and per-sample targets
            x, org, trg = self._batch = self._mixed_batch(x_real, x_src, i, k)
            with torch.no_grad():
                fake = self.g_net(x, label_batch(trg, self.registry.N))
            src_real, cls_real = self.d_net(x)
            src_fake, _ = self.d_net(fake)
            loss = -losses.adv_loss(src_real, src_fake)
            if self.spec.lambda_cls:
                loss = loss + self.spec.lambda_cls * losses.classification_loss(cls_real, org)
        self._update(loss, self.opt_d)
        self.g_net.requires_grad_(True)
        return LossReport(mcd_loss=loss.item())

    def g_step(self, x_src: Tensor, i: int, k: int) -> LossReport:
        self.d_net.requires_grad_(False)
        self.g_net.requires_grad_(True)
        extra = {}
        total_extra = 0.0
        if self.model.uses_mcd:
            b = x_src.shape[0]
            c_i, c_k = self.labels(i, b), self.labels(k, b)
            fake = self.g_net(x_src, c_i)
            rec = self.g_net(fake, c_k)
            with inference_mode(self.d_net):
                adv = losses.decoder_adv_loss(select_adversarial(self.d_net(fake), c_i), self.cfg.decoder_adv_mode)
        else:
            if self._batch is None:
                self._batch = (x_src, torch.full((x_src.shape[0],), k), torch.full((x_src.shape[0],), i))
            x_src, org, trg = self._batch
            self._batch = None
            fake = self.g_net(x_src, label_batch(trg, self.registry.N))
            rec = self.g_net(fake, label_batch(org, self.registry.N))
            src_fake, cls_fake = self.d_net(fake)
            adv = losses.decoder_adv_loss(src_fake, self.cfg.decoder_adv_mode)
            if self.spec.lambda_cls:
                cls = losses.classification_loss(cls_fake, trg)
                extra["classification"] = cls.item()
                total_extra = self.spec.lambda_cls * cls
        rec_loss = losses.reconstruction_loss(x_src, rec)
        total = adv + self.spec.lambda_rec * rec_loss + total_extra
        self._update(total, self.opt_g)
        self.d_net.requires_grad_(True)
        return LossReport(decoder_adv=adv.item(), reconstruction=rec_loss.item(), total_decoder=total.item(),
                          extra=extra)

    def translate(self, x: Tensor, target: int) -> Tensor:
        with torch.no_grad(), inference_mode(self.g_net):
            return self.g_net(x, self.labels(target, x.shape[0]))

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        torch.save({"generator": self.g_net.state_dict(), "discriminator": self.d_net.state_dict()},
                   path / "weights.pt")
        write_manifest(path / "manifest.txt", {
            "format_version": 1,
            "model": self.spec.variant,
            "n_domains": self.registry.N,
            "domains": self.registry.names,
            "resolution": self.cfg.resolution,
            "width": self.spec.width,
            "lambda_cls": self.spec.lambda_cls,
            "lambda_rec": self.spec.lambda_rec,
            "step": self.step,
            "epoch": self.epoch,
        })
        return path

    def sample(self, datasets: Sequence, path: Path) -> None:
        pass
