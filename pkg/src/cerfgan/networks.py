"""Multi-class discriminator (MCD) and decoder.

The MCD is a stack of strided convolutions whose intermediate feature maps
double as the encoder output; a final strided convolution maps the
bottleneck to one logit per domain. The decoder is a stack of transposed
convolutions that starts from the bottleneck concatenated with the padded
label block and concatenates further encoder maps on the way up.

Channel layout for the default 128x128 configuration (``n_down=6``,
``width=1``)::

    encoder  L0..L6 : 64, 64, 128, 256, 512, 512, 512
    decoder  in     : 1024, 1024, 1024, 512, 256, 64, 64
             out    : 512, 512, 256, 128, 64, 64, 3
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Iterator, Optional

import torch
from torch import Tensor, nn

from .domains import pad_label_to_block

LEAK = 0.2
INIT_STD = 0.02


@dataclass(frozen=True)
class NetConfig:
    n_domains: int
    width: float = 1.0
    n_down: int = 6
    skip_depth: Optional[int] = None  # None means every available skip

    def __post_init__(self):
        if self.n_domains < 1:
            raise ValueError("n_domains must be positive")
        if self.width <= 0:
            raise ValueError("width must be positive")
        if self.n_down < 2:
            raise ValueError("n_down must be at least 2")
        if self.skip_depth is not None and not 1 <= self.skip_depth <= self.max_skip_depth:
            raise ValueError(f"skip_depth must be in [1, {self.max_skip_depth}], got {self.skip_depth}")

    @property
    def max_skip_depth(self) -> int:
        return self.n_down - 1

    @property
    def depth(self) -> int:
        return self.max_skip_depth if self.skip_depth is None else self.skip_depth

    @property
    def multiple(self) -> int:
        return 2**self.n_down

    def channels(self) -> list[int]:
        """Encoder channel count for L0..L{n_down}."""
        base = [64, 64] + [min(64 * 2 ** (level - 1), 512) for level in range(2, self.n_down + 1)]
        return [max(1, int(round(c * self.width))) for c in base]

    def bottleneck_shape(self, height: int, width: int) -> tuple[int, int, int]:
        f = self.multiple
        return (self.channels()[-1], height // f, width // f)


def init_weights(module: nn.Module) -> None:
    """Gaussian(0, 0.02) for conv/linear weights, zero biases.

    Normalization layers keep the framework's default scale (1) and offset (0).
    """
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            nn.init.normal_(m.weight, 0.0, INIT_STD)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.modules.batchnorm._BatchNorm):
            m.reset_parameters()


def check_images(x: Tensor, multiple: int) -> None:
    if x.dim() != 4 or x.shape[1] != 3:
        raise ValueError(f"expected images shaped (B, 3, H, W), got {tuple(x.shape)}")
    h, w = x.shape[-2:]
    if h % multiple or w % multiple:
        raise ValueError(f"image size {h}x{w} is not a multiple of {multiple}")


class MCD(nn.Module):
    """Multi-class discriminator; ``encode`` exposes the feature stack."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        ch = cfg.channels()
        layers = [nn.Sequential(nn.Conv2d(3, ch[0], 7, 1, 3), nn.LeakyReLU(LEAK))]
        for c_in, c_out in zip(ch[:-1], ch[1:]):
            layers.append(nn.Sequential(
                nn.Conv2d(c_in, c_out, 4, 2, 1),
                nn.BatchNorm2d(c_out),
                nn.LeakyReLU(LEAK),
            ))
        self.down = nn.ModuleList(layers)
        self.head = nn.Conv2d(ch[-1], cfg.n_domains, 4, 2, 1)
        init_weights(self)

    def encode(self, x: Tensor) -> list[Tensor]:
        check_images(x, self.cfg.multiple)
        feats = []
        for layer in self.down:
            x = layer(x)
            feats.append(x)
        return feats

    def adversarial(self, bottleneck: Tensor) -> Tensor:
        """Raw logits, (B, N) for a 2x2 bottleneck, else a (B, N, h, w) map."""
        if bottleneck.dim() != 4 or bottleneck.shape[1] != self.head.in_channels:
            raise ValueError(
                f"bottleneck must have {self.head.in_channels} channels, got {tuple(bottleneck.shape)}")
        d = self.head(bottleneck)
        if d.shape[-2:] == (1, 1):
            d = d.flatten(1)
        return d

    def forward(self, x: Tensor) -> Tensor:
        return self.adversarial(self.encode(x)[-1])


class Decoder(nn.Module):
    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        ch = cfg.channels()
        D = cfg.n_down
        ups = []
        for j in range(1, D + 1):
            if j == 1:
                c_in = 2 * ch[D]
            elif j < D:
                c_in = 2 * ch[D - j + 1]
            else:
                c_in = ch[1]
            ups.append(nn.Sequential(
                nn.ConvTranspose2d(c_in, ch[D - j], 4, 2, 1),
                nn.BatchNorm2d(ch[D - j]),
                nn.ReLU(),
            ))
        self.ups = nn.ModuleList(ups)
        self.out = nn.Sequential(nn.ConvTranspose2d(ch[0], 3, 7, 1, 3), nn.Tanh())
        init_weights(self)

    def forward(self, feats: list[Tensor], label_block: Tensor, skip_depth: Optional[int] = None) -> Tensor:
        D = self.cfg.n_down
        depth = self.cfg.depth if skip_depth is None else skip_depth
        if not 1 <= depth <= self.cfg.max_skip_depth:
            raise ValueError(f"skip_depth must be in [1, {self.cfg.max_skip_depth}], got {depth}")
        if len(feats) != D + 1:
            raise ValueError(f"expected {D + 1} feature maps, got {len(feats)}")
        expected = self.cfg.channels()
        for level, (f, c) in enumerate(zip(feats, expected)):
            if f.shape[1] != c:
                raise ValueError(f"feature L{level} has {f.shape[1]} channels, expected {c}")
        if label_block.shape != feats[-1].shape:
            raise ValueError(
                f"label block {tuple(label_block.shape)} does not match bottleneck {tuple(feats[-1].shape)}")
        h = torch.cat([feats[-1], label_block], dim=1)
        for j, up in enumerate(self.ups, start=1):
            h = up(h)
            if j < D - 1:
                skip = feats[D - j]
                if h.shape != skip.shape:
                    raise ValueError(f"decoder layer {j} output {tuple(h.shape)} != skip {tuple(skip.shape)}")
                if j + 1 > depth:
                    skip = torch.zeros_like(skip)
                h = torch.cat([h, skip], dim=1)
        return self.out(h)


def select_adversarial(d: Tensor, labels: Tensor) -> Tensor:
    """Per-sample logit of the labelled domain(s).

    ``labels`` is a (N,) vector shared by the batch or (B, N) per sample.
    Several active entries are averaged. Spatial logit maps keep their
    spatial layout.
    """
    if labels.dim() == 1:
        labels = labels.unsqueeze(0).expand(d.shape[0], -1)
    if d.shape[1] != labels.shape[1]:
        raise ValueError(f"adversarial vector has {d.shape[1]} dims, label has {labels.shape[1]}")
    labels = labels.to(d.dtype)
    weights = labels / labels.sum(dim=1, keepdim=True)
    if d.dim() == 4:
        weights = weights[:, :, None, None]
    return (d * weights).sum(dim=1)


@contextlib.contextmanager
def inference_mode(*modules: nn.Module) -> Iterator[None]:
    """Run ``modules`` in eval mode (running normalization stats), then restore."""
    states = [m.training for m in modules]
    for m in modules:
        m.eval()
    try:
        yield
    finally:
        for m, s in zip(modules, states):
            m.train(s)


@contextlib.contextmanager
def batch_stats_no_update(module: nn.Module) -> Iterator[None]:
    """Normalize with batch statistics but leave running statistics untouched."""
    bns = [m for m in module.modules() if isinstance(m, nn.modules.batchnorm._BatchNorm)]
    saved = [(m.training, m.track_running_stats) for m in bns]
    for m in bns:
        m.train(True)
        m.track_running_stats = False
    try:
        yield
    finally:
        for m, (training, track) in zip(bns, saved):
            m.train(training)
            m.track_running_stats = track


def expand_labels(target: Tensor, batch: int) -> Tensor:
    return target.unsqueeze(0).expand(batch, -1) if target.dim() == 1 else target


def decode(decoder: Decoder, feats: list[Tensor], target: Tensor,
           skip_depth: Optional[int] = None) -> Tensor:
    labels = expand_labels(target, feats[-1].shape[0]).to(feats[-1].dtype)
    block = pad_label_to_block(labels, feats[-1].shape[1:])
    return decoder(feats, block, skip_depth)


def translate(x: Tensor, target: Tensor, mcd: MCD, decoder: Decoder,
              skip_depth: Optional[int] = None) -> Tensor:
    """Encode with the MCD in inference mode, then decode towards ``target``.

    The decoder's mode is left as the caller set it.
    """
    with inference_mode(mcd):
        feats = mcd.encode(x)
    return decode(decoder, feats, target, skip_depth)


def translate_images(x: Tensor, target: Tensor, mcd: MCD, decoder: Decoder,
                     skip_depth: Optional[int] = None) -> Tensor:
    """Inference-time translation, one image at a time.

    The MCD uses its running statistics. The decoder normalizes each image
    with that image's own statistics: training batches hold a single
    translation task, so the decoder's running averages blend the
    statistics of different tasks and match none of them.
    """
    labels = expand_labels(target, x.shape[0])
    outs = []
    with torch.no_grad(), inference_mode(mcd), batch_stats_no_update(decoder):
        for j in range(x.shape[0]):
            outs.append(translate(x[j:j + 1], labels[j:j + 1], mcd, decoder, skip_depth))
    return torch.cat(outs)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def parameter_counts(mcd: MCD, decoder: Decoder) -> dict[str, int]:
    m, d = count_parameters(mcd), count_parameters(decoder)
    return {"mcd": m, "decoder": d, "total": m + d}


def build_cerfgan(cfg: NetConfig, seed: Optional[int] = None) -> tuple[MCD, Decoder]:
    if seed is not None:
        torch.manual_seed(seed)
    return MCD(cfg), Decoder(cfg)
