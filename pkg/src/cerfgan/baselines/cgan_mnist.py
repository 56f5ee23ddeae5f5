"""CGAN-MCD on MNIST: a conditional generator trained against an MCD whose
label-selected logit is the adversarial score.

Also holds the supervised digit classifier used to check conditional
fidelity of generated samples; it never sees generator output while training.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from torch import Tensor, nn

from .. import losses
from ..data import load_mnist
from ..domains import label_batch
from ..networks import init_weights, select_adversarial

N_CLASSES = 10
IMAGE = 28


@dataclass
class CGANConfig:
    data_dir: str = "data/mnist"
    z_dim: int = 100
    hidden: int = 256
    mcd_hidden: int = 512
    epochs: int = 20
    batch_size: int = 4
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    grid_columns: int = 10

    def __post_init__(self):
        if not 1 <= self.epochs <= 20:
            raise ValueError("desk-scale CGAN-MCD runs use 1-20 epochs")
        if self.z_dim <= 0 or self.hidden <= 0 or self.mcd_hidden <= 0 or self.batch_size <= 0 or self.grid_columns <= 0:
            raise ValueError("sizes must be positive")


class CGANGenerator(nn.Module):
    """(noise, one-hot label) -> 28x28 image in [-1, 1]."""

    def __init__(self, z_dim: int = 100, hidden: int = 256):
        super().__init__()
        self.z_dim = z_dim
        self.net = nn.Sequential(
            nn.Linear(z_dim + N_CLASSES, hidden),
            nn.LeakyReLU(0.2),
            nn.Linear(hidden, IMAGE * IMAGE),
            nn.Tanh(),
        )
        init_weights(self)

    def forward(self, z: Tensor, labels: Tensor) -> Tensor:
        return self.net(torch.cat([z, labels.to(z.dtype)], dim=1)).view(-1, 1, IMAGE, IMAGE)


class CGANMCD(nn.Module):
    """Fully connected trunk with one logit per digit class."""

    def __init__(self, hidden: int = 256):
        super().__init__()
        self.trunk = nn.Sequential(
            nn.Flatten(),
            nn.Linear(IMAGE * IMAGE, 2 * hidden),
            nn.LeakyReLU(0.2),
            nn.Linear(2 * hidden, hidden),
            nn.LeakyReLU(0.2),
        )
        self.head = nn.Linear(hidden, N_CLASSES)
        init_weights(self)

    def forward(self, x: Tensor) -> Tensor:
        return self.head(self.trunk(x))


def to_tensor(images: np.ndarray) -> Tensor:
    return torch.from_numpy(images.astype(np.float32) / 127.5 - 1.0).unsqueeze(1)


@dataclass
class CGANResult:
    generator: CGANGenerator
    mcd: CGANMCD
    grid_path: Optional[Path]
    history: list[tuple[float, float]]


def train_cgan_mcd(images: np.ndarray, labels: np.ndarray, cfg: CGANConfig) -> CGANResult:
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    g, m = CGANGenerator(cfg.z_dim, cfg.hidden), CGANMCD(cfg.mcd_hidden)
    opt_g = torch.optim.Adam(g.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    opt_m = torch.optim.Adam(m.parameters(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    x_all, y_all = to_tensor(images), torch.from_numpy(labels.astype(np.int64))
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(x_all))
        for start in range(0, len(order) - cfg.batch_size + 1, cfg.batch_size):
            idx = torch.from_numpy(order[start:start + cfg.batch_size])
            x, c_real = x_all[idx], label_batch(y_all[idx], N_CLASSES)
            b = x.shape[0]
            # fakes request the batch's own labels, so every selected dimension sees both sides
            c_fake = c_real
            z = torch.randn(b, cfg.z_dim)

            g.requires_grad_(False)
            with torch.no_grad():
                fake = g(z, c_fake)
            m_loss = losses.mcd_loss(select_adversarial(m(x), c_real), select_adversarial(m(fake), c_fake))
            opt_m.zero_grad(set_to_none=True)
            m_loss.backward()
            opt_m.step()
            g.requires_grad_(True)

            m.requires_grad_(False)
            g_loss = losses.decoder_adv_loss(select_adversarial(m(g(z, c_fake)), c_fake))
            opt_g.zero_grad(set_to_none=True)
            g_loss.backward()
            opt_g.step()
            m.requires_grad_(True)
            history.append((m_loss.item(), g_loss.item()))
    return CGANResult(g, m, None, history)


@torch.no_grad()
def generate(g: CGANGenerator, classes: Tensor, generator: Optional[torch.Generator] = None) -> Tensor:
    g.eval()
    z = torch.randn(len(classes), g.z_dim, generator=generator)
    return g(z, label_batch(classes, N_CLASSES))


def write_digit_grid(g: CGANGenerator, path: Path | str, columns: int = 10, seed: int = 0) -> Path:
    """Rows are classes 0-9, columns are independent noise draws."""
    gen = torch.Generator().manual_seed(seed)
    classes = torch.arange(N_CLASSES).repeat_interleave(columns)
    imgs = generate(g, classes, gen)
    pix = ((imgs.clamp(-1, 1) + 1) * 127.5).round().to(torch.uint8).squeeze(1).numpy()
    canvas = pix.reshape(N_CLASSES, columns, IMAGE, IMAGE).transpose(0, 2, 1, 3).reshape(
        N_CLASSES * IMAGE, columns * IMAGE)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(canvas, mode="L").save(path)
    return path


def run_cgan_mcd_mnist(cfg: CGANConfig, out_dir: Path | str | None = None) -> CGANResult:
    images, labels = load_mnist(cfg.data_dir, "train")
    result = train_cgan_mcd(images, labels, cfg)
    if out_dir is not None:
        result.grid_path = write_digit_grid(result.generator, Path(out_dir) / "cgan_mcd_grid.png",
                                            cfg.grid_columns, cfg.seed)
    return result


class DigitClassifier(nn.Module):
    def __init__(self):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(1, 32, 3, padding=1), nn.BatchNorm2d(32), nn.ReLU(),
            nn.Conv2d(32, 32, 3, padding=1), nn.BatchNorm2d(32), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(32, 64, 3, padding=1), nn.BatchNorm2d(64), nn.ReLU(),
            nn.Conv2d(64, 64, 3, padding=1), nn.BatchNorm2d(64), nn.ReLU(), nn.MaxPool2d(2),
        )
        self.classifier = nn.Sequential(nn.Flatten(), nn.Dropout(0.3), nn.Linear(64 * 7 * 7, 128),
                                        nn.ReLU(), nn.Dropout(0.3), nn.Linear(128, N_CLASSES))

    def forward(self, x: Tensor) -> Tensor:
        return self.classifier(self.features(x))


def _jitter(x: Tensor, rng: np.random.Generator, max_shift: int = 2, max_deg: float = 10.0) -> Tensor:
    """Random small rotation and translation per sample."""
    b = x.shape[0]
    ang = torch.from_numpy(rng.uniform(-max_deg, max_deg, b)).float() * (np.pi / 180)
    shift = torch.from_numpy(rng.integers(-max_shift, max_shift + 1, (b, 2))).float() * (2 / IMAGE)
    cos, sin = torch.cos(ang), torch.sin(ang)
    theta = torch.stack([torch.stack([cos, -sin, shift[:, 0]], 1), torch.stack([sin, cos, shift[:, 1]], 1)], 1)
    grid = F.affine_grid(theta, list(x.shape), align_corners=False)
    return F.grid_sample(x, grid, padding_mode="border", align_corners=False)


def train_digit_classifier(images: np.ndarray, labels: np.ndarray, epochs: int = 15, batch_size: int = 64,
                           seed: int = 0) -> DigitClassifier:
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    net = DigitClassifier()
    opt = torch.optim.Adam(net.parameters(), lr=1e-3)
    sched = torch.optim.lr_scheduler.OneCycleLR(opt, max_lr=3e-3, total_steps=epochs * (len(images) // batch_size + 1))
    x_all, y_all = to_tensor(images), torch.from_numpy(labels.astype(np.int64))
    for _ in range(epochs):
        net.train()
        order = rng.permutation(len(x_all))
        for start in range(0, len(order), batch_size):
            idx = torch.from_numpy(order[start:start + batch_size])
            if len(idx) < 2:
                continue
            loss = F.cross_entropy(net(_jitter(x_all[idx], rng)), y_all[idx])
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            sched.step()
    net.eval()
    return net


@torch.no_grad()
def classify(net: DigitClassifier, x: Tensor, batch_size: int = 500) -> Tensor:
    net.eval()
    return torch.cat([net(x[s:s + batch_size]).argmax(1) for s in range(0, len(x), batch_size)])


def conditional_fidelity(g: CGANGenerator, classifier: DigitClassifier, n: int = 1000, seed: int = 0) -> float:
    """Fraction of ``n`` generated samples that the classifier assigns to the requested class."""
    gen = torch.Generator().manual_seed(seed)
    classes = torch.arange(n) % N_CLASSES
    preds = classify(classifier, generate(g, classes, gen))
    return (preds == classes).float().mean().item()
