"""Per-domain image folders, augmentation, toy datasets and MNIST IDX files."""

from __future__ import annotations

import gzip
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from PIL import Image
from torch import Tensor

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")
TOY_KINDS = ("color-inversion", "shape-fill")


@dataclass(frozen=True)
class AugmentSpec:
    crop: int = 128
    resize_to: int = 143
    mirror_prob: float = 0.5

    def __post_init__(self):
        if self.crop <= 0:
            raise ValueError("crop must be positive")
        if self.resize_to < self.crop:
            raise ValueError(f"resize_to ({self.resize_to}) must be >= crop ({self.crop})")
        if not 0.0 <= self.mirror_prob <= 1.0:
            raise ValueError("mirror_prob must be in [0, 1]")


def normalize(img: np.ndarray) -> Tensor:
    """uint8 HxWx3 -> float CxHxW in [-1, 1]."""
    t = torch.from_numpy(np.array(img, dtype=np.uint8, copy=True)).permute(2, 0, 1).float()
    return t / 127.5 - 1.0


def denormalize(t: Tensor) -> np.ndarray:
    """float CxHxW in [-1, 1] -> uint8 HxWx3."""
    v = ((t.detach().float().clamp(-1, 1) + 1.0) * 127.5).round()
    return v.permute(1, 2, 0).to(torch.uint8).cpu().numpy()


def load_rgb(path: Path | str) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def resize_shorter(img: np.ndarray, size: int) -> np.ndarray:
    h, w = img.shape[:2]
    if min(h, w) == size:
        return img
    scale = size / min(h, w)
    new_w, new_h = max(size, round(w * scale)), max(size, round(h * scale))
    im = Image.fromarray(img).resize((new_w, new_h), Image.BICUBIC)
    return np.asarray(im, dtype=np.uint8)


def center_view(img: np.ndarray, size: int) -> Tensor:
    """Resize shorter side to ``size`` and take the central square, no randomness."""
    img = resize_shorter(img, size)
    h, w = img.shape[:2]
    top, left = (h - size) // 2, (w - size) // 2
    return normalize(img[top:top + size, left:left + size])


def augment(img: np.ndarray, spec: AugmentSpec, rng: np.random.Generator) -> Tensor:
    """Resize shorter side, random crop, random horizontal mirror, scale to [-1, 1]."""
    img = resize_shorter(img, spec.resize_to)
    h, w = img.shape[:2]
    if h < spec.crop or w < spec.crop:
        raise ValueError(f"image {h}x{w} is smaller than crop {spec.crop}")
    top = int(rng.integers(0, h - spec.crop + 1))
    left = int(rng.integers(0, w - spec.crop + 1))
    img = img[top:top + spec.crop, left:left + spec.crop]
    if rng.random() < spec.mirror_prob:
        img = img[:, ::-1]
    return normalize(img)


@dataclass
class DomainDataset:
    """Images of one domain, backed by files or by an in-memory uint8 array."""

    domain: int
    files: list[Path] = field(default_factory=list)
    images: Optional[np.ndarray] = None  # (n, H, W, 3) uint8
    cache: bool = True
    _cache: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.images) if self.images is not None else len(self.files)

    def raw(self, idx: int) -> np.ndarray:
        if self.images is not None:
            return self.images[idx]
        if idx in self._cache:
            return self._cache[idx]
        img = load_rgb(self.files[idx])
        if self.cache:
            self._cache[idx] = img
        return img

    def sample(self, idx: int, spec: AugmentSpec, rng: np.random.Generator) -> Tensor:
        return augment(self.raw(idx), spec, rng)


def scan_domain_folder(path: Path | str, domain: int, cache: bool = True) -> DomainDataset:
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"domain folder {path} does not exist")
    candidates = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS and p.is_file())
    if not candidates:
        raise ValueError(f"no images found in {path}")
    files = []
    for p in candidates:
        try:
            with Image.open(p) as im:
                im.verify()
        except Exception as exc:  # PIL raises a zoo of exception types
            log.warning("skipping undecodable image %s: %s", p, exc)
            continue
        files.append(p)
    if not files:
        raise ValueError(f"every image in {path} failed to decode")
    return DomainDataset(domain=domain, files=files, cache=cache)


def load_domains(root: Path | str, names: Sequence[str]) -> list[DomainDataset]:
    root = Path(root)
    missing = [n for n in names if not (root / n).is_dir()]
    if missing:
        raise FileNotFoundError(f"missing dataset folders under {root}: {', '.join(missing)}")
    return [scan_domain_folder(root / n, i) for i, n in enumerate(names)]


def _squares(rng: np.random.Generator, n: int, size: int):
    """Geometry and colors for n images of 1-3 axis-aligned squares."""
    out = []
    for _ in range(n):
        shapes = []
        for _ in range(int(rng.integers(1, 4))):
            side = int(rng.integers(size // 5, size // 2 + 1))
            top = int(rng.integers(0, size - side + 1))
            left = int(rng.integers(0, size - side + 1))
            color = rng.integers(40, 256, size=3).astype(np.uint8)
            shapes.append((top, left, side, color))
        out.append(shapes)
    return out


def make_toy_translation_dataset(kind: str, n: int, rng: np.random.Generator,
                                 size: int = 64) -> tuple[DomainDataset, DomainDataset]:
    """Two domains whose images are paired by index (pairing is for evaluation only).

    ``color-inversion``: A is colored squares on black, B is 255 - A.
    ``shape-fill``: A draws square outlines, B fills the same squares.
    """
    if kind not in TOY_KINDS:
        raise ValueError(f"unknown toy kind {kind!r}; choose from {', '.join(TOY_KINDS)}")
    if n < 16:
        raise ValueError("toy datasets need n >= 16")
    a = np.zeros((n, size, size, 3), dtype=np.uint8)
    b = np.zeros_like(a)
    thick = max(1, size // 32)
    for j, shapes in enumerate(_squares(rng, n, size)):
        for top, left, side, color in shapes:
            if kind == "color-inversion":
                a[j, top:top + side, left:left + side] = color
            else:
                b[j, top:top + side, left:left + side] = color
                a[j, top:top + side, left:left + side] = color
                a[j, top + thick:top + side - thick, left + thick:left + side - thick] = 0
        if kind == "color-inversion":
            b[j] = 255 - a[j]
    return DomainDataset(0, images=a), DomainDataset(1, images=b)


def write_domain_folder(ds: DomainDataset, path: Path | str) -> list[Path]:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    written = []
    for j in range(len(ds)):
        p = path / f"{j:05d}.png"
        Image.fromarray(ds.raw(j)).save(p)
        written.append(p)
    return written


def iterations_per_epoch(datasets: Sequence[DomainDataset], batch_size: int) -> int:
    return math.ceil(max(len(d) for d in datasets) / batch_size)


class DomainSampler:
    """Endless shuffled batches per domain, driven by one seeded generator."""

    def __init__(self, datasets: Sequence[DomainDataset], spec: AugmentSpec, batch_size: int,
                 rng: np.random.Generator):
        self.datasets = list(datasets)
        self.spec = spec
        self.batch_size = batch_size
        self.rng = rng
        self._order = [np.empty(0, dtype=np.int64) for _ in self.datasets]
        self._pos = [0] * len(self.datasets)

    def _next_index(self, domain: int) -> int:
        if self._pos[domain] >= len(self._order[domain]):
            self._order[domain] = self.rng.permutation(len(self.datasets[domain]))
            self._pos[domain] = 0
        idx = int(self._order[domain][self._pos[domain]])
        self._pos[domain] += 1
        return idx

    def batch(self, domain: int) -> Tensor:
        ds = self.datasets[domain]
        return torch.stack([ds.sample(self._next_index(domain), self.spec, self.rng)
                            for _ in range(self.batch_size)])

    def state(self) -> dict:
        return {"rng": self.rng.bit_generator.state, "order": [o.tolist() for o in self._order],
                "pos": list(self._pos)}


# MNIST IDX files: big-endian magic, then one uint32 per dimension, then uint8 data.
IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


def read_idx(path: Path | str) -> np.ndarray:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        data = f.read()
    magic, = struct.unpack(">I", data[:4])
    if magic not in (IDX_IMAGES, IDX_LABELS):
        raise ValueError(f"{path}: bad IDX magic 0x{magic:08x}")
    ndim = magic & 0xFF
    dims = struct.unpack(f">{ndim}I", data[4:4 + 4 * ndim])
    arr = np.frombuffer(data, dtype=np.uint8, offset=4 + 4 * ndim)
    if arr.size != int(np.prod(dims)):
        raise ValueError(f"{path}: expected {int(np.prod(dims))} values, found {arr.size}")
    return arr.reshape(dims)


def write_idx(path: Path | str, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    magic = {3: IDX_IMAGES, 1: IDX_LABELS}.get(arr.ndim)
    if magic is None:
        raise ValueError("IDX writer supports 3-d images or 1-d labels")
    header = struct.pack(">I", magic) + struct.pack(f">{arr.ndim}I", *arr.shape)
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wb") as f:
        f.write(header + arr.tobytes())


MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _find(root: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (root / name).exists():
            return root / name
    raise FileNotFoundError(f"MNIST file {stem}[.gz] not found in {root}")


def load_mnist(root: Path | str, split: str = "train") -> tuple[np.ndarray, np.ndarray]:
    """(images uint8 (n, 28, 28), labels uint8 (n,)) from a directory of IDX files."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"MNIST directory {root} does not exist")
    img_stem, lbl_stem = MNIST_FILES[split]
    images, labels = read_idx(_find(root, img_stem)), read_idx(_find(root, lbl_stem))
    if images.ndim != 3 or labels.ndim != 1 or len(images) != len(labels):
        raise ValueError(f"inconsistent MNIST {split} files in {root}")
    return images, labels
