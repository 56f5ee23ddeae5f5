"""File-level translation, fully convolutional high-resolution inference and sample grids."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from PIL import Image, ImageDraw, ImageFont
from torch import Tensor

from .checkpoint import Checkpoint
from .data import denormalize, load_rgb, normalize, resize_shorter
from .domains import one_hot
from .networks import translate_images

CELL = 128
CAPTION = 18


def render_grid(sources: Tensor, outputs: Sequence[Sequence[Tensor]], column_names: Sequence[str],
                path: Path | str, cell: int = CELL) -> Path:
    """Rows are sources; columns are the input followed by one output per target."""
    if len(sources) == 0:
        raise ValueError("grid needs at least one source")
    if not column_names:
        raise ValueError("grid needs at least one target")
    rows, cols = len(sources), 1 + len(column_names)
    canvas = Image.new("RGB", (cols * cell, CAPTION + rows * cell), "white")
    draw = ImageDraw.Draw(canvas)
    font = ImageFont.load_default()
    for c, name in enumerate(["input", *column_names]):
        draw.text((c * cell + 3, 3), str(name)[:20], fill="black", font=font)
    for r in range(rows):
        tiles = [sources[r], *outputs[r]]
        for c, t in enumerate(tiles):
            im = Image.fromarray(denormalize(t)).resize((cell, cell), Image.NEAREST)
            canvas.paste(im, (c * cell, CAPTION + r * cell))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    canvas.save(path)
    return path


def fit_to_multiple(img: np.ndarray, multiple: int, size: int | None = None) -> np.ndarray:
    """Center-crop to a multiple of ``multiple``; with ``size`` first resize the shorter side."""
    if size is not None:
        img = resize_shorter(img, size)
    h, w = img.shape[:2]
    nh, nw = (h // multiple) * multiple, (w // multiple) * multiple
    if nh == 0 or nw == 0:
        raise ValueError(f"image {h}x{w} is smaller than {multiple} pixels")
    top, left = (h - nh) // 2, (w - nw) // 2
    return img[top:top + nh, left:left + nw]


def target_label(ckpt: Checkpoint, target: str) -> Tensor:
    return one_hot(ckpt.registry.index(target), ckpt.registry.N)


def translate_highres(ckpt: Checkpoint, image: Tensor, target: str) -> Tensor:
    """One fully convolutional pass over a (3, H, W) or (B, 3, H, W) image.

    The label is zero-padded into the larger bottleneck with its prefix at
    flat index 0, as at training resolution.
    """
    batched = image.dim() == 4
    x = image if batched else image.unsqueeze(0)
    h, w = x.shape[-2:]
    if h % 64 or w % 64:
        raise ValueError(f"high-resolution inference needs sides that are multiples of 64, got {h}x{w}")
    y = translate_images(x, target_label(ckpt, target), ckpt.mcd, ckpt.decoder)
    return y if batched else y[0]


def translate_files(ckpt: Checkpoint | Path | str, inputs: Sequence[Path | str], target: str,
                    out_dir: Path | str, highres: bool = False) -> list[Path]:
    """Translate image files, writing ``<stem>_to_<target>.png`` plus a ``.txt`` sidecar."""
    if not isinstance(ckpt, Checkpoint):
        ckpt = Checkpoint(ckpt)
    label = target_label(ckpt, target)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    multiple = ckpt.net_config.multiple
    written = []
    for p in map(Path, inputs):
        img = load_rgb(p)
        img = fit_to_multiple(img, max(multiple, 64) if highres else multiple,
                              None if highres else ckpt.resolution)
        x = normalize(img).unsqueeze(0)
        y = translate_images(x, label, ckpt.mcd, ckpt.decoder)[0]
        out = out_dir / f"{p.stem}_to_{target}.png"
        Image.fromarray(denormalize(y)).save(out)
        out.with_suffix(".txt").write_text(
            f"checkpoint: {ckpt.id}\nsource: {p}\ntarget: {target}\n"
            f"target_index: {int(label.argmax())}\nsize: {img.shape[1]}x{img.shape[0]}\n")
        written.append(out)
    return written


def sample_grid(ckpt: Checkpoint | Path | str, sources: Sequence[Path | str] | Tensor,
                targets: Sequence[str], path: Path | str) -> Path:
    if not isinstance(ckpt, Checkpoint):
        ckpt = Checkpoint(ckpt)
    if not len(targets):
        raise ValueError("sample grid needs at least one target domain")
    if isinstance(sources, Tensor):
        x = sources
    else:
        x = torch.stack([normalize(fit_to_multiple(load_rgb(s), ckpt.net_config.multiple, ckpt.resolution))
                         for s in sources])
    labels = [target_label(ckpt, t) for t in targets]
    outs = [[translate_images(x[r:r + 1], lab, ckpt.mcd, ckpt.decoder)[0] for lab in labels]
            for r in range(len(x))]
    return render_grid(x, outs, list(targets), path)
