"""Checkpoint directories: ``weights.pt`` plus a plain-text ``manifest.txt``.

The manifest is ``key: value`` per line so runs can be diffed and grepped.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Optional

import torch

from .domains import DomainRegistry
from .networks import MCD, Decoder, NetConfig

FORMAT_VERSION = 1
MANIFEST = "manifest.txt"
WEIGHTS = "weights.pt"


class ManifestError(ValueError):
    pass


def write_manifest(path: Path, fields: dict[str, Any]) -> None:
    lines = []
    for key, value in fields.items():
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        elif value is None:
            value = "none"
        text = str(value)
        if "\n" in text:
            raise ManifestError(f"manifest value for {key!r} contains a newline")
        lines.append(f"{key}: {text}")
    path.write_text("\n".join(lines) + "\n")


def read_manifest(path: Path) -> dict[str, str]:
    fields = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise ManifestError(f"{path}:{n}: expected 'key: value'")
        fields[key.strip()] = value.strip()
    return fields


def save_checkpoint(path: Path | str, mcd: MCD, decoder: Decoder, registry: DomainRegistry, *,
                    resolution: int, loss_mode: str, decoder_adv_mode: str, step: int, epoch: int,
                    optimizers: Optional[dict[str, torch.optim.Optimizer]] = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    blob = {"mcd": mcd.state_dict(), "decoder": decoder.state_dict()}
    if optimizers:
        blob["optimizers"] = {k: o.state_dict() for k, o in optimizers.items()}
    torch.save(blob, path / WEIGHTS)
    cfg = mcd.cfg
    write_manifest(path / MANIFEST, {
        "format_version": FORMAT_VERSION,
        "model": "cerfgan",
        "n_domains": registry.N,
        "domains": registry.names,
        "pairs": ";".join(f"{a}-{b}" for a, b in registry.sorted_pairs()),
        "resolution": resolution,
        "width": cfg.width,
        "n_down": cfg.n_down,
        "skip_depth": cfg.depth,
        "loss_mode": loss_mode,
        "decoder_adv_mode": decoder_adv_mode,
        "step": step,
        "epoch": epoch,
    })
    return path


class Checkpoint:
    """A loaded checkpoint; networks are in inference mode."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        if not (self.path / MANIFEST).exists():
            raise ManifestError(f"{self.path} has no {MANIFEST}")
        m = read_manifest(self.path / MANIFEST)
        try:
            version = int(m["format_version"])
            if version != FORMAT_VERSION:
                raise ManifestError(f"unsupported checkpoint format {version}")
            names = tuple(m["domains"].split(","))
            n = int(m["n_domains"])
            pairs = frozenset(frozenset(int(v) for v in p.split("-")) for p in m["pairs"].split(";") if p)
            self.registry = DomainRegistry(names, pairs)
            self.resolution = int(m["resolution"])
            self.loss_mode = m["loss_mode"]
            self.decoder_adv_mode = m["decoder_adv_mode"]
            self.step = int(m["step"])
            self.epoch = int(m["epoch"])
            self.net_config = NetConfig(n, width=float(m["width"]), n_down=int(m["n_down"]),
                                        skip_depth=int(m["skip_depth"]))
        except KeyError as exc:
            raise ManifestError(f"{self.path / MANIFEST} is missing {exc.args[0]!r}") from None
        if n != len(names):
            raise ManifestError(f"manifest declares N={n} but lists {len(names)} domains")
        self.manifest = m
        blob = torch.load(self.path / WEIGHTS, map_location="cpu", weights_only=True)
        self.mcd, self.decoder = MCD(self.net_config), Decoder(self.net_config)
        self.mcd.load_state_dict(blob["mcd"])
        self.decoder.load_state_dict(blob["decoder"])
        self.mcd.eval()
        self.decoder.eval()
        self.optimizer_state = blob.get("optimizers")

    @property
    def id(self) -> str:
        return f"{self.path.resolve()}@step{self.step}"
