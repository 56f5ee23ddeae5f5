"""Domain registry and label encodings.

Domains are indexed 0..N-1 in the order they are declared. Target labels
are one-hot (or multi-hot for attribute-style data) vectors of length N.
The decoder receives the label as a block shaped like the encoder
bottleneck: the vector is zero-padded to the bottleneck's element count and
reshaped row-major.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import torch
from torch import Tensor

SINGLE = "single"
MULTI = "multi"


@dataclass(frozen=True)
class DomainRegistry:
    names: tuple[str, ...]
    pairs: frozenset[frozenset[int]]

    def __post_init__(self):
        if len(self.names) < 1:
            raise ValueError("registry needs at least one domain")
        seen = set()
        for name in self.names:
            if not isinstance(name, str) or not name.strip():
                raise ValueError(f"invalid domain name {name!r}")
            if any(c in name for c in ",\n\r"):
                raise ValueError(f"domain name {name!r} may not contain commas or newlines")
            if name in seen:
                raise ValueError(f"duplicate domain name {name!r}")
            seen.add(name)
        for pair in self.pairs:
            if len(pair) != 2:
                raise ValueError(f"self-pair or malformed pair {sorted(pair)}")
            for idx in pair:
                if not 0 <= idx < len(self.names):
                    raise ValueError(f"pair {sorted(pair)} references unknown domain index {idx}")

    @property
    def N(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown domain {name!r}; valid domains: {', '.join(self.names)}") from None

    def sorted_pairs(self) -> list[tuple[int, int]]:
        return sorted(tuple(sorted(p)) for p in self.pairs)


def _resolve(ref, names: Sequence[str]) -> int:
    if isinstance(ref, bool):
        raise ValueError(f"invalid domain reference {ref!r}")
    if isinstance(ref, int):
        if not 0 <= ref < len(names):
            raise ValueError(f"pair references unknown domain index {ref}")
        return ref
    if ref not in names:
        raise ValueError(f"pair references unknown domain {ref!r}")
    return list(names).index(ref)


def build_registry(config: Mapping) -> DomainRegistry:
    """Build a registry from ``{"domains": [...], "pairs": [[a, b], ...]}``.

    Pair entries may be indices or domain names. When ``pairs`` is the
    string ``"all"`` every unordered pair of distinct domains is allowed.
    """
    names = list(config.get("domains") or [])
    if len(names) < 2:
        raise ValueError("registry needs at least 2 domains")
    if len(set(names)) != len(names):
        dup = next(n for n in names if names.count(n) > 1)
        raise ValueError(f"duplicate domain name {dup!r}")
    raw_pairs = config.get("pairs")
    if raw_pairs == "all":
        raw_pairs = [(a, b) for a in range(len(names)) for b in range(a + 1, len(names))]
    if not raw_pairs:
        raise ValueError("registry needs at least 1 pair")
    pairs = set()
    for raw in raw_pairs:
        if len(raw) != 2:
            raise ValueError(f"pair {raw!r} must have exactly two entries")
        a, b = (_resolve(r, names) for r in raw)
        if a == b:
            raise ValueError(f"self-pair ({a}, {a}) is not a translation task")
        pairs.add(frozenset((a, b)))
    return DomainRegistry(tuple(names), frozenset(pairs))


def validate_label(values: Tensor, mode: str = SINGLE) -> Tensor:
    """Check a label vector (or batch of them) against the mode's invariant."""
    if values.dim() not in (1, 2):
        raise ValueError(f"label must be 1-d or 2-d, got shape {tuple(values.shape)}")
    rows = values if values.dim() == 2 else values.unsqueeze(0)
    if not bool(((rows == 0) | (rows == 1)).all()):
        raise ValueError("label entries must be 0 or 1")
    hot = rows.sum(dim=1)
    if mode == SINGLE and not bool((hot == 1).all()):
        raise ValueError("single-label vectors need exactly one active entry")
    if mode == MULTI and not bool((hot >= 1).all()):
        raise ValueError("multi-label vectors need at least one active entry")
    if mode not in (SINGLE, MULTI):
        raise ValueError(f"unknown label mode {mode!r}")
    return values


def one_hot(i: int, N: int) -> Tensor:
    if not 0 <= i < N:
        raise IndexError(f"domain index {i} out of range for N={N}")
    v = torch.zeros(N)
    v[i] = 1.0
    return v


def multi_hot(indices: Iterable[int], N: int) -> Tensor:
    v = torch.zeros(N)
    idx = list(indices)
    if not idx:
        raise ValueError("multi-hot label needs at least one index")
    for i in idx:
        if not 0 <= i < N:
            raise IndexError(f"domain index {i} out of range for N={N}")
        v[i] = 1.0
    return v


def label_batch(indices: Sequence[int] | Tensor, N: int) -> Tensor:
    """One-hot rows for a batch of domain indices, shape (B, N)."""
    idx = torch.as_tensor(indices, dtype=torch.long).reshape(-1)
    if idx.numel() and (idx.min() < 0 or idx.max() >= N):
        raise IndexError(f"domain index out of range for N={N}")
    return torch.nn.functional.one_hot(idx, N).float()


def pad_label_to_block(label: Tensor, bottleneck_shape: Sequence[int]) -> Tensor:
    """Zero-pad ``label`` to the bottleneck's element count, reshape row-major.

    ``label`` may be a single vector (N,) giving a (C, H, W) block or a batch
    (B, N) giving (B, C, H, W).
    """
    shape = tuple(int(s) for s in bottleneck_shape)
    if len(shape) != 3:
        raise ValueError(f"bottleneck shape must be (C, H, W), got {shape}")
    size = shape[0] * shape[1] * shape[2]
    batched = label.dim() == 2
    rows = label if batched else label.unsqueeze(0)
    n = rows.shape[1]
    if n > size:
        raise ValueError(f"label length {n} exceeds bottleneck size {size}")
    flat = rows.new_zeros(rows.shape[0], size)
    flat[:, :n] = rows
    block = flat.reshape(rows.shape[0], *shape)
    return block if batched else block[0]
