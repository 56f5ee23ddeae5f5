"""Write MNIST IDX files from the 5000-digit subset bundled with mlxtend.

The full MNIST download is unavailable offline; the bundled subset holds
500 images per class. It is split per class into train (first 400) and
held-out t10k (last 100) files, gzipped, under the output directory.

    python3 scripts/export_mnist_subset.py data/mnist
"""

import argparse
from pathlib import Path

import numpy as np
from mlxtend.data import mnist_data

from cerfgan.data import MNIST_FILES, write_idx


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("out", nargs="?", default="data/mnist")
    p.add_argument("--train-per-class", type=int, default=400)
    args = p.parse_args()

    x, y = mnist_data()
    x = x.reshape(-1, 28, 28).astype(np.uint8)
    y = y.astype(np.uint8)
    train_idx, test_idx = [], []
    for c in range(10):
        idx = np.flatnonzero(y == c)
        train_idx.append(idx[:args.train_per_class])
        test_idx.append(idx[args.train_per_class:])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for split, idx in (("train", np.concatenate(train_idx)), ("test", np.concatenate(test_idx))):
        img_stem, lbl_stem = MNIST_FILES[split]
        write_idx(out / f"{img_stem}.gz", x[idx])
        write_idx(out / f"{lbl_stem}.gz", y[idx])
        print(f"{split}: {len(idx)} images -> {out}")


if __name__ == "__main__":
    main()
