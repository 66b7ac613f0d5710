"""Paired dataset loading, train/test split, and augmentation.

The on-disk layout follows the LoL convention: <root>/low/*.png and
<root>/high/*.png with matching filenames. Pairs are ordered by numeric
filename; the first `train_count` go to training (485 by default, matching
the canonical 485/15 split of the 500-pair dataset).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import imaging
from .errors import DataIntegrityError

log = logging.getLogger(__name__)

DEFAULT_TRAIN_COUNT = 485
PATCH_SWAP_SIZE = 100


@dataclass
class ImagePair:
    low: torch.Tensor
    ref: torch.Tensor
    id: str

    def __post_init__(self):
        if self.low.shape != self.ref.shape:
            raise DataIntegrityError(
                f"pair {self.id}: low {tuple(self.low.shape)} != ref {tuple(self.ref.shape)}"
            )


@dataclass
class DatasetSplit:
    train: list[ImagePair]
    test: list[ImagePair]


def list_pairs(root) -> list[tuple[str, Path, Path]]:
    """Matched (id, low_path, ref_path) triples, ordered by numeric filename."""
    root = Path(root)
    low_dir, high_dir = root / "low", root / "high"
    for d in (low_dir, high_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"dataset directory missing: {d}")
    exts = {".png", ".jpg", ".jpeg"}
    lows = {p.name: p for p in low_dir.iterdir() if p.suffix.lower() in exts}
    highs = {p.name: p for p in high_dir.iterdir() if p.suffix.lower() in exts}
    only_low = sorted(set(lows) - set(highs))
    only_high = sorted(set(highs) - set(lows))
    if only_low or only_high:
        raise DataIntegrityError(
            f"unmatched filenames under {root}: low-only={only_low} high-only={only_high}"
        )

    def order_key(name: str):
        stem = Path(name).stem
        return (0, int(stem), name) if stem.isdigit() else (1, 0, name)

    return [(Path(n).stem, lows[n], highs[n]) for n in sorted(lows, key=order_key)]


def load_lol(root, train_count: int = DEFAULT_TRAIN_COUNT) -> DatasetSplit:
    """Load every pair under `root` and split it train/test by position."""
    pairs = [
        ImagePair(low=imaging.load_image(lp), ref=imaging.load_image(hp), id=pid)
        for pid, lp, hp in list_pairs(root)
    ]
    return DatasetSplit(train=pairs[:train_count], test=pairs[train_count:])


def augment_flip(pair: ImagePair, rng: np.random.Generator) -> ImagePair:
    """With probability 1/2 flip both images along one (uniform) axis."""
    if rng.random() >= 0.5:
        return pair
    axis = 1 if rng.random() < 0.5 else 0  # 1: horizontal (columns), 0: vertical (rows)
    return ImagePair(
        low=torch.flip(pair.low, dims=(axis,)),
        ref=torch.flip(pair.ref, dims=(axis,)),
        id=pair.id,
    )


def augment_patch_swap(
    pair: ImagePair, rng: np.random.Generator, size: int = PATCH_SWAP_SIZE
) -> ImagePair:
    """Replace one size x size patch of the LOW image with the ref's pixels.

    The patch position is uniform over valid top-left corners; the ref is
    never modified. Images smaller than the patch are returned unchanged
    with a warning.
    """
    h, w = pair.low.shape[0], pair.low.shape[1]
    if h < size or w < size:
        warnings.warn(
            f"pair {pair.id}: image {h}x{w} smaller than swap patch {size}; skipping",
            stacklevel=2,
        )
        return pair
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    low = pair.low.clone()
    low[top : top + size, left : left + size, :] = pair.ref[top : top + size, left : left + size, :]
    return ImagePair(low=low, ref=pair.ref, id=pair.id)


def make_batches(
    pairs: list[ImagePair],
    batch_size: int,
    crop: int | None = None,
    seed: int = 0,
    epoch: int = 0,
) -> list[list[ImagePair]]:
    """One epoch of shuffled batches; the final partial batch is kept.

    The shuffle (and the optional random square crop, applied to the same
    window of low and ref) is drawn from (seed, epoch), so a given epoch's
    batch stream is reproducible regardless of who consumes it.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if not pairs:
        raise ValueError("cannot batch an empty split")
    rng = np.random.default_rng([seed, epoch])
    order = rng.permutation(len(pairs))
    batches = []
    for start in range(0, len(pairs), batch_size):
        batch = []
        for idx in order[start : start + batch_size]:
            pair = pairs[int(idx)]
            if crop is not None:
                pair = _random_crop(pair, crop, rng)
            batch.append(pair)
        batches.append(batch)
    return batches


def _random_crop(pair: ImagePair, crop: int, rng: np.random.Generator) -> ImagePair:
    h, w = pair.low.shape[0], pair.low.shape[1]
    if h < crop or w < crop:
        raise ValueError(f"pair {pair.id}: image {h}x{w} smaller than crop {crop}")
    top = int(rng.integers(0, h - crop + 1))
    left = int(rng.integers(0, w - crop + 1))
    return ImagePair(
        low=pair.low[top : top + crop, left : left + crop, :],
        ref=pair.ref[top : top + crop, left : left + crop, :],
        id=pair.id,
    )


def stack_batch(batch: list[ImagePair]) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack a batch of same-size pairs into (lows, refs) tensors."""
    shapes = {tuple(p.low.shape) for p in batch}
    if len(shapes) != 1:
        raise ValueError(f"batch images must share one size, got {sorted(shapes)}; use crop")
    lows = torch.stack([p.low for p in batch])
    refs = torch.stack([p.ref for p in batch])
    return lows, refs
