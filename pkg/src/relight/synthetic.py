"""Deterministic synthetic low/normal-light pair generator.

Produces piecewise-smooth scenes (color gradients plus random rectangles
and ellipses) and derives each low-light counterpart by darkening the value
channel with a per-pair gamma curve, then adding a small amount of fixed
sensor-like noise. Pairs are written in the LoL directory layout
(<root>/low, <root>/high) so every tool in this repo can consume them.

This exists because the real LoL dataset cannot be redistributed here;
desk-scale tests and demos run on these fixtures instead.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from . import imaging


def _blur(img: np.ndarray, passes: int = 2) -> np.ndarray:
    """Separable binomial blur ([1,4,6,4,1]/16 per axis), reflect borders."""
    kernel = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
    out = img
    for _ in range(passes):
        for axis in (0, 1):
            padded = np.concatenate(
                [np.flip(out.take(range(2), axis=axis), axis=axis), out,
                 np.flip(out.take(range(-2, 0), axis=axis), axis=axis)],
                axis=axis,
            )
            acc = np.zeros_like(out)
            for k, wgt in enumerate(kernel):
                acc += wgt * padded.take(range(k, k + out.shape[axis]), axis=axis)
            out = acc
    return out


def make_scene(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """A smooth bright scene: background gradient + soft-edged shapes."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    yy /= max(height - 1, 1)
    xx /= max(width - 1, 1)

    img = np.zeros((height, width, 3))
    for c in range(3):
        a, b = rng.uniform(0.25, 0.8, size=2)
        base = rng.uniform(0.15, 0.5)
        img[..., c] = base + a * 0.4 * xx + b * 0.4 * yy

    for _ in range(rng.integers(3, 7)):
        color = rng.uniform(0.2, 0.95, size=3)
        cy, cx = rng.uniform(0.1, 0.9) * height, rng.uniform(0.1, 0.9) * width
        ry = rng.uniform(0.08, 0.3) * height
        rx = rng.uniform(0.08, 0.3) * width
        if rng.random() < 0.5:
            mask = ((yy * (height - 1) - cy) / ry) ** 2 + ((xx * (width - 1) - cx) / rx) ** 2 <= 1.0
        else:
            mask = (np.abs(yy * (height - 1) - cy) <= ry) & (np.abs(xx * (width - 1) - cx) <= rx)
        blend = rng.uniform(0.6, 1.0)
        img[mask] = (1 - blend) * img[mask] + blend * color

    return np.clip(_blur(img), 0.02, 0.98)


def darken(scene: np.ndarray, rng: np.random.Generator, noise_sigma: float = 0.005) -> np.ndarray:
    """Low-light counterpart: V-channel gamma curve + gain + mild noise.

    The noise keeps hue/saturation of the dark image imperfect (so
    HSV-recombination diagnostics stay finite) while staying small enough
    that a brightening model is not noise-limited.
    """
    gain = rng.uniform(0.12, 0.4)
    gamma = rng.uniform(1.1, 1.8)
    t = torch.from_numpy(scene)
    hsv = imaging.rgb_to_hsv(t)
    v_low = gain * hsv.v**gamma
    low = imaging.hsv_to_rgb(imaging.ImageHSV(h=hsv.h, s=hsv.s, v=v_low)).numpy()
    noise = rng.normal(0.0, noise_sigma, size=low.shape)
    return np.clip(low + noise, 0.0, 1.0)


def generate_pairs(
    n: int, height: int = 150, width: int = 180, seed: int = 0
) -> list[tuple[torch.Tensor, torch.Tensor]]:
    """n independent (low, normal) tensor pairs; fully determined by the
    arguments."""
    out = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        scene = make_scene(rng, height, width)
        low = darken(scene, rng)
        out.append(
            (torch.from_numpy(low).float(), torch.from_numpy(scene).float())
        )
    return out


# normal-light brightness levels for the one-to-many head scene
VARIANT_SCALES = (1.0, 0.75, 0.55, 0.4)


def build_pairs(
    n: int,
    height: int = 150,
    width: int = 180,
    seed: int = 0,
    variant_count: int = 4,
) -> list[tuple[torch.Tensor, torch.Tensor]]:
    """Pair list whose head encodes the one-to-many brightness mapping.

    The first `variant_count` pairs share ONE low-light image of one scene;
    their references are V-scaled versions of that scene at the levels in
    VARIANT_SCALES. Identical inputs with different-brightness targets make
    the reference's luminance component the only signal that can
    distinguish them — the one-to-many property reference-guided training
    relies on. The remaining pairs are independent scenes.
    """
    pairs: list[tuple[torch.Tensor, torch.Tensor]] = []
    if variant_count > 0:
        rng = np.random.default_rng([seed, 100])
        scene = make_scene(rng, height, width)
        low = torch.from_numpy(darken(scene, rng)).float()
        scene_t = torch.from_numpy(scene).float()
        for i in range(min(variant_count, n)):
            scale = VARIANT_SCALES[i % len(VARIANT_SCALES)]
            pairs.append((low.clone(), scene_t * scale))
    extra = generate_pairs(max(0, n - len(pairs)), height, width, seed)
    return pairs + extra


def write_dataset(
    root,
    n: int = 12,
    height: int = 150,
    width: int = 180,
    seed: int = 0,
    variant_count: int = 4,
) -> Path:
    """Write n pairs under root in LoL layout; returns the root path."""
    root = Path(root)
    (root / "low").mkdir(parents=True, exist_ok=True)
    (root / "high").mkdir(parents=True, exist_ok=True)
    pairs = build_pairs(n, height, width, seed, variant_count)
    for i, (low, ref) in enumerate(pairs, start=1):
        imaging.save_image(low, root / "low" / f"{i}.png")
        imaging.save_image(ref, root / "high" / f"{i}.png")
    return root
