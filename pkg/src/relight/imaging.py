"""Image I/O, HSV conversion, quality metrics and vector similarity.

Images are torch tensors of shape (H, W, 3) (or (B, H, W, 3) where noted)
with float values in [0, 1]. All functions here are pure and differentiable
where it matters for the losses: the HSV conversion treats its branch
selection (which channel is the max) as locally constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, DimensionError

PSNR_MSE_FLOOR = 1e-10  # caps PSNR at 100 dB instead of +inf
COSINE_NORM_FLOOR = 1e-8

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class ImageHSV:
    """HSV planes of an image; hue is a fraction of a full turn in [0, 1)."""

    h: torch.Tensor
    s: torch.Tensor
    v: torch.Tensor


def load_image(path) -> torch.Tensor:
    """Read a PNG/JPEG file into a float32 (H, W, 3) tensor in [0, 1]."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"image file not found: {p}")
    try:
        with Image.open(p) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"not a decodable image: {p}") from exc
    return torch.from_numpy(arr)


def save_image(img: torch.Tensor, path) -> None:
    """Write an (H, W, 3) tensor as an 8-bit PNG, clamping to [0, 1]."""
    _check_image(img)
    arr = img.detach().cpu().numpy()
    bytes8 = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(bytes8, mode="RGB").save(Path(path), format="PNG")


def encode_png(img: torch.Tensor) -> bytes:
    """PNG-encode an (H, W, 3) tensor; same quantization as save_image."""
    import io

    _check_image(img)
    arr = img.detach().cpu().numpy()
    bytes8 = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(bytes8, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_image_bytes(data: bytes) -> torch.Tensor:
    """Decode PNG/JPEG bytes into a float32 (H, W, 3) tensor in [0, 1]."""
    import io

    try:
        with Image.open(io.BytesIO(data)) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError("not a decodable image") from exc
    return torch.from_numpy(arr)


HSV_GRAD_FLOOR = 1e-2


def _bounded_grad_div(num: torch.Tensor, den: torch.Tensor, floor: float) -> torch.Tensor:
    """num/den with the exact forward value but backward computed against
    max(den, floor).

    The hue and saturation formulas divide by the chroma delta and by V,
    which vanish on the gray axis; the raw gradient there is unbounded and
    destabilizes any loss that differentiates through the conversion. The
    floor caps the gradient without changing a single output value.
    """
    stabilized = num / torch.clamp(den, min=floor)
    return stabilized + (num / den - stabilized).detach()


def rgb_to_hsv(img: torch.Tensor) -> ImageHSV:
    """Hexcone RGB -> HSV on a (..., H, W, 3) tensor.

    Hue is scaled to [0, 1). Pixels with zero saturation get h = 0 by
    convention so the conversion is deterministic. Values are exact;
    gradients near the gray axis are floored (see _bounded_grad_div).
    """
    if img.shape[-1] != 3:
        raise DimensionError(f"expected trailing channel dim 3, got {tuple(img.shape)}")
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    v, argmax = img.max(dim=-1)
    cmin = img.min(dim=-1).values
    delta = v - cmin

    chroma = delta > 0
    safe_delta = torch.where(chroma, delta, torch.ones_like(delta))
    hr = torch.remainder(_bounded_grad_div(g - b, safe_delta, HSV_GRAD_FLOOR), 6.0)
    hg = _bounded_grad_div(b - r, safe_delta, HSV_GRAD_FLOOR) + 2.0
    hb = _bounded_grad_div(r - g, safe_delta, HSV_GRAD_FLOOR) + 4.0
    h6 = torch.where(argmax == 0, hr, torch.where(argmax == 1, hg, hb))
    h = torch.where(chroma, h6 / 6.0, torch.zeros_like(h6))

    nonzero_v = v > 0
    safe_v = torch.where(nonzero_v, v, torch.ones_like(v))
    s = torch.where(nonzero_v, _bounded_grad_div(delta, safe_v, HSV_GRAD_FLOOR), torch.zeros_like(v))
    return ImageHSV(h=h, s=s, v=v)


def hsv_to_rgb(hsv: ImageHSV) -> torch.Tensor:
    """Inverse hexcone conversion; exact on the gray axis (s = 0)."""
    h, s, v = hsv.h, hsv.s, hsv.v
    if not (h.shape == s.shape == v.shape):
        raise DimensionError("h, s, v planes must share one shape")
    h6 = h * 6.0
    sector = torch.clamp(h6.floor(), 0, 5)
    f = h6 - sector
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))

    sector = sector.long()
    r = _pick(sector, (v, q, p, p, t, v))
    g = _pick(sector, (t, v, v, q, p, p))
    b = _pick(sector, (p, p, t, v, v, q))
    return torch.stack([r, g, b], dim=-1)


def _pick(sector: torch.Tensor, values: tuple) -> torch.Tensor:
    out = values[5]
    for i in range(4, -1, -1):
        out = torch.where(sector == i, values[i], out)
    return out


def psnr(a: torch.Tensor, b: torch.Tensor) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1].

    The MSE is floored at 1e-10, so identical images report the 100 dB cap
    rather than infinity.
    """
    _check_same_shape(a, b)
    mse = torch.mean((a.double() - b.double()) ** 2).item()
    return 10.0 * math.log10(1.0 / max(mse, PSNR_MSE_FLOOR))


def ssim(a: torch.Tensor, b: torch.Tensor) -> float:
    """Mean SSIM with the standard 11x11 Gaussian window, sigma 1.5.

    Computed per channel over valid window positions only, then averaged
    across channels. Constants K1=0.01, K2=0.03 with dynamic range L=1.
    """
    _check_same_shape(a, b)
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise DimensionError(
            f"images must be at least {SSIM_WINDOW}px per side for SSIM, got {tuple(a.shape)}"
        )
    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2

    x = a.double().permute(2, 0, 1).unsqueeze(1)  # (3, 1, H, W)
    y = b.double().permute(2, 0, 1).unsqueeze(1)
    mu_x = torch.nn.functional.conv2d(x, kernel)
    mu_y = torch.nn.functional.conv2d(y, kernel)
    xx = torch.nn.functional.conv2d(x * x, kernel) - mu_x * mu_x
    yy = torch.nn.functional.conv2d(y * y, kernel) - mu_y * mu_y
    xy = torch.nn.functional.conv2d(x * y, kernel) - mu_x * mu_y

    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return (num / den).mean().item()


def _gaussian_kernel(size: int, sigma: float) -> torch.Tensor:
    coords = torch.arange(size, dtype=torch.float64) - (size - 1) / 2.0
    g = torch.exp(-(coords**2) / (2.0 * sigma**2))
    g = g / g.sum()
    k2d = torch.outer(g, g)
    return k2d.reshape(1, 1, size, size)


COSINE_GRAD_FLOOR = 1e-4


def cosine_similarity(u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """u.v / (|u||v|) with the denominator floored at 1e-8, clamped to [-1, 1].

    Works on (..., N) with the dot product over the last dim; returns a
    scalar tensor for 1-d inputs so it stays differentiable inside losses.
    Values use the exact 1e-8 floor; the backward pass divides by a larger
    floor so near-zero vectors cannot emit unbounded gradients.
    """
    if u.shape != v.shape or u.shape[-1] < 1:
        raise DimensionError(f"vector shapes differ: {tuple(u.shape)} vs {tuple(v.shape)}")
    dot = (u * v).sum(dim=-1)
    norms = u.norm(dim=-1) * v.norm(dim=-1)
    value = dot / torch.clamp(norms, min=COSINE_NORM_FLOOR)
    stabilized = dot / torch.clamp(norms, min=COSINE_GRAD_FLOOR)
    return torch.clamp(stabilized + (value - stabilized).detach(), -1.0, 1.0)


def mean_v(img: torch.Tensor) -> float:
    """Mean of the HSV value channel, i.e. mean per-pixel max over RGB."""
    _check_image(img)
    return img.max(dim=-1).values.double().mean().item()


def _check_image(img: torch.Tensor) -> None:
    if img.ndim != 3 or img.shape[-1] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise DimensionError(f"expected an (H, W, 3) image, got {tuple(img.shape)}")


def _check_same_shape(a: torch.Tensor, b: torch.Tensor) -> None:
    _check_image(a)
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
