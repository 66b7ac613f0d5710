"""Training objectives: reconstruction, feature, and HSV consistency terms.

Every function accepts a leading batch dimension and reduces it with a mean,
so single-sample and batched calls agree. All terms are differentiable
almost everywhere; the triplet rectifier uses the hinge convention
(subgradient 0 at the kink) and the HSV conversion's branch selection is
treated as locally constant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import torch

from . import imaging, model
from .errors import DimensionError, NumericError


@dataclass(frozen=True)
class LossConfig:
    lambda_f: float = 2.0
    alpha_margin: float = 0.08

    def __post_init__(self):
        if self.lambda_f <= 0:
            raise ValueError(f"lambda_f must be > 0, got {self.lambda_f}")
        if self.alpha_margin < 0:
            raise ValueError(f"alpha_margin must be >= 0, got {self.alpha_margin}")


@dataclass
class LossReport:
    """Per-term scalar losses for one batch."""

    l_r: float
    l_f_c: float
    l_f_l: float
    l_c_h: float
    l_c_s: float
    total: float

    def to_json_line(self, step: int) -> str:
        return json.dumps(
            {
                "step": step,
                "l_r": self.l_r,
                "l_f_c": self.l_f_c,
                "l_f_l": self.l_f_l,
                "l_c_h": self.l_c_h,
                "l_c_s": self.l_c_s,
                "total": self.total,
            }
        )


def reconstruction_loss(pred: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference over all pixels and channels."""
    if pred.shape != ref.shape:
        raise DimensionError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(ref.shape)}")
    return (pred - ref).abs().mean()


NORM_GRAD_EPS = 1e-3


def _stable_euclidean(delta: torch.Tensor) -> torch.Tensor:
    """Exact Euclidean norm whose gradient vanishes smoothly at zero.

    The raw norm has a unit-magnitude, direction-unstable gradient
    arbitrarily close to zero distance, which turns a nearly satisfied
    term into a noise source; the smoothed backward (sqrt(d^2 + eps^2))
    removes that while leaving every value exact.
    """
    exact = delta.norm(dim=-1)
    smooth = torch.sqrt((delta**2).sum(dim=-1) + NORM_GRAD_EPS**2)
    return smooth + (exact - smooth).detach()


def content_feature_loss(c_p: torch.Tensor, c_i: torch.Tensor) -> torch.Tensor:
    """Euclidean distance between content spans, mean over any batch dim."""
    if c_p.shape != c_i.shape:
        raise DimensionError(f"length mismatch: {tuple(c_p.shape)} vs {tuple(c_i.shape)}")
    return _stable_euclidean(c_p - c_i).mean()


def _sq_dist(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return ((a - b) ** 2).sum(dim=-1)


def luminance_feature_loss(
    l_p: torch.Tensor, l_r: torch.Tensor, l_i: torch.Tensor, alpha: float
) -> torch.Tensor:
    """Triplet hinge on squared distances: [D(l_p,l_r) - D(l_p,l_i) + alpha]+.

    Pulls the prediction's luminance span toward the reference's and away
    from the low-light input's.
    """
    if not (l_p.shape == l_r.shape == l_i.shape):
        raise DimensionError(
            f"length mismatch: {tuple(l_p.shape)}, {tuple(l_r.shape)}, {tuple(l_i.shape)}"
        )
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    hinge = torch.relu(_sq_dist(l_p, l_r) - _sq_dist(l_p, l_i) + alpha)
    return hinge.mean()


def feature_loss(
    c_p: torch.Tensor,
    c_i: torch.Tensor,
    l_p: torch.Tensor,
    l_r: torch.Tensor,
    l_i: torch.Tensor,
    alpha: float,
) -> torch.Tensor:
    return content_feature_loss(c_p, c_i) + luminance_feature_loss(l_p, l_r, l_i, alpha)


def content_consistency_loss(
    pred: torch.Tensor, low: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Cosine losses of whole-image H and S channels between pred and low.

    Each image's H (and S) plane is flattened to one vector, so the loss is
    one scalar per channel per image; batches are averaged.
    """
    if pred.shape != low.shape:
        raise DimensionError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(low.shape)}")
    hsv_p = imaging.rgb_to_hsv(pred)
    hsv_i = imaging.rgb_to_hsv(low)
    l_c_h = 1.0 - imaging.cosine_similarity(_flat(hsv_p.h), _flat(hsv_i.h))
    l_c_s = 1.0 - imaging.cosine_similarity(_flat(hsv_p.s), _flat(hsv_i.s))
    return l_c_h.mean(), l_c_s.mean()


def _flat(plane: torch.Tensor) -> torch.Tensor:
    # (H, W) -> (H*W,); (B, H, W) -> (B, H*W)
    return plane.reshape(*plane.shape[:-2], -1)


def total_loss(
    l_r: torch.Tensor,
    l_f_c: torch.Tensor,
    l_f_l: torch.Tensor,
    l_c_h: torch.Tensor,
    l_c_s: torch.Tensor,
    cfg: LossConfig,
) -> torch.Tensor:
    """Weighted sum: reconstruction + lambda * feature + HSV consistency."""
    parts = {"l_r": l_r, "l_f_c": l_f_c, "l_f_l": l_f_l, "l_c_h": l_c_h, "l_c_s": l_c_s}
    for name, value in parts.items():
        if not torch.isfinite(torch.as_tensor(value)).all():
            raise NumericError(f"loss term {name} is not finite: {value}")
    return l_r + cfg.lambda_f * (l_f_c + l_f_l) + l_c_h + l_c_s


def compute_batch_losses(
    low: torch.Tensor,
    ref: torch.Tensor,
    params: model.ModelParams,
    cfg: LossConfig,
) -> tuple[torch.Tensor, LossReport]:
    """Full forward pass and all loss terms for a (B, H, W, 3) batch.

    Encodes low and ref, reconstructs from (c_low, l_ref), re-encodes the
    raw prediction for the feature terms, and returns (total, report).
    Sides must already divide 2^depth (the trainer pads otherwise).
    """
    arch = params.arch
    f_i, skips = model.encode(low, params)
    f_r, _ = model.encode(ref, params)
    c_i, l_i = model.split(f_i, arch)
    _, l_r_span = model.split(f_r, arch)
    merged = model.concat_features(c_i, l_r_span, arch)
    fmap = model.expand(merged, model.bottleneck_shape_for(skips, arch), params)
    pred = model.decode(fmap, skips, params)

    f_p, _ = model.encode(pred, params)
    c_p, l_p = model.split(f_p, arch)

    l_r = reconstruction_loss(pred, ref)
    l_f_c = content_feature_loss(c_p, c_i)
    l_f_l = luminance_feature_loss(l_p, l_r_span, l_i, cfg.alpha_margin)
    l_c_h, l_c_s = content_consistency_loss(pred, low)
    total = total_loss(l_r, l_f_c, l_f_l, l_c_h, l_c_s, cfg)
    report = LossReport(
        l_r=l_r.item(),
        l_f_c=l_f_c.item(),
        l_f_l=l_f_l.item(),
        l_c_h=l_c_h.item(),
        l_c_s=l_c_s.item(),
        total=total.item(),
    )
    return total, report


def calibrate_margin(pairs, params: model.ModelParams) -> float:
    """Mean squared luminance-span distance over (low, ref) pairs.

    This mirrors how the default margin of 0.08 was originally derived from
    20 image pairs; offered as an optional recalibration tool.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("calibrate_margin needs at least one pair")
    dists = []
    with torch.no_grad():
        for low, ref in pairs:
            low_p, _ = model.pad_to_divisible(low, params.arch.divisor)
            ref_p, _ = model.pad_to_divisible(ref, params.arch.divisor)
            f_low, _ = model.encode(low_p, params)
            f_ref, _ = model.encode(ref_p, params)
            _, l_low = model.split(f_low, params.arch)
            _, l_ref = model.split(f_ref, params.arch)
            dists.append(_sq_dist(l_low, l_ref).item())
    return sum(dists) / len(dists)
