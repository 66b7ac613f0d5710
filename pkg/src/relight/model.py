"""Encoder / feature-concatenation / decoder network.

The network is U-shaped: a convolutional down-sampling encoder whose
bottleneck is global-average-pooled and projected to a fixed-length latent
vector, a fully-connected concatenation stage that maps a (content,
luminance) latent back to bottleneck channels and broadcasts it over the
bottleneck grid, and an up-sampling decoder fed by the encoder's skip
activations.

The latent vector is partitioned into a content span (first entries) and a
luminance span (last entries). Enhancement keeps the content span and all
skip activations from the low-light image and takes only the luminance span
from the reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn

from .errors import ConfigurationError, DimensionError


@dataclass(frozen=True)
class ArchSpec:
    """Shape of the network; all dimensions are fixed per model."""

    depth: int = 4
    base_channels: int = 32
    latent_dim: int = 256
    luminance_dim: int = 32

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigurationError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 1:
            raise ConfigurationError(f"base_channels must be >= 1, got {self.base_channels}")
        if not 0 < self.luminance_dim < self.latent_dim:
            raise ConfigurationError(
                f"need 0 < luminance_dim < latent_dim, got {self.luminance_dim} / {self.latent_dim}"
            )

    @property
    def content_dim(self) -> int:
        return self.latent_dim - self.luminance_dim

    @property
    def divisor(self) -> int:
        return 2**self.depth

    @property
    def stage_channels(self) -> list[int]:
        return [self.base_channels * 2**d for d in range(self.depth)]

    @property
    def bottleneck_channels(self) -> int:
        return self.stage_channels[-1]

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "base_channels": self.base_channels,
            "latent_dim": self.latent_dim,
            "luminance_dim": self.luminance_dim,
        }

    @staticmethod
    def from_dict(d: dict) -> "ArchSpec":
        return ArchSpec(
            depth=int(d["depth"]),
            base_channels=int(d["base_channels"]),
            latent_dim=int(d["latent_dim"]),
            luminance_dim=int(d["luminance_dim"]),
        )


@dataclass
class SkipStack:
    """Per-stage encoder activations, finest first, as (B, C, H, W) tensors."""

    maps: list[torch.Tensor]


@dataclass
class ModelParams:
    """All learnable weights plus the architecture they belong to."""

    arch: ArchSpec
    net: "EnhanceNet"
    step: int = 0

    def state_arrays(self) -> dict[str, torch.Tensor]:
        return {name: p.detach() for name, p in self.net.named_parameters()}

    def checksum(self) -> float:
        return sum(p.detach().double().abs().sum().item() for p in self.net.parameters())


LEAKY_SLOPE = 0.1


class ConvBlock(nn.Module):
    """Two 3x3 convolutions, each followed by a leaky rectifier.

    The leak keeps units responsive on very dark inputs, where plain ReLU
    stacks are prone to dying into constant activations.
    """

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)

    def forward(self, x):
        x = torch.nn.functional.leaky_relu(self.conv1(x), LEAKY_SLOPE)
        return torch.nn.functional.leaky_relu(self.conv2(x), LEAKY_SLOPE)


class EnhanceNet(nn.Module):
    """The U-shaped encoder / concat-FC / decoder network."""

    def __init__(self, arch: ArchSpec):
        super().__init__()
        self.arch = arch
        chans = arch.stage_channels

        enc = []
        c_prev = 3
        for c in chans:
            enc.append(ConvBlock(c_prev, c))
            c_prev = c
        self.enc_blocks = nn.ModuleList(enc)
        self.bottleneck = ConvBlock(chans[-1], arch.bottleneck_channels)
        self.latent_proj = nn.Linear(arch.bottleneck_channels, arch.latent_dim)
        # the feature concatenation module's FC: latent back to bottleneck channels
        self.concat_fc = nn.Linear(arch.latent_dim, arch.bottleneck_channels)

        ups, dec = [], []
        c_prev = arch.bottleneck_channels
        for c in reversed(chans):
            ups.append(nn.Conv2d(c_prev, c, 3, padding=1))
            dec.append(ConvBlock(2 * c, c))
            c_prev = c
        self.up_convs = nn.ModuleList(ups)
        self.dec_blocks = nn.ModuleList(dec)
        self.out_conv = nn.Conv2d(chans[0], 3, 3, padding=1)

    def encode_nchw(self, x: torch.Tensor) -> tuple[torch.Tensor, list[torch.Tensor], tuple]:
        skips = []
        for block in self.enc_blocks:
            x = block(x)
            skips.append(x)
            x = torch.max_pool2d(x, 2)
        x = self.bottleneck(x)
        latent = self.latent_proj(x.mean(dim=(2, 3)))
        return latent, skips, (x.shape[2], x.shape[3])

    def expand_nchw(self, f: torch.Tensor, hw: tuple[int, int]) -> torch.Tensor:
        vec = self.concat_fc(f)
        return vec[:, :, None, None].expand(-1, -1, hw[0], hw[1])

    def decode_nchw(self, x: torch.Tensor, skips: list[torch.Tensor]) -> torch.Tensor:
        for i, (up, block) in enumerate(zip(self.up_convs, self.dec_blocks)):
            x = torch.nn.functional.interpolate(x, scale_factor=2, mode="nearest")
            x = up(x)
            skip = skips[len(skips) - 1 - i]
            if x.shape[2:] != skip.shape[2:]:
                raise DimensionError(
                    f"skip map {tuple(skip.shape)} inconsistent with decoder state {tuple(x.shape)}"
                )
            x = block(torch.cat([x, skip], dim=1))
        return torch.sigmoid(self.out_conv(x))


LATENT_INIT_STD = 0.2  # keeps the feature losses mild at the start of training
OUT_PREACT_INIT_STD = 1.0  # output sigmoid starts in its responsive range


def init_params(arch: ArchSpec, seed: int) -> ModelParams:
    """Build a model with deterministic, variance-calibrated weights.

    Weights start fan-in-scaled uniform, then each layer is rescaled so a
    seeded random probe batch produces roughly unit-variance activations
    end to end (layer-sequential calibration). Without this, the dark-image
    encoder stack attenuates signals severely and the decoder has to learn
    hundred-fold amplification, which rails the output sigmoid early in
    training. Equal (arch, seed) pairs produce bit-identical parameters
    regardless of global RNG state.
    """
    net = EnhanceNet(arch)
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for _, module in sorted(net.named_modules(), key=lambda kv: kv[0]):
            if isinstance(module, nn.Conv2d):
                fan_in = module.in_channels * module.kernel_size[0] * module.kernel_size[1]
            elif isinstance(module, nn.Linear):
                fan_in = module.in_features
            else:
                continue
            bound = 1.0 / math.sqrt(fan_in)
            module.weight.uniform_(-bound, bound, generator=gen)
            if module.bias is not None:
                module.bias.uniform_(-bound, bound, generator=gen)
        _calibrate_scales(net, arch, gen)
    return ModelParams(arch=arch, net=net, step=0)


def _rescale_to_std(conv: nn.Module, out: torch.Tensor, target: float) -> torch.Tensor:
    gain = target / max(out.std().item(), 1e-8)
    conv.weight.mul_(gain)
    if conv.bias is not None:
        conv.bias.mul_(gain)
    return out * gain


def _calibrate_scales(net: EnhanceNet, arch: ArchSpec, gen: torch.Generator) -> None:
    """One pass of layer-sequential variance calibration on probe images."""
    probe = torch.rand(2, 3, 4 * arch.divisor, 4 * arch.divisor, generator=gen)

    def through_block(block: ConvBlock, x: torch.Tensor, target: float) -> torch.Tensor:
        h = torch.nn.functional.leaky_relu(block.conv1(x), LEAKY_SLOPE)
        h = _rescale_to_std(block.conv1, h, target)
        h = torch.nn.functional.leaky_relu(block.conv2(h), LEAKY_SLOPE)
        return _rescale_to_std(block.conv2, h, target)

    x = probe
    skips = []
    for block in net.enc_blocks:
        x = through_block(block, x, 1.0)
        skips.append(x)
        x = torch.max_pool2d(x, 2)
    x = through_block(net.bottleneck, x, 1.0)

    latent = net.latent_proj(x.mean(dim=(2, 3)))
    latent = _rescale_to_std(net.latent_proj, latent, LATENT_INIT_STD)

    fmap = net.concat_fc(latent)
    fmap = _rescale_to_std(net.concat_fc, fmap, 1.0)
    d = fmap[:, :, None, None].expand(-1, -1, x.shape[2], x.shape[3])
    for i, (up, block) in enumerate(zip(net.up_convs, net.dec_blocks)):
        d = torch.nn.functional.interpolate(d, scale_factor=2, mode="nearest")
        d = up(d)
        d = _rescale_to_std(up, d, 1.0)
        d = through_block(block, torch.cat([d, skips[len(skips) - 1 - i]], dim=1), 1.0)
    z = net.out_conv(d)
    _rescale_to_std(net.out_conv, z, OUT_PREACT_INIT_STD)


def _to_nchw(img: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if img.ndim == 3:
        return img.permute(2, 0, 1).unsqueeze(0), True
    if img.ndim == 4:
        return img.permute(0, 3, 1, 2), False
    raise DimensionError(f"expected (H, W, 3) or (B, H, W, 3), got {tuple(img.shape)}")


def encode(img: torch.Tensor, params: ModelParams) -> tuple[torch.Tensor, SkipStack]:
    """Encode an image (sides must divide 2^depth) into (latent, skips).

    For a single (H, W, 3) image the latent has shape (latent_dim,); for a
    (B, H, W, 3) batch it has shape (B, latent_dim).
    """
    x, single = _to_nchw(img)
    d = params.arch.divisor
    if x.shape[2] % d or x.shape[3] % d:
        raise DimensionError(
            f"input sides {x.shape[2]}x{x.shape[3]} not divisible by 2^depth={d}; pad first"
        )
    latent, skips, _ = params.net.encode_nchw(x)
    if single:
        latent = latent.squeeze(0)
    return latent, SkipStack(maps=skips)


def split(f: torch.Tensor, arch: ArchSpec) -> tuple[torch.Tensor, torch.Tensor]:
    """Partition a latent into its content span and luminance span (views)."""
    if f.shape[-1] != arch.latent_dim:
        raise DimensionError(f"latent length {f.shape[-1]} != latent_dim {arch.latent_dim}")
    return f[..., : arch.content_dim], f[..., arch.content_dim :]


def concat_features(c: torch.Tensor, l: torch.Tensor, arch: ArchSpec) -> torch.Tensor:
    """Join a content span and a luminance span back into one latent."""
    if c.shape[-1] != arch.content_dim or l.shape[-1] != arch.luminance_dim:
        raise DimensionError(
            f"span lengths ({c.shape[-1]}, {l.shape[-1]}) do not match arch "
            f"({arch.content_dim}, {arch.luminance_dim})"
        )
    return torch.cat([c, l], dim=-1)


def expand(f: torch.Tensor, bottleneck_shape: tuple[int, int, int], params: ModelParams) -> torch.Tensor:
    """FC-project a latent to bottleneck channels and tile it over (h, w).

    bottleneck_shape is (h, w, channels) from the low-light image's encoder
    pass; every spatial position of the result carries the same vector.
    """
    h, w, ch = bottleneck_shape
    if ch != params.arch.bottleneck_channels:
        raise DimensionError(
            f"bottleneck channels {ch} != arch bottleneck {params.arch.bottleneck_channels}"
        )
    single = f.ndim == 1
    fb = f.unsqueeze(0) if single else f
    out = params.net.expand_nchw(fb, (h, w))
    return out.squeeze(0) if single else out


def decode(feature_map: torch.Tensor, skips: SkipStack, params: ModelParams) -> torch.Tensor:
    """Decode a bottleneck-shaped map with skip connections into an image."""
    single = feature_map.ndim == 3
    x = feature_map.unsqueeze(0) if single else feature_map
    maps = [m if m.ndim == 4 else m.unsqueeze(0) for m in skips.maps]
    if len(maps) != params.arch.depth:
        raise DimensionError(f"expected {params.arch.depth} skip maps, got {len(maps)}")
    out = params.net.decode_nchw(x, maps)
    out = out.permute(0, 2, 3, 1)
    return out.squeeze(0) if single else out


def bottleneck_shape_for(skips: SkipStack, arch: ArchSpec) -> tuple[int, int, int]:
    """Bottleneck grid implied by a skip stack: coarsest side halved again."""
    last = skips.maps[-1]
    return last.shape[-2] // 2, last.shape[-1] // 2, arch.bottleneck_channels


def pad_to_divisible(img: torch.Tensor, divisor: int) -> tuple[torch.Tensor, tuple[int, int]]:
    """Reflect-pad bottom/right so both sides divide `divisor`.

    Returns the padded image and the original (H, W) for cropping back.
    Images smaller than the divisor fall back to replicate padding
    (reflect needs pad < side).
    """
    x, single = _to_nchw(img)
    h, w = x.shape[2], x.shape[3]
    ph = (divisor - h % divisor) % divisor
    pw = (divisor - w % divisor) % divisor
    if ph or pw:
        mode = "reflect" if ph < h and pw < w else "replicate"
        x = torch.nn.functional.pad(x, (0, pw, 0, ph), mode=mode)
    out = x.permute(0, 2, 3, 1)
    return (out.squeeze(0) if single else out), (h, w)


def enhance(low: torch.Tensor, ref: torch.Tensor, params: ModelParams) -> torch.Tensor:
    """Relight `low` using the reference's luminance component.

    Content span, skip activations and the bottleneck grid all come from
    `low`; only the luminance span comes from `ref`. Inputs of any size are
    reflect-padded to divisibility and the output is cropped back to `low`'s
    original size.
    """
    d = params.arch.divisor
    low_p, (h, w) = pad_to_divisible(low, d)
    ref_p, _ = pad_to_divisible(ref, d)
    f_low, skips = encode(low_p, params)
    f_ref, _ = encode(ref_p, params)
    c_low, _ = split(f_low, params.arch)
    _, l_ref = split(f_ref, params.arch)
    merged = concat_features(c_low, l_ref, params.arch)
    fmap = expand(merged, bottleneck_shape_for(skips, params.arch), params)
    out = decode(fmap, skips, params)
    return out[..., :h, :w, :]
