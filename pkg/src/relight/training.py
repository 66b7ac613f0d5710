"""End-to-end optimization loop: Adam on the full objective, with
deterministic resume and JSON-lines loss logging.

All randomness (epoch shuffles, crop windows, flips, patch swaps) is drawn
from seed sequences keyed by (seed, epoch) or (seed, step), so a run is a
pure function of its config and any checkpoint restart reproduces the
uninterrupted trajectory exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import checkpoint, data, losses, model
from .errors import ConfigurationError

log = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    data_root: str = ""
    out_dir: str = "runs/default"
    learning_rate: float = 1e-4
    batch_size: int = 8
    epochs: int = 1000
    lambda_f: float = 2.0
    alpha_margin: float = 0.08
    seed: int = 0
    crop: int | None = None
    checkpoint_every: int = 500
    log_path: str | None = None
    train_count: int = data.DEFAULT_TRAIN_COUNT
    swap_prob: float = 0.5
    swap_size: int = data.PATCH_SWAP_SIZE
    clip_grad_norm: float | None = None
    arch: model.ArchSpec = field(default_factory=model.ArchSpec)

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")

    def loss_config(self) -> losses.LossConfig:
        return losses.LossConfig(lambda_f=self.lambda_f, alpha_margin=self.alpha_margin)

    def resolved_log_path(self) -> Path:
        return Path(self.log_path) if self.log_path else Path(self.out_dir) / "train_log.jsonl"


@dataclass
class TrainState:
    params: model.ModelParams
    optimizer: torch.optim.Adam
    step: int = 0
    epoch: int = 0
    seed: int = 0


def init_state(cfg: TrainConfig) -> TrainState:
    params = model.init_params(cfg.arch, cfg.seed)
    opt = torch.optim.Adam(
        params.net.parameters(), lr=cfg.learning_rate, betas=ADAM_BETAS, eps=ADAM_EPS
    )
    return TrainState(params=params, optimizer=opt, step=0, epoch=0, seed=cfg.seed)


def augment_batch(batch: list[data.ImagePair], cfg: TrainConfig, step: int) -> list[data.ImagePair]:
    """Flip + stochastic patch swap, streamed from (seed, step)."""
    rng = np.random.default_rng([cfg.seed, 1, step])
    out = []
    for pair in batch:
        pair = data.augment_flip(pair, rng)
        if rng.random() < cfg.swap_prob:
            pair = data.augment_patch_swap(pair, rng, size=cfg.swap_size)
        out.append(pair)
    return out


def train_step(
    state: TrainState, batch: list[data.ImagePair], cfg: TrainConfig
) -> tuple[TrainState, losses.LossReport]:
    """One forward/backward/Adam update on a batch; returns the loss report.

    Batch sides not divisible by 2^depth are reflect-padded jointly and the
    losses are computed in padded space.
    """
    lows, refs = data.stack_batch(batch)
    lows, _ = model.pad_to_divisible(lows, cfg.arch.divisor)
    refs, _ = model.pad_to_divisible(refs, cfg.arch.divisor)

    total, report = losses.compute_batch_losses(lows, refs, state.params, cfg.loss_config())
    state.optimizer.zero_grad()
    total.backward()
    if cfg.clip_grad_norm is not None:
        torch.nn.utils.clip_grad_norm_(state.params.net.parameters(), cfg.clip_grad_norm)
    state.optimizer.step()
    state.step += 1
    state.params.step = state.step
    return state, report


def train(cfg: TrainConfig, resume: str | None = None) -> Path:
    """Run the full loop; returns the path of the final checkpoint.

    Checkpoints land in cfg.out_dir (ckpt_step<N>.rckpt plus ckpt_final.rckpt)
    and per-step loss reports append to the JSON-lines log.
    """
    cfg.validate()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = cfg.resolved_log_path()
    log_path.parent.mkdir(parents=True, exist_ok=True)

    split = data.load_lol(cfg.data_root, train_count=cfg.train_count)
    if not split.train:
        raise ConfigurationError(f"no training pairs under {cfg.data_root}")

    if resume is not None:
        state = load_train_checkpoint(resume, cfg)
    else:
        state = init_state(cfg)

    batches_per_epoch = (len(split.train) + cfg.batch_size - 1) // cfg.batch_size
    total_steps = cfg.epochs * batches_per_epoch

    with open(log_path, "a", encoding="utf-8") as log_fh:
        while state.step < total_steps:
            epoch = state.step // batches_per_epoch
            offset = state.step % batches_per_epoch
            state.epoch = epoch
            batches = data.make_batches(
                split.train, cfg.batch_size, crop=cfg.crop, seed=cfg.seed, epoch=epoch
            )
            for batch in batches[offset:]:
                batch = augment_batch(batch, cfg, state.step)
                state, report = train_step(state, batch, cfg)
                log_fh.write(report.to_json_line(state.step) + "\n")
                log_fh.flush()
                if cfg.checkpoint_every and state.step % cfg.checkpoint_every == 0:
                    save_checkpoint(state, out_dir / f"ckpt_step{state.step}.rckpt")
                if state.step >= total_steps:
                    break

    final = out_dir / "ckpt_final.rckpt"
    save_checkpoint(state, final)
    return final


def save_checkpoint(state: TrainState, path) -> Path:
    """Write parameters, Adam moments, and counters; byte-exact round trip."""
    arrays: dict[str, torch.Tensor] = {}
    named = list(state.params.net.named_parameters())
    for name, p in named:
        arrays[f"model.{name}"] = p.detach()
    opt_state = state.optimizer.state
    for name, p in named:
        st = opt_state.get(p)
        if st is None:
            arrays[f"adam.m.{name}"] = torch.zeros_like(p)
            arrays[f"adam.v.{name}"] = torch.zeros_like(p)
        else:
            arrays[f"adam.m.{name}"] = st["exp_avg"].detach()
            arrays[f"adam.v.{name}"] = st["exp_avg_sq"].detach()
    manifest = {
        "kind": "train",
        "arch": state.params.arch.to_dict(),
        "step": state.step,
        "epoch": state.epoch,
        "seed": state.seed,
        "lr": state.optimizer.param_groups[0]["lr"],
    }
    return checkpoint.write_container(path, manifest, arrays)


def save_model_checkpoint(params: model.ModelParams, path) -> Path:
    """Weights-only checkpoint for inference tools."""
    arrays = {f"model.{n}": p for n, p in params.state_arrays().items()}
    manifest = {"kind": "model", "arch": params.arch.to_dict(), "step": params.step}
    return checkpoint.write_container(path, manifest, arrays)


def load_params(path, expect_arch: model.ArchSpec | None = None) -> model.ModelParams:
    """Load model weights from either checkpoint kind."""
    manifest, arrays = checkpoint.read_container(path)
    arch = model.ArchSpec.from_dict(manifest["arch"])
    if expect_arch is not None and arch != expect_arch:
        raise ConfigurationError(
            f"checkpoint arch {arch} does not match configured arch {expect_arch}"
        )
    params = model.init_params(arch, seed=0)
    with torch.no_grad():
        for name, p in params.net.named_parameters():
            key = f"model.{name}"
            if key not in arrays:
                raise ConfigurationError(f"checkpoint missing parameter array '{key}'")
            if tuple(arrays[key].shape) != tuple(p.shape):
                raise ConfigurationError(
                    f"parameter '{key}' shape {tuple(arrays[key].shape)} != {tuple(p.shape)}"
                )
            p.copy_(arrays[key])
    params.step = int(manifest["step"])
    return params


def load_train_checkpoint(path, cfg: TrainConfig) -> TrainState:
    """Rebuild the full training state (weights, moments, counters)."""
    manifest, arrays = checkpoint.read_container(path)
    if manifest.get("kind") != "train":
        raise ConfigurationError(f"not a training checkpoint: {path}")
    arch = model.ArchSpec.from_dict(manifest["arch"])
    if arch != cfg.arch:
        raise ConfigurationError(
            f"checkpoint arch {arch} does not match configured arch {cfg.arch}"
        )
    params = load_params(path)
    opt = torch.optim.Adam(
        params.net.parameters(), lr=cfg.learning_rate, betas=ADAM_BETAS, eps=ADAM_EPS
    )
    step = int(manifest["step"])
    if step > 0:
        opt_state: dict = {"state": {}, "param_groups": opt.state_dict()["param_groups"]}
        for i, (name, p) in enumerate(params.net.named_parameters()):
            opt_state["state"][i] = {
                "step": torch.tensor(float(step)),
                "exp_avg": arrays[f"adam.m.{name}"].clone(),
                "exp_avg_sq": arrays[f"adam.v.{name}"].clone(),
            }
        opt.load_state_dict(opt_state)
    return TrainState(
        params=params,
        optimizer=opt,
        step=step,
        epoch=int(manifest.get("epoch", 0)),
        seed=int(manifest.get("seed", cfg.seed)),
    )
