import json
import math

import pytest
import torch

from relight import data, losses, model, synthetic, training
from relight.errors import ConfigurationError, NumericError

from conftest import random_image

SMALL_ARCH = model.ArchSpec(depth=2, base_channels=4, latent_dim=16, luminance_dim=4)


def small_cfg(root, out, **kw):
    defaults = dict(
        data_root=str(root),
        out_dir=str(out),
        learning_rate=1e-4,
        batch_size=2,
        epochs=2,
        seed=7,
        crop=32,
        checkpoint_every=0,
        train_count=4,
        swap_size=16,
        arch=SMALL_ARCH,
    )
    defaults.update(kw)
    return training.TrainConfig(**defaults)


def make_batch(n=2, h=32, w=32, base_seed=0):
    return [
        data.ImagePair(low=random_image(base_seed + i, h, w), ref=random_image(base_seed + 50 + i, h, w), id=str(i))
        for i in range(n)
    ]


def read_log(path):
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    return {r["step"]: r for r in rows}


class TestAdam:
    def test_single_step_matches_closed_form(self):
        lr, b1, b2, eps = 1e-4, 0.9, 0.999, 1e-8
        w0 = torch.tensor([3.0, -2.0, 0.5], dtype=torch.float64)
        w = w0.clone().requires_grad_(True)
        opt = torch.optim.Adam([w], lr=lr, betas=(b1, b2), eps=eps)
        loss = 0.5 * (w**2).sum()
        loss.backward()
        opt.step()
        g = w0  # gradient of the quadratic at w0
        m_hat = g  # first-step bias correction cancels (1 - b1)
        v_hat = g**2
        expected = w0 - lr * m_hat / (v_hat.sqrt() + eps)
        assert (w.detach() - expected).abs().max().item() < 1e-10


class TestTrainStep:
    def test_determinism(self):
        reports = []
        checksums = []
        for _ in range(2):
            cfg = training.TrainConfig(arch=SMALL_ARCH, learning_rate=1e-4, seed=3)
            state = training.init_state(cfg)
            state, report = training.train_step(state, make_batch(), cfg)
            reports.append(report)
            checksums.append(state.params.checksum())
        assert checksums[0] == checksums[1]
        assert reports[0] == reports[1]

    def test_zero_lr_keeps_params(self):
        cfg = training.TrainConfig(arch=SMALL_ARCH, learning_rate=0.0, seed=3)
        state = training.init_state(cfg)
        before = [p.detach().clone() for p in state.params.net.parameters()]
        state, report = training.train_step(state, make_batch(), cfg)
        for p, b in zip(state.params.net.parameters(), before):
            assert torch.equal(p.detach(), b)
        assert math.isfinite(report.total) and report.total > 0

    def test_loss_decreases_on_fixed_tiny_batch(self):
        cfg = training.TrainConfig(arch=SMALL_ARCH, learning_rate=1e-4, seed=5)
        state = training.init_state(cfg)
        batch = [
            data.ImagePair(low=l[:32, :32], ref=r[:32, :32], id=str(i))
            for i, (l, r) in enumerate(synthetic.generate_pairs(2, height=48, width=48, seed=3))
        ]
        totals = []
        for _ in range(50):
            state, report = training.train_step(state, batch, cfg)
            totals.append(report.total)
        decreases = sum(1 for a, b in zip(totals, totals[1:]) if b < a)
        assert decreases >= 45, f"only {decreases}/49 steps decreased"

    def test_nonfinite_loss_names_term(self):
        cfg = training.TrainConfig(arch=SMALL_ARCH, seed=3)
        state = training.init_state(cfg)
        batch = make_batch(1)
        batch[0].low[0, 0, 0] = float("nan")
        with pytest.raises(NumericError, match="l_"):
            training.train_step(state, batch, cfg)

    def test_step_counter_increments(self):
        cfg = training.TrainConfig(arch=SMALL_ARCH, seed=3)
        state = training.init_state(cfg)
        state, _ = training.train_step(state, make_batch(), cfg)
        state, _ = training.train_step(state, make_batch(), cfg)
        assert state.step == 2 and state.params.step == 2

    def test_gradient_sane_at_init(self):
        cfg = training.TrainConfig(arch=SMALL_ARCH, seed=13)
        state = training.init_state(cfg)
        lows, refs = data.stack_batch(make_batch())
        total, _ = losses.compute_batch_losses(lows, refs, state.params, cfg.loss_config())
        total.backward()
        for name, p in state.params.net.named_parameters():
            norm = p.grad.norm().item()
            assert math.isfinite(norm), f"{name} gradient not finite"
        total_norm = sum(p.grad.norm().item() for p in state.params.net.parameters())
        assert total_norm > 0


class TestCheckpointRoundtrip:
    def _trained_state(self, steps=3):
        cfg = training.TrainConfig(arch=SMALL_ARCH, learning_rate=1e-3, seed=21)
        state = training.init_state(cfg)
        for _ in range(steps):
            state, _ = training.train_step(state, make_batch(), cfg)
        return state, cfg

    def test_roundtrip_exact(self, tmp_path):
        state, cfg = self._trained_state()
        p = tmp_path / "s.rckpt"
        training.save_checkpoint(state, p)
        loaded = training.load_train_checkpoint(p, cfg)
        assert loaded.step == state.step
        for (na, pa), (nb, pb) in zip(
            state.params.net.named_parameters(), loaded.params.net.named_parameters()
        ):
            assert na == nb and torch.equal(pa, pb)
        sa, sb = state.optimizer.state, loaded.optimizer.state
        for (pa, sta), (pb, stb) in zip(sa.items(), sb.items()):
            assert torch.equal(sta["exp_avg"], stb["exp_avg"])
            assert torch.equal(sta["exp_avg_sq"], stb["exp_avg_sq"])

    def test_arch_mismatch_rejected(self, tmp_path):
        state, cfg = self._trained_state(steps=1)
        p = tmp_path / "s.rckpt"
        training.save_checkpoint(state, p)
        other = training.TrainConfig(
            arch=model.ArchSpec(depth=3, base_channels=4, latent_dim=16, luminance_dim=4)
        )
        with pytest.raises(ConfigurationError, match="arch"):
            training.load_train_checkpoint(p, other)

    def test_model_checkpoint_loads_for_inference(self, tmp_path):
        state, _ = self._trained_state(steps=1)
        p = tmp_path / "m.rckpt"
        training.save_model_checkpoint(state.params, p)
        params = training.load_params(p)
        img = random_image(3, 16, 16)
        assert torch.equal(
            model.enhance(img, img, params), model.enhance(img, img, state.params)
        )


class TestTrainLoop:
    def test_step_arithmetic_16_pairs(self, tmp_path):
        root = synthetic.write_dataset(tmp_path / "d16", n=16, height=48, width=48, seed=1)
        cfg = small_cfg(root, tmp_path / "run", epochs=1, batch_size=8, train_count=16, crop=32)
        training.train(cfg)
        log = read_log(cfg.resolved_log_path())
        assert sorted(log) == [1, 2]

    def test_two_runs_byte_identical_logs(self, tmp_path, synth_root):
        cfg_a = small_cfg(synth_root, tmp_path / "a")
        cfg_b = small_cfg(synth_root, tmp_path / "b")
        training.train(cfg_a)
        training.train(cfg_b)
        assert (
            cfg_a.resolved_log_path().read_bytes() == cfg_b.resolved_log_path().read_bytes()
        )

    def test_resume_matches_uninterrupted(self, tmp_path, synth_root):
        # uninterrupted: 10 epochs x 2 batches = 20 steps
        cfg_full = small_cfg(synth_root, tmp_path / "full", epochs=10)
        training.train(cfg_full)
        full_log = read_log(cfg_full.resolved_log_path())
        assert sorted(full_log) == list(range(1, 21))

        # interrupted at step 8, then resumed to 20
        cfg_head = small_cfg(synth_root, tmp_path / "head", epochs=4)
        head_ckpt = training.train(cfg_head)
        cfg_tail = small_cfg(synth_root, tmp_path / "tail", epochs=10)
        training.train(cfg_tail, resume=head_ckpt)
        tail_log = read_log(cfg_tail.resolved_log_path())
        assert min(tail_log) == 9  # continues at N+1
        for step in range(9, 21):
            assert tail_log[step] == full_log[step], f"divergence at step {step}"

    def test_checkpoint_every(self, tmp_path, synth_root):
        cfg = small_cfg(synth_root, tmp_path / "ck", epochs=2, checkpoint_every=2)
        training.train(cfg)
        names = sorted(p.name for p in (tmp_path / "ck").glob("*.rckpt"))
        assert "ckpt_step2.rckpt" in names and "ckpt_final.rckpt" in names

    def test_validate_rejects_bad_config(self, synth_root, tmp_path):
        cfg = small_cfg(synth_root, tmp_path / "x", learning_rate=0.0)
        with pytest.raises(ConfigurationError, match="learning_rate"):
            training.train(cfg)
