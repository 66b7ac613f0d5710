import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from relight import imaging, losses, model
from relight.errors import DimensionError, NumericError

from conftest import branch_safe_image, finite_difference_grad, grad_rel_err, random_image


class TestReconstruction:
    def test_identity(self):
        a = random_image(0)
        assert losses.reconstruction_loss(a, a).item() == 0.0

    def test_constant_offset(self):
        a = torch.full((8, 8, 3), 0.2)
        assert losses.reconstruction_loss(a + 0.1, a).item() == pytest.approx(0.1, abs=1e-7)

    def test_maximal(self):
        assert losses.reconstruction_loss(torch.zeros(4, 4, 3), torch.ones(4, 4, 3)).item() == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            losses.reconstruction_loss(torch.zeros(4, 4, 3), torch.zeros(4, 5, 3))


class TestContentFeature:
    def test_identity(self):
        c = torch.randn(16)
        assert losses.content_feature_loss(c, c).item() == 0.0

    def test_3_4_5(self):
        assert losses.content_feature_loss(
            torch.tensor([3.0, 4.0]), torch.tensor([0.0, 0.0])
        ).item() == pytest.approx(5.0)

    def test_unit_diagonal(self):
        val = losses.content_feature_loss(torch.tensor([1.0, 0.0]), torch.tensor([0.0, 1.0]))
        assert val.item() == pytest.approx(math.sqrt(2))


class TestLuminanceTriplet:
    def test_negative_interior_clamps_to_zero(self):
        l_p = torch.zeros(4)
        l_r = torch.zeros(4)
        l_i = torch.full((4,), math.sqrt(0.5 / 4))  # D(l_p, l_i) = 0.5
        assert losses.luminance_feature_loss(l_p, l_r, l_i, 0.08).item() == 0.0

    def test_degenerate_triple_keeps_margin(self):
        l = torch.randn(8)
        assert losses.luminance_feature_loss(l, l, l, 0.08).item() == pytest.approx(0.08)

    def test_arithmetic(self):
        l_p = torch.tensor([0.0, 0.0])
        l_r = torch.tensor([1.0, 0.0])
        l_i = torch.tensor([0.0, 0.0])
        val = losses.luminance_feature_loss(l_p, l_r, l_i, 0.08)
        assert val.item() == pytest.approx(1.08)

    @given(st.integers(0, 10_000))
    @settings(max_examples=100, deadline=None)
    def test_nonnegative_and_zero_when_satisfied(self, seed):
        rng = np.random.default_rng(seed)
        l_p, l_r, l_i = (torch.tensor(rng.normal(size=6)) for _ in range(3))
        alpha = float(rng.uniform(0, 0.5))
        val = losses.luminance_feature_loss(l_p, l_r, l_i, alpha).item()
        assert val >= 0.0
        d_pr = ((l_p - l_r) ** 2).sum().item()
        d_pi = ((l_p - l_i) ** 2).sum().item()
        if d_pr + alpha <= d_pi:
            assert val == 0.0


class TestFeatureLoss:
    def test_sum_of_terms(self):
        rng = np.random.default_rng(1)
        c_p, c_i = (torch.tensor(rng.normal(size=12)) for _ in range(2))
        l_p, l_r, l_i = (torch.tensor(rng.normal(size=4)) for _ in range(3))
        whole = losses.feature_loss(c_p, c_i, l_p, l_r, l_i, 0.08)
        parts = losses.content_feature_loss(c_p, c_i) + losses.luminance_feature_loss(
            l_p, l_r, l_i, 0.08
        )
        assert whole.item() == pytest.approx(parts.item(), rel=1e-12)

    def test_zero_case(self):
        z = torch.zeros(4)
        d = torch.full((4,), 10.0)
        # content term 0; triplet hinge at -D(l_p,l_i) + alpha < 0 -> 0
        assert losses.feature_loss(z, z, z, z, d, 0.08).item() == 0.0


class TestContentConsistency:
    def test_identity_is_zero(self):
        img = random_image(2, 16, 16)
        l_h, l_s = losses.content_consistency_loss(img, img)
        assert l_h.item() == pytest.approx(0.0, abs=1e-6)
        assert l_s.item() == pytest.approx(0.0, abs=1e-6)

    def test_v_only_edit_is_free(self):
        img = branch_safe_image(3, 16, 16)
        hsv = imaging.rgb_to_hsv(img)
        dimmed = imaging.hsv_to_rgb(imaging.ImageHSV(h=hsv.h, s=hsv.s, v=hsv.v * 0.5))
        l_h, l_s = losses.content_consistency_loss(dimmed, img)
        assert l_h.item() == pytest.approx(0.0, abs=1e-5)
        assert l_s.item() == pytest.approx(0.0, abs=1e-5)

    def test_orthogonal_hue_vectors(self):
        # one image has hue mass only where the other has none
        h1 = torch.zeros(2, 2)
        h1[0, 0] = 0.5
        h2 = torch.zeros(2, 2)
        h2[1, 1] = 0.5
        s = torch.full((2, 2), 0.8)
        v = torch.full((2, 2), 0.9)
        a = imaging.hsv_to_rgb(imaging.ImageHSV(h=h1, s=s, v=v))
        b = imaging.hsv_to_rgb(imaging.ImageHSV(h=h2, s=s, v=v))
        l_h, _ = losses.content_consistency_loss(a, b)
        assert l_h.item() == pytest.approx(1.0, abs=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            losses.content_consistency_loss(torch.zeros(4, 4, 3), torch.zeros(4, 5, 3))


class TestTotal:
    def test_all_zero(self):
        z = torch.tensor(0.0)
        assert losses.total_loss(z, z, z, z, z, losses.LossConfig()).item() == 0.0

    def test_paper_weighting(self):
        one = torch.tensor(1.0)
        half = torch.tensor(0.5)
        # L_r=1, L_f = 0.5+0.5 = 1, L_c = 0.5+0.5 = 1, lambda=2 -> 1 + 2 + 1 = 4
        val = losses.total_loss(one, half, half, half, half, losses.LossConfig(lambda_f=2.0))
        assert val.item() == pytest.approx(4.0)

    def test_linear_in_lambda(self):
        rng = np.random.default_rng(4)
        parts = [torch.tensor(float(v)) for v in rng.uniform(0.1, 1.0, size=5)]
        lam_a, lam_b = 1.0, 3.0
        va = losses.total_loss(*parts, losses.LossConfig(lambda_f=lam_a)).item()
        vb = losses.total_loss(*parts, losses.LossConfig(lambda_f=lam_b)).item()
        slope = (vb - va) / (lam_b - lam_a)
        assert slope == pytest.approx((parts[1] + parts[2]).item(), rel=1e-9)

    def test_nonfinite_named(self):
        z = torch.tensor(0.0)
        bad = torch.tensor(float("nan"))
        with pytest.raises(NumericError, match="l_f_l"):
            losses.total_loss(z, z, bad, z, z, losses.LossConfig())

    def test_default_margin_is_paper_value(self):
        assert losses.LossConfig().alpha_margin == 0.08
        assert losses.LossConfig().lambda_f == 2.0


class TestGradients:
    """Each analytic (autograd) gradient must match central finite
    differences away from kinks and branch boundaries."""

    def test_reconstruction_grad(self):
        pred = branch_safe_image(10).requires_grad_(True)
        rng = np.random.default_rng(11)
        # offset every element by >= 0.01 so FD never crosses the L1 kink
        ref = pred.detach() + torch.tensor(
            rng.choice([-1.0, 1.0], size=pred.shape) * rng.uniform(0.01, 0.04, pred.shape)
        )
        losses.reconstruction_loss(pred, ref).backward()
        fd = finite_difference_grad(
            lambda x: losses.reconstruction_loss(x, ref).item(), pred.detach().clone()
        )
        assert grad_rel_err(pred.grad, fd) < 1e-3

    def test_content_feature_grad(self):
        rng = np.random.default_rng(12)
        c_p = torch.tensor(rng.normal(size=16), requires_grad=True)
        c_i = torch.tensor(rng.normal(size=16))
        losses.content_feature_loss(c_p, c_i).backward()
        fd = finite_difference_grad(
            lambda x: losses.content_feature_loss(x, c_i).item(), c_p.detach().clone()
        )
        assert grad_rel_err(c_p.grad, fd) < 1e-3

    def test_luminance_triplet_grad_away_from_kink(self):
        rng = np.random.default_rng(13)
        while True:
            l_p = torch.tensor(rng.normal(size=16))
            l_r = torch.tensor(rng.normal(size=16))
            l_i = torch.tensor(rng.normal(size=16))
            interior = (
                ((l_p - l_r) ** 2).sum() - ((l_p - l_i) ** 2).sum() + 0.08
            ).item()
            if abs(interior) > 1e-2 and interior > 0:  # active hinge, away from the kink
                break
        l_p.requires_grad_(True)
        losses.luminance_feature_loss(l_p, l_r, l_i, 0.08).backward()
        fd = finite_difference_grad(
            lambda x: losses.luminance_feature_loss(x, l_r, l_i, 0.08).item(),
            l_p.detach().clone(),
        )
        assert grad_rel_err(l_p.grad, fd) < 1e-3

    def test_content_consistency_grad(self):
        pred = branch_safe_image(14).requires_grad_(True)
        low = branch_safe_image(15)
        l_h, l_s = losses.content_consistency_loss(pred, low)
        (l_h + l_s).backward()

        def f(x):
            a, b = losses.content_consistency_loss(x, low)
            return (a + b).item()

        fd = finite_difference_grad(f, pred.detach().clone())
        assert grad_rel_err(pred.grad, fd) < 1e-3


class TestCalibrate:
    def test_identical_pairs_give_zero(self, tiny_params):
        img = random_image(20, 32, 32)
        assert losses.calibrate_margin([(img, img)], tiny_params) == 0.0

    def test_single_pair_equals_its_distance(self, tiny_arch, tiny_params):
        low, ref = random_image(21, 32, 32), random_image(22, 32, 32)
        f_l, _ = model.encode(low, tiny_params)
        f_r, _ = model.encode(ref, tiny_params)
        _, ll = model.split(f_l, tiny_arch)
        _, lr = model.split(f_r, tiny_arch)
        want = ((ll - lr) ** 2).sum().item()
        assert losses.calibrate_margin([(low, ref)], tiny_params) == pytest.approx(want, rel=1e-6)

    def test_empty_rejected(self, tiny_params):
        with pytest.raises(ValueError):
            losses.calibrate_margin([], tiny_params)
