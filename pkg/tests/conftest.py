import numpy as np
import pytest
import torch

from relight import model, synthetic

torch.set_num_threads(2)


@pytest.fixture(scope="session")
def tiny_arch():
    # full depth (skip sides match the documented 128 -> 16 halving) but few channels
    return model.ArchSpec(depth=4, base_channels=4, latent_dim=16, luminance_dim=4)


@pytest.fixture(scope="session")
def tiny_params(tiny_arch):
    return model.init_params(tiny_arch, seed=11)


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("lolstyle")
    synthetic.write_dataset(root, n=6, height=96, width=112, seed=3)
    return root


def random_image(seed: int, h: int = 32, w: int = 32, dtype=torch.float32) -> torch.Tensor:
    rng = np.random.default_rng(seed)
    return torch.tensor(rng.random((h, w, 3)), dtype=dtype)


def branch_safe_image(seed: int, h: int = 8, w: int = 8) -> torch.Tensor:
    """Random float64 image whose pixels sit away from hue branch boundaries
    (channel ties) and the gray/black degeneracies, so finite differences
    never cross a branch.

    Built directly: per pixel, three channel values separated by gaps of at
    least 0.05, assigned to R/G/B in a random order.
    """
    rng = np.random.default_rng(seed)
    lowest = rng.uniform(0.05, 0.3, size=(h, w))
    mid = lowest + rng.uniform(0.05, 0.3, size=(h, w))
    top = mid + rng.uniform(0.05, 0.3, size=(h, w))
    sorted_vals = np.stack([lowest, mid, top], axis=-1)
    perm = rng.permuted(np.broadcast_to(np.arange(3), (h, w, 3)), axis=-1)
    img = np.ascontiguousarray(np.take_along_axis(sorted_vals, perm, axis=-1))
    return torch.tensor(img)


def finite_difference_grad(fn, x: torch.Tensor, h: float = 1e-4) -> torch.Tensor:
    """Central finite differences of a scalar function, element by element."""
    x = x.contiguous()  # reshape below must alias x, not copy it
    fd = torch.zeros_like(x)
    flat, fdf = x.reshape(-1), fd.reshape(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + h
            up = float(fn(x))
            flat[i] = orig - h
            dn = float(fn(x))
            flat[i] = orig
            fdf[i] = (up - dn) / (2 * h)
    return fd


def grad_rel_err(analytic: torch.Tensor, fd: torch.Tensor) -> float:
    denom = max(analytic.norm().item(), fd.norm().item(), 1e-12)
    return (analytic - fd).norm().item() / denom
