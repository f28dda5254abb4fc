import numpy as np
import pytest
import torch

from lgan.critics import CriticSpec, CriticVariant, build_critic
from lgan.generator import GeneratorSpec, build_generator, init_gaussian

ALL_VARIANTS = list(CriticVariant)

# tiny networks for finite-difference checks: <= 1e3 parameters on 8x8 inputs
TINY_GEN = GeneratorSpec(input_size=8, depth=2, channel_schedule=(2, 4))


def tiny_critic_spec(variant) -> CriticSpec:
    return CriticSpec(variant, input_size=8, channel_schedule=(2, 4), fc_widths=(8, 1))


@pytest.fixture
def tiny_gen():
    return build_generator(TINY_GEN, seed=3).double()


@pytest.fixture
def tiny_batch():
    rng = np.random.default_rng(11)
    x = torch.tensor(rng.random((4, 1, 8, 8)))
    y = torch.tensor((rng.random((4, 1, 8, 8)) > 0.5).astype(np.float64))
    return x, y


def tiny_critic(variant, seed=5, std=0.3):
    # wider weights than the training default keep gradients well above FD noise
    return init_gaussian(build_critic(tiny_critic_spec(variant), seed), seed, std).double()


def n_params(net) -> int:
    return sum(p.numel() for p in net.parameters())


def max_rel_error(analytic, numeric) -> float:
    """Normwise relative error of the full gradient vector.

    Per-entry ratios are dominated by round-off on near-zero entries, and
    conv biases feeding batch norm have an exactly zero gradient, so the
    whole flattened gradient is judged at once: ||a - n|| / max(||a||, ||n||).
    """
    a = torch.cat([t.reshape(-1) for t in analytic])
    n = torch.cat([t.reshape(-1) for t in numeric])
    scale = max(float(a.norm()), float(n.norm()))
    return 0.0 if scale == 0.0 else float((a - n).norm()) / scale
