import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ALL_VARIANTS, max_rel_error, tiny_critic
from lgan.critics import CriticVariant
from lgan.errors import ShapeError
from lgan.losses import ClipConfig, bce, clip_parameters, critic_loss, generated_wiring, generator_loss
from oracles import central_differences

DIFFERENCE_FORM = [v for v in ALL_VARIANTS if v is not CriticVariant.REGRESSION]


def _zero_output(critic):
    with torch.no_grad():
        critic.output_layer.weight.zero_()
        critic.output_layer.bias.zero_()
    return critic


def test_bce_examples():
    ones = torch.ones(3, 3, dtype=torch.float64)
    assert bce(ones, ones).item() == pytest.approx(-math.log(1 - 1e-7), rel=1e-6)
    assert bce(ones, ones).item() < 2e-7
    half = torch.full((4, 4), 0.5, dtype=torch.float64)
    target = torch.tensor(np.random.default_rng(0).integers(0, 2, (4, 4)), dtype=torch.float64)
    assert bce(half, target).item() == pytest.approx(math.log(2), abs=1e-12)
    assert bce(torch.tensor([0.9], dtype=torch.float64), torch.tensor([1.0], dtype=torch.float64)).item() == pytest.approx(
        -math.log(0.9), abs=1e-12
    )
    with pytest.raises(ShapeError):
        bce(half, torch.zeros(3, 3))


def test_bce_matches_direct_sum():
    rng = np.random.default_rng(1)
    p, t = rng.uniform(0.01, 0.99, 50), rng.integers(0, 2, 50)
    expected = -np.mean(t * np.log(p) + (1 - t) * np.log(1 - p))
    assert bce(torch.tensor(p), torch.tensor(t, dtype=torch.float64)).item() == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("variant", ALL_VARIANTS)
def test_generator_loss_components(variant, tiny_batch):
    x, y = tiny_batch
    critic = tiny_critic(variant)
    gen_mask = torch.rand_like(x).clamp(0.05, 0.95)
    loss = generator_loss(variant, critic, gen_mask, y, x)
    assert set(loss.components) == {"bce", "adversarial"}
    assert loss.value.item() == loss.components["bce"].item() + loss.components["adversarial"].item()


@pytest.mark.parametrize("variant", ALL_VARIANTS)
def test_zero_critic_gives_pure_bce(variant, tiny_batch):
    x, y = tiny_batch
    critic = _zero_output(tiny_critic(variant))
    gen_mask = torch.rand_like(x).clamp(0.05, 0.95)
    loss = generator_loss(variant, critic, gen_mask, y, x)
    assert loss.components["adversarial"].item() == 0.0
    assert loss.value.item() == bce(gen_mask, y).item()


@pytest.mark.parametrize("variant", DIFFERENCE_FORM)
def test_zero_gap(variant, tiny_batch):
    x, y = tiny_batch
    critic = tiny_critic(variant)
    assert critic_loss(variant, critic, y.clone(), y, x).value.item() == 0.0


def test_regression_zero_critic(tiny_batch):
    x, y = tiny_batch
    critic = _zero_output(tiny_critic("regression"))
    assert critic_loss("regression", critic, torch.rand_like(x), y, x).value.item() == 0.0


def test_product_real_side_masks_the_image(tiny_batch):
    x, y = tiny_batch
    critic = tiny_critic("product")
    loss = critic_loss("product", critic, torch.rand_like(x), y, x)
    assert loss.components["real"].item() == critic(y * x).mean().item()


@pytest.mark.parametrize("variant", ALL_VARIANTS)
def test_sign_duality(variant, tiny_batch):
    x, y = tiny_batch
    critic = tiny_critic(variant)
    gen_mask = torch.rand_like(x).clamp(0.05, 0.95)
    g = generator_loss(variant, critic, gen_mask, y, x)
    d = critic_loss(variant, critic, gen_mask, y, x)
    assert g.components["adversarial"].item() == -d.components["generated"].item()
    assert d.components["generated"].item() == critic(*generated_wiring(variant, gen_mask, y, x)).mean().item()


def test_critic_loss_difference_form(tiny_batch):
    x, y = tiny_batch
    critic = tiny_critic("ef")
    gen_mask = torch.rand_like(x)
    d = critic_loss("ef", critic, gen_mask, y, x)
    assert d.value.item() == d.components["generated"].item() - d.components["real"].item()


def test_variant_mismatch_rejected(tiny_batch):
    x, y = tiny_batch
    with pytest.raises(ValueError):
        critic_loss("basic", tiny_critic("ef"), y, y, x)


@pytest.mark.parametrize("variant", ALL_VARIANTS)
def test_generator_loss_gradient(variant, tiny_gen, tiny_batch):
    x, y = tiny_batch
    critic = tiny_critic(variant)
    params = list(tiny_gen.parameters())
    loss = lambda: generator_loss(variant, critic, tiny_gen(x), y, x).value
    analytic = torch.autograd.grad(loss(), params)
    assert max_rel_error(analytic, central_differences(loss, params)) <= 1e-6


@pytest.mark.parametrize("variant", ALL_VARIANTS)
def test_critic_loss_gradient(variant, tiny_gen, tiny_batch):
    x, y = tiny_batch
    critic = tiny_critic(variant)
    with torch.no_grad():
        fake = tiny_gen(x)
    params = list(critic.parameters())
    loss = lambda: critic_loss(variant, critic, fake, y, x).value
    analytic = torch.autograd.grad(loss(), params)
    assert max_rel_error(analytic, central_differences(loss, params)) <= 1e-6


def test_clip_examples():
    critic = tiny_critic("basic", std=0.001)
    with torch.no_grad():
        for p in critic.parameters():
            p.clamp_(-0.01, 0.01)
    before = [p.detach().clone() for p in critic.parameters()]
    clip_parameters(critic, ClipConfig(0.01))
    assert all(torch.equal(a, b) for a, b in zip(before, critic.parameters()))
    with torch.no_grad():
        critic.output_layer.bias.fill_(0.5)
    clip_parameters(critic, 0.01)
    assert critic.output_layer.bias.item() == 0.01
    with pytest.raises(ValueError):
        ClipConfig(0.0)


def test_clip_refuses_generator(tiny_gen):
    with pytest.raises(TypeError):
        clip_parameters(tiny_gen)


@settings(max_examples=30)
@given(st.floats(1e-4, 1.0), st.floats(1e-4, 1.0), st.integers(0, 1000))
def test_clip_idempotent_and_order_independent(c1, c2, seed):
    a = tiny_critic("lf", seed=seed, std=0.5)
    b = tiny_critic("lf", seed=seed, std=0.5)
    clip_parameters(clip_parameters(a, c1), c1)
    once = tiny_critic("lf", seed=seed, std=0.5)
    clip_parameters(once, c1)
    assert all(torch.equal(p, q) for p, q in zip(a.parameters(), once.parameters()))
    clip_parameters(clip_parameters(a, c2), c1)
    clip_parameters(clip_parameters(b, c1), c2)
    assert all(torch.equal(p, q) for p, q in zip(a.parameters(), b.parameters()))
    c = min(c1, c2)
    assert max(float(p.detach().abs().max()) for p in a.parameters()) <= c
