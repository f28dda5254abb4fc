"""Training objectives.

Expectations are batch means. The generator minimises
``bce(G(x), real) - mean D(generated wiring)``; difference-form critics
minimise ``mean D(generated wiring) - mean D(real wiring)``; the regression
critic minimises ``mean D(G(x), real)`` directly. Critic weights are clipped
to ``[-c, c]`` after each update.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .critics import Critic, CriticVariant, wire_inputs
from .errors import ShapeError
from .generator import EPS, Generator

DEFAULT_CLIP = 0.01


@dataclass
class LossValue:
    value: torch.Tensor
    components: dict[str, torch.Tensor] = field(default_factory=dict)

    def item(self) -> float:
        return float(self.value.detach())

    def floats(self) -> dict[str, float]:
        return {k: float(v.detach()) for k, v in self.components.items()}


@dataclass(frozen=True)
class ClipConfig:
    c: float = DEFAULT_CLIP

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"clip bound must be positive, got {self.c}")


def bce(pred: torch.Tensor, target: torch.Tensor) -> LossValue:
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {tuple(pred.shape)} and target {tuple(target.shape)} differ")
    p = pred.clamp(EPS, 1.0 - EPS)
    t = target.to(p.dtype)
    loss = -(t * torch.log(p) + (1.0 - t) * torch.log1p(-p)).mean()
    return LossValue(loss, {"bce": loss})


def generated_wiring(variant, gen_mask, real_mask, image) -> tuple[torch.Tensor, ...]:
    v = CriticVariant.parse(variant)
    if v is CriticVariant.REGRESSION:
        return wire_inputs(v, gen_mask, other_mask=real_mask)
    return wire_inputs(v, gen_mask, image)


def real_wiring(variant, real_mask, image) -> tuple[torch.Tensor, ...]:
    """Real-side bundle; the product critic sees the image masked by the real mask."""
    v = CriticVariant.parse(variant)
    if v is CriticVariant.REGRESSION:
        raise ValueError("the regression critic has no separate real-side input")
    return wire_inputs(v, real_mask.to(image.dtype if image is not None else torch.get_default_dtype()), image)


def _check_critic(variant: CriticVariant, critic: Critic) -> None:
    if critic.spec.variant is not variant:
        raise ValueError(f"critic is a {critic.spec.variant.value} critic, loss asked for {variant.value}")


def generator_loss(variant, critic: Critic, gen_mask, real_mask, image) -> LossValue:
    v = CriticVariant.parse(variant)
    _check_critic(v, critic)
    fit = bce(gen_mask, real_mask.to(gen_mask.dtype)).value
    adversarial = -critic(*generated_wiring(v, gen_mask, real_mask, image)).mean()
    return LossValue(fit + adversarial, {"bce": fit, "adversarial": adversarial})


def critic_loss(variant, critic: Critic, gen_mask, real_mask, image) -> LossValue:
    v = CriticVariant.parse(variant)
    _check_critic(v, critic)
    real_mask = real_mask.to(gen_mask.dtype)
    fake = critic(*generated_wiring(v, gen_mask, real_mask, image)).mean()
    if v is CriticVariant.REGRESSION:
        return LossValue(fake, {"generated": fake})
    real = critic(*real_wiring(v, real_mask, image)).mean()
    return LossValue(fake - real, {"generated": fake, "real": real})


@torch.no_grad()
def clip_parameters(critic: nn.Module, cfg: ClipConfig | float = DEFAULT_CLIP) -> nn.Module:
    """Clamp every critic parameter into [-c, c] in place and return the critic."""
    if isinstance(critic, Generator):
        raise TypeError("generator parameters are never clipped")
    c = cfg.c if isinstance(cfg, ClipConfig) else ClipConfig(float(cfg)).c
    for p in critic.parameters():
        p.clamp_(-c, c)
    return critic
