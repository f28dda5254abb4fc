"""Critic networks for the five mask/image wirings.

Every critic ends in an affine layer, so scores are unbounded reals. The
building block is a 4x4 stride-2 convolution, batch norm (skipped on the
first block of a path) and LeakyReLU; each block halves the spatial size.

Wirings:

============  =======================================  ============
variant       critic input                             input arity
============  =======================================  ============
basic         mask                                     1
product       mask * image (Hadamard)                  1
ef            channel stack (mask, image)              1 (2 ch)
lf            (mask, image), separate branches         2
regression    (generated mask, real mask)              2
============  =======================================  ============
"""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

import torch
from torch import nn

from .errors import ShapeError, SpecError, WiringError
from .generator import init_gaussian


class CriticVariant(str, enum.Enum):
    BASIC = "basic"
    PRODUCT = "product"
    EARLY_FUSION = "ef"
    LATE_FUSION = "lf"
    REGRESSION = "regression"

    @property
    def arity(self) -> int:
        return 2 if self in (CriticVariant.LATE_FUSION, CriticVariant.REGRESSION) else 1

    @property
    def label(self) -> str:
        return {
            "basic": "LGAN_Basic",
            "product": "LGAN_Product",
            "ef": "LGAN_EF",
            "lf": "LGAN_LF",
            "regression": "LGAN_Regression",
        }[self.value]

    @classmethod
    def parse(cls, name: "str | CriticVariant") -> "CriticVariant":
        if isinstance(name, cls):
            return name
        aliases = {"origin": "basic", "early-fusion": "ef", "late-fusion": "lf"}
        key = str(name).lower()
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise WiringError(
                f"unknown critic variant {name!r}; choose from {', '.join(v.value for v in cls)}"
            ) from None


@dataclass(frozen=True)
class CriticSpec:
    variant: CriticVariant = CriticVariant.BASIC
    input_size: int = 64
    channel_schedule: tuple[int, ...] = (16, 32, 64)
    leaky_slope: float = 0.2
    use_batchnorm: bool = True
    fc_widths: tuple[int, ...] = (256, 1)
    extra_image_blocks: int = 2

    def __post_init__(self):
        object.__setattr__(self, "variant", CriticVariant.parse(self.variant))
        object.__setattr__(self, "channel_schedule", tuple(int(c) for c in self.channel_schedule))
        object.__setattr__(self, "fc_widths", tuple(int(c) for c in self.fc_widths))
        n = len(self.channel_schedule)
        if n < 1 or min(self.channel_schedule) < 1:
            raise SpecError("channel_schedule needs at least one positive entry")
        if n < 2 and self.variant.arity == 2:
            raise SpecError("two-input critics need at least two blocks (branch + trunk)")
        if self.input_size % 2**n or self.input_size // 2**n < 1:
            raise SpecError(f"input_size {self.input_size} cannot be halved {n} times")
        if not self.fc_widths or self.fc_widths[-1] != 1 or min(self.fc_widths) < 1:
            raise SpecError(f"fc_widths must be positive and end in 1, got {self.fc_widths}")
        if not 0.0 < self.leaky_slope < 1.0:
            raise SpecError(f"leaky_slope must lie in (0, 1), got {self.leaky_slope}")

    @property
    def in_channels(self) -> int:
        return 2 if self.variant is CriticVariant.EARLY_FUSION else 1

    @property
    def final_size(self) -> int:
        return self.input_size // 2 ** len(self.channel_schedule)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        d["channel_schedule"] = list(self.channel_schedule)
        d["fc_widths"] = list(self.fc_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CriticSpec":
        d = dict(d)
        d["channel_schedule"] = tuple(d["channel_schedule"])
        d["fc_widths"] = tuple(d["fc_widths"])
        return cls(**d)


def _block(c_in: int, c_out: int, slope: float, bn: bool, stride: int = 2) -> nn.Sequential:
    layers: list[nn.Module] = []
    if stride == 2:
        layers.append(nn.Conv2d(c_in, c_out, 4, stride=2, padding=1))
    else:
        layers.append(nn.Conv2d(c_in, c_out, 3, padding=1))
    if bn:
        # batch statistics only: the forward stays a pure function of its input
        layers.append(nn.BatchNorm2d(c_out, track_running_stats=False))
    layers.append(nn.LeakyReLU(slope))
    return nn.Sequential(*layers)


class Critic(nn.Module):
    """Scores wired inputs; ``forward(*bundle)`` returns one real per sample."""

    def __init__(self, spec: CriticSpec):
        super().__init__()
        self.spec = spec
        v, ch, a, bn = spec.variant, spec.channel_schedule, spec.leaky_slope, spec.use_batchnorm
        if v.arity == 1:
            self.branches = nn.ModuleList()
            trunk = [_block(spec.in_channels, ch[0], a, False)]
            trunk += [_block(ch[i - 1], ch[i], a, bn) for i in range(1, len(ch))]
        else:
            first = nn.Sequential(_block(1, ch[0], a, False))
            if v is CriticVariant.LATE_FUSION:
                # the image path gets extra resolution-preserving blocks before fusion
                image_path = [_block(1, ch[0], a, False)]
                image_path += [_block(ch[0], ch[0], a, bn, stride=1) for _ in range(spec.extra_image_blocks)]
                self.branches = nn.ModuleList([first, nn.Sequential(*image_path)])
                trunk = [_block(2 * ch[0] if i == 1 else ch[i - 1], ch[i], a, bn) for i in range(1, len(ch))]
            else:
                self.branches = nn.ModuleList([first, nn.Sequential(_block(1, ch[0], a, False))])
                trunk = []
                for i in range(1, len(ch)):
                    trunk.append(_block(2 * ch[0] if i == 1 else ch[i - 1], ch[i], a, bn))
                    trunk.append(_block(ch[i], ch[i], a, bn, stride=1))
        self.trunk = nn.Sequential(*trunk)
        widths = (ch[-1] * spec.final_size**2,) + spec.fc_widths
        fc: list[nn.Module] = []
        for i in range(len(widths) - 1):
            fc.append(nn.Linear(widths[i], widths[i + 1]))
            if i < len(widths) - 2:
                fc.append(nn.LeakyReLU(a))
        self.fc = nn.Sequential(*fc)

    @property
    def output_layer(self) -> nn.Linear:
        return self.fc[-1]

    def _check(self, t: torch.Tensor, channels: int) -> torch.Tensor:
        n = self.spec.input_size
        if t.dim() == 3 and channels == 1:
            t = t[:, None]
        if t.dim() != 4 or t.shape[1] != channels or tuple(t.shape[-2:]) != (n, n):
            raise ShapeError(
                f"{self.spec.variant.value} critic expects (N, {channels}, {n}, {n}), got {tuple(t.shape)}"
            )
        return t

    def forward(self, *bundle: torch.Tensor) -> torch.Tensor:
        v = self.spec.variant
        if len(bundle) != v.arity:
            raise WiringError(f"{v.value} critic takes {v.arity} input(s), got {len(bundle)}")
        if v.arity == 1:
            h = self._check(bundle[0], self.spec.in_channels)
        else:
            a, b = (self._check(t, 1) for t in bundle)
            if a.shape != b.shape:
                raise ShapeError(f"critic inputs differ in shape: {tuple(a.shape)} vs {tuple(b.shape)}")
            h = torch.cat([self.branches[0](a), self.branches[1](b)], dim=1)
        h = self.trunk(h)
        return self.fc(h.flatten(1))[:, 0]


def build_critic(spec: CriticSpec, seed: int = 0) -> Critic:
    return init_gaussian(Critic(spec), seed)


def _as_batch(t: torch.Tensor) -> torch.Tensor:
    if t.dim() == 2:
        return t[None, None]
    if t.dim() == 3:
        return t[:, None]
    return t


def wire_inputs(
    variant: CriticVariant | str,
    mask: torch.Tensor,
    image: torch.Tensor | None = None,
    other_mask: torch.Tensor | None = None,
) -> tuple[torch.Tensor, ...]:
    """Build the critic input bundle for one side of the game.

    Accepts (H, W), (N, H, W) or (N, 1, H, W) tensors; returns (N, C, H, W).
    """
    v = CriticVariant.parse(variant)
    mask = _as_batch(mask)
    if other_mask is not None and v is not CriticVariant.REGRESSION:
        raise WiringError(f"the {v.value} critic takes no second mask")
    if v is CriticVariant.REGRESSION:
        if other_mask is None:
            raise WiringError("the regression critic needs the paired real mask")
        other = _as_batch(other_mask).to(mask.dtype)
        if other.shape != mask.shape:
            raise ShapeError(f"mask shapes differ: {tuple(mask.shape)} vs {tuple(other.shape)}")
        return (mask, other)
    if v is CriticVariant.BASIC:
        return (mask,)
    if image is None:
        raise WiringError(f"the {v.value} critic needs the CT image")
    image = _as_batch(image).to(mask.dtype)
    if image.shape != mask.shape:
        raise ShapeError(f"mask {tuple(mask.shape)} and image {tuple(image.shape)} differ in shape")
    if v is CriticVariant.PRODUCT:
        return (mask * image,)
    if v is CriticVariant.EARLY_FUSION:
        return (torch.cat([mask, image], dim=1),)
    return (mask, image)
