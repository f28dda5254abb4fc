"""Encoder-decoder mask generator with skip connections.

Encoder level ``i``: two same-padded 3x3 convolutions then a 2x2 max-pool.
Decoder level ``i`` (deepest first): a stride-2 transposed convolution, the
skip concatenation from encoder level ``i``, then two 3x3 convolutions. A 1x1
convolution and a sigmoid produce the per-pixel lung probability.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .errors import ShapeError, SpecError

EPS = 1e-7
INIT_STD = 0.02
# N(0, 0.02) starves a ~11-layer encoder-decoder of signal; scale by fan-in instead
GENERATOR_INIT = "he"


def leaky_relu(x: float, alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return max(x, 0.0) + alpha * min(x, 0.0)


@dataclass(frozen=True)
class GeneratorSpec:
    input_size: int = 64
    depth: int = 2
    base_channels: int = 16
    channel_schedule: tuple[int, ...] = field(default=())
    leaky_slope: float = 0.2
    skip_connections: bool = True

    def __post_init__(self):
        if not self.channel_schedule:
            object.__setattr__(
                self, "channel_schedule", tuple(self.base_channels * 2**i for i in range(self.depth))
            )
        else:
            object.__setattr__(self, "channel_schedule", tuple(int(c) for c in self.channel_schedule))
        if self.depth < 1:
            raise SpecError(f"depth must be >= 1, got {self.depth}")
        if self.input_size % 2**self.depth:
            raise SpecError(f"input_size {self.input_size} is not divisible by 2**{self.depth}")
        if len(self.channel_schedule) != self.depth:
            raise SpecError(
                f"channel_schedule has {len(self.channel_schedule)} entries for depth {self.depth}"
            )
        if min(self.channel_schedule) < 1:
            raise SpecError("channel counts must be positive")
        if not 0.0 < self.leaky_slope < 1.0:
            raise SpecError(f"leaky_slope must lie in (0, 1), got {self.leaky_slope}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channel_schedule"] = list(self.channel_schedule)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        d = dict(d)
        d["channel_schedule"] = tuple(d.get("channel_schedule", ()))
        return cls(**d)


def _double_conv(c_in: int, c_out: int, slope: float) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, 3, padding=1),
        nn.LeakyReLU(slope),
        nn.Conv2d(c_out, c_out, 3, padding=1),
        nn.LeakyReLU(slope),
    )


class _DecoderBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, slope: float, skip: bool):
        super().__init__()
        self.up = nn.ConvTranspose2d(c_in, c_out, 2, stride=2)
        self.act = nn.LeakyReLU(slope)
        self.skip = skip
        self.conv = _double_conv(2 * c_out if skip else c_out, c_out, slope)

    def forward(self, x: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        x = self.act(self.up(x))
        if self.skip:
            x = torch.cat([x, skip], dim=1)
        return self.conv(x)


class Generator(nn.Module):
    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        ch, a = spec.channel_schedule, spec.leaky_slope
        self.encoders = nn.ModuleList(
            _double_conv(1 if i == 0 else ch[i - 1], ch[i], a) for i in range(spec.depth)
        )
        self.pool = nn.MaxPool2d(2)
        # decoders[j] undoes encoder level depth-1-j
        self.decoders = nn.ModuleList(
            _DecoderBlock(ch[i] if i == spec.depth - 1 else ch[i + 1], ch[i], a, spec.skip_connections)
            for i in reversed(range(spec.depth))
        )
        self.head = nn.Conv2d(ch[0], 1, 1)

    def _check(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() == 2:
            x = x[None, None]
        elif x.dim() == 3:
            x = x[:, None]
        n = self.spec.input_size
        if x.dim() != 4 or x.shape[1] != 1 or tuple(x.shape[-2:]) != (n, n):
            raise ShapeError(f"generator expects (N, 1, {n}, {n}) input, got {tuple(x.shape)}")
        return x

    def _run(self, x: torch.Tensor, taps: list | None = None) -> torch.Tensor:
        skips = []
        for enc in self.encoders:
            x = enc(x)
            skips.append(x)
            if taps is not None:
                taps.append(x)
            x = self.pool(x)
        for dec, skip in zip(self.decoders, reversed(skips)):
            x = dec(x, skip)
            if taps is not None:
                taps.append(x)
        prob = torch.sigmoid(self.head(x)).clamp(EPS, 1.0 - EPS)
        if taps is not None:
            taps.append(prob)
        return prob

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(N, 1, H, W) intensities -> (N, 1, H, W) probabilities in [eps, 1-eps]."""
        return self._run(self._check(x))

    @torch.no_grad()
    def capture(self, x: torch.Tensor) -> list[torch.Tensor]:
        """Raw block outputs: each encoder level (pre-pool), each decoder level, the head."""
        taps: list[torch.Tensor] = []
        self._run(self._check(x), taps)
        return taps


def _fan_in(m: nn.Module) -> int:
    w = m.weight
    if isinstance(m, nn.ConvTranspose2d):
        return w.shape[0] * w[0, 0].numel()
    return w[0].numel()


def init_gaussian(module: nn.Module, seed: int, std: float | str = INIT_STD) -> nn.Module:
    """Zero-mean Gaussian weights, zero biases, unit batch-norm scales.

    ``std`` is a fixed standard deviation or ``"he"`` for sqrt(2 / fan_in)
    per layer.
    """
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
                s = (2.0 / _fan_in(m)) ** 0.5 if std == "he" else float(std)
                nn.init.normal_(m.weight, 0.0, s, generator=g)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, nn.BatchNorm2d):
                m.weight.fill_(1.0)
                m.bias.zero_()
    return module


def build_generator(spec: GeneratorSpec, seed: int = 0, init_std: float | str = GENERATOR_INIT) -> Generator:
    return init_gaussian(Generator(spec), seed, init_std)


def predict(gen: nn.Module, images: np.ndarray) -> np.ndarray:
    """Probabilities for a stack of (N, H, W) or a single (H, W) image."""
    single = np.ndim(images) == 2
    dtype = next(gen.parameters()).dtype
    x = torch.as_tensor(np.asarray(images), dtype=dtype)
    was_training = gen.training
    gen.eval()
    try:
        with torch.no_grad():
            out = gen(x)[:, 0].numpy()
    finally:
        gen.train(was_training)
    return out[0] if single else out


def normalize_map(a: np.ndarray) -> np.ndarray:
    lo, hi = float(a.min()), float(a.max())
    if hi - lo <= 0.0:
        return np.zeros_like(a, dtype=np.float64)
    return (a - lo) / (hi - lo)


def capture_activations(gen: Generator, img: np.ndarray) -> list[np.ndarray]:
    """One [0, 1]-normalized map per block: the channel with the largest mean |activation|."""
    dtype = next(gen.parameters()).dtype
    taps = gen.capture(torch.as_tensor(np.asarray(img), dtype=dtype))
    maps = []
    for t in taps:
        t = t[0]
        best = int(t.abs().mean(dim=(1, 2)).argmax())
        maps.append(normalize_map(t[best].double().numpy()))
    return maps


def block_sizes(spec: GeneratorSpec) -> Sequence[int]:
    """Spatial size of each captured map, in capture order."""
    enc = [spec.input_size // 2**i for i in range(spec.depth)]
    return enc + enc[::-1] + [spec.input_size]
