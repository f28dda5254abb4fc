"""Alternating critic/generator optimisation, checkpointing and evaluation."""
from __future__ import annotations

import dataclasses
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import torch

from . import checkpoint
from .critics import Critic, CriticSpec, CriticVariant, build_critic
from .data import DatasetManifest, binarize, load_split_arrays, resize
from .errors import LganError, ShapeError, TrainingDiverged
from .generator import Generator, GeneratorSpec, build_generator, predict
from .losses import ClipConfig, bce, clip_parameters, critic_loss, generator_loss
from .metrics import MetricReport, evaluate_masks

log = logging.getLogger(__name__)

BASELINE = "baseline-unet"
VARIANT_CHOICES = (BASELINE,) + tuple(v.value for v in CriticVariant)
LOG_NAME = "train.log"
LOG_HEADER = "step\tg_total\tg_bce\tg_adv\td_loss\tiou\tdice\thausdorff"


@dataclass(frozen=True)
class TrainConfig:
    variant: str = BASELINE
    batch_size: int = 32
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 5e-4
    n_critic: int = 5
    clip_c: float = 0.01
    epochs: int = 1
    seed: int = 0
    image_size: int = 64
    eval_every: int = 0
    depth: int = 2
    base_channels: int = 16
    critic_channels: tuple[int, ...] = (16, 32, 64)
    fc_widths: tuple[int, ...] = (256, 1)
    leaky_slope: float = 0.2
    threshold: float = 0.5
    init_std: str = "he"

    def __post_init__(self):
        v = self.variant.value if isinstance(self.variant, CriticVariant) else str(self.variant)
        if v != BASELINE:
            v = CriticVariant.parse(v).value
        object.__setattr__(self, "variant", v)
        object.__setattr__(self, "critic_channels", tuple(int(c) for c in self.critic_channels))
        object.__setattr__(self, "fc_widths", tuple(int(c) for c in self.fc_widths))
        for name in ("lr", "clip_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.n_critic < 1 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("n_critic, batch_size and epochs must all be >= 1")
        if self.eval_every < 0:
            raise ValueError("eval_every must be >= 0")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if self.init_std != "he":
            if not float(self.init_std) > 0:
                raise ValueError("init_std must be 'he' or a positive number")
            object.__setattr__(self, "init_std", repr(float(self.init_std)))

    def generator_init(self) -> float | str:
        return "he" if self.init_std == "he" else float(self.init_std)

    @property
    def adversarial(self) -> bool:
        return self.variant != BASELINE

    def generator_spec(self) -> GeneratorSpec:
        return GeneratorSpec(self.image_size, self.depth, self.base_channels, leaky_slope=self.leaky_slope)

    def critic_spec(self) -> CriticSpec:
        return CriticSpec(
            CriticVariant.parse(self.variant),
            self.image_size,
            self.critic_channels,
            self.leaky_slope,
            fc_widths=self.fc_widths,
        )

    def header(self) -> str:
        return (
            f"variant={self.variant} lr={self.lr!r} batch={self.batch_size} beta1={self.beta1!r} "
            f"wd={self.weight_decay!r} beta2={self.beta2!r} n_critic={self.n_critic} clip={self.clip_c!r} "
            f"epochs={self.epochs} seed={self.seed} size={self.image_size}"
        )

    def to_lines(self) -> str:
        out = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            out.append(f"{f.name} = {v}")
        return "\n".join(out) + "\n"

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "TrainConfig":
        """Build from string-valued ``key = value`` pairs (config file or flags)."""
        kinds = {f.name: type(getattr(cls(), f.name)) for f in dataclasses.fields(cls)}
        kwargs: dict[str, object] = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in kinds:
                raise ValueError(f"unknown config key {key!r}")
            kind = kinds[key]
            if kind is tuple:
                kwargs[key] = raw if isinstance(raw, tuple) else tuple(int(x) for x in str(raw).split(",") if x.strip())
            elif kind is int:
                kwargs[key] = int(raw)
            elif kind is float:
                kwargs[key] = float(raw)
            else:
                kwargs[key] = str(raw)
        return cls(**kwargs)


def read_config_file(path: str | os.PathLike) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    return values


@dataclass
class TrainLogRecord:
    step: int
    g_total: float
    g_bce: float
    g_adv: float
    d_loss: float
    wall_clock: float
    eval: dict[str, float | None] | None = None

    def line(self) -> str:
        cols = [str(self.step)] + [repr(x) for x in (self.g_total, self.g_bce, self.g_adv, self.d_loss)]
        if self.eval is not None:
            cols += ["n/a" if self.eval[k] is None else repr(self.eval[k]) for k in ("iou", "dice", "hausdorff")]
        return "\t".join(cols)


@dataclass
class TrainResult:
    generator: Generator
    critic: Critic | None
    records: list[TrainLogRecord]
    generator_updates: int = 0
    critic_updates: int = 0
    out_dir: Path | None = None
    max_abs_critic_param: list[float] = field(default_factory=list)


def _finite(value: float, what: str, step: int) -> float:
    if not math.isfinite(value):
        raise TrainingDiverged(f"non-finite {what} ({value}) at step {step}; aborting")
    return value


def _eval_summary(report: MetricReport) -> dict[str, float | None]:
    return {m: report.mean(m) for m in ("iou", "dice", "hausdorff")}


def train(
    config: TrainConfig,
    data: DatasetManifest,
    out_dir: str | os.PathLike | None = None,
    *,
    on_critic_step: Callable[[Critic], None] | None = None,
) -> TrainResult:
    """Run the adversarial (or BCE-only baseline) schedule.

    Every batch gets ``n_critic`` critic updates, each followed by weight
    clipping, then one generator update. Partial batches are dropped.
    """
    images, masks, _ = load_split_arrays(data, "train", config.image_size, config.depth)
    n = len(images)
    if n == 0:
        raise LganError("the manifest has no training slices")
    steps_per_epoch = n // config.batch_size
    if steps_per_epoch == 0:
        raise LganError(f"batch size {config.batch_size} exceeds the {n} training slices")
    x_all = torch.as_tensor(images, dtype=torch.float32)[:, None]
    y_all = torch.as_tensor(masks, dtype=torch.float32)[:, None]

    gen = build_generator(config.generator_spec(), config.seed, config.generator_init())
    opt_g = torch.optim.Adam(
        gen.parameters(), lr=config.lr, betas=(config.beta1, config.beta2), weight_decay=config.weight_decay
    )
    critic = opt_d = None
    if config.adversarial:
        critic = build_critic(config.critic_spec(), config.seed + 1)
        clip_parameters(critic, ClipConfig(config.clip_c))
        opt_d = torch.optim.Adam(
            critic.parameters(), lr=config.lr, betas=(config.beta1, config.beta2), weight_decay=config.weight_decay
        )
    has_test = bool(data.split("test"))
    rng = np.random.Generator(np.random.PCG64(config.seed))

    out = Path(out_dir) if out_dir is not None else None
    log_fh = None
    if out is not None:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)
        log_fh = open(out / LOG_NAME, "w")
        log_fh.write(LOG_HEADER + "\n")

    result = TrainResult(gen, critic, [], out_dir=out)
    total_steps = steps_per_epoch * config.epochs
    step = 0
    t0 = time.perf_counter()
    try:
        for _ in range(config.epochs):
            order = rng.permutation(n)
            for b in range(steps_per_epoch):
                idx = torch.as_tensor(order[b * config.batch_size : (b + 1) * config.batch_size])
                x, y = x_all[idx], y_all[idx]
                d_value = 0.0
                if critic is not None:
                    with torch.no_grad():
                        fake = gen(x)
                    critic.requires_grad_(True)
                    for _ in range(config.n_critic):
                        opt_d.zero_grad(set_to_none=True)
                        d = critic_loss(config.variant, critic, fake, y, x)
                        d.value.backward()
                        opt_d.step()
                        clip_parameters(critic, config.clip_c)
                        result.critic_updates += 1
                        d_value = _finite(d.item(), "critic loss", step + 1)
                        if on_critic_step is not None:
                            on_critic_step(critic)
                    critic.requires_grad_(False)

                opt_g.zero_grad(set_to_none=True)
                pred = gen(x)
                if critic is not None:
                    g = generator_loss(config.variant, critic, pred, y, x)
                else:
                    g = bce(pred, y)
                    g.components["adversarial"] = torch.zeros((), dtype=pred.dtype)
                g.value.backward()
                opt_g.step()
                result.generator_updates += 1
                step += 1
                comps = g.floats()
                rec = TrainLogRecord(
                    step,
                    _finite(g.item(), "generator loss", step),
                    comps["bce"],
                    comps["adversarial"],
                    d_value,
                    time.perf_counter() - t0,
                )
                if has_test and config.eval_every and (step % config.eval_every == 0 or step == total_steps):
                    rec.eval = _eval_summary(
                        evaluate_checkpoint(gen, data, "test", threshold=config.threshold)
                    )
                result.records.append(rec)
                if log_fh is not None:
                    log_fh.write(rec.line() + "\n")
                    log_fh.flush()
                log.debug("step %d: %s", step, rec.line())
    finally:
        if log_fh is not None:
            log_fh.close()
        if critic is not None:
            critic.requires_grad_(True)

    if out is not None:
        checkpoint.save(out / "checkpoints" / "generator.pt", gen, seed=config.seed, variant=config.variant)
        if critic is not None:
            checkpoint.save(out / "checkpoints" / "critic.pt", critic, seed=config.seed + 1, variant=config.variant)
    return result


# --- evaluation --------------------------------------------------------------

Predictor = Callable[[np.ndarray, np.ndarray], np.ndarray]


class PerfectStub:
    """Test hook: predicts the ground truth exactly."""

    def __call__(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        return mask.astype(np.float64)


class EmptyStub:
    """Test hook: predicts background everywhere."""

    def __call__(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        return np.zeros(mask.shape)


def segment_image(gen: Generator, image: np.ndarray, threshold: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Resize to the network size, predict, map the probabilities back, binarize."""
    size = gen.spec.input_size
    x = resize(image, size, depth=gen.spec.depth) if image.shape != (size, size) else image
    prob = predict(gen, x)
    if prob.shape != image.shape:
        if image.shape[0] != image.shape[1]:
            raise ShapeError(f"non-square image {image.shape} cannot be mapped back from the network size")
        prob = resize(prob, image.shape[0])
    return prob, binarize(prob, threshold)


def evaluate_checkpoint(
    model: Generator | Predictor,
    data: DatasetManifest,
    split: str = "test",
    *,
    threshold: float = 0.5,
) -> MetricReport:
    """Segment every slice of ``split`` and score it; no critic involved.

    ``model`` is a generator, or a ``(image, mask) -> probabilities`` callable
    used by tests to stand in for one.
    """
    entries = data.split(split)
    if not entries:
        raise LganError(f"the manifest has no {split} slices")
    preds, gts, keys = [], [], []
    if isinstance(model, Generator):
        images, masks, _ = load_split_arrays(data, split)
        n = model.spec.input_size
        if images.shape[1:] != (n, n):
            x = np.stack([resize(im, n, depth=model.spec.depth) for im in images])
        else:
            x = images
        probs = predict(model, x)
        if probs.shape[1:] != masks.shape[1:]:
            probs = np.stack([resize(p, masks.shape[1]) for p in probs])
        for e, p, m in zip(entries, probs, masks):
            preds.append(binarize(p, threshold))
            gts.append(m)
            keys.append((e.scan_id, e.slice_index))
    else:
        for e in entries:
            image, mask = e.load()
            preds.append(binarize(model(image, mask), threshold))
            gts.append(mask)
            keys.append((e.scan_id, e.slice_index))
    return evaluate_masks(preds, gts, keys)
