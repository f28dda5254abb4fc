"""Synthetic lung-like slices with exactly known masks.

Each slice is a bright body disc on a dark background with one or two darker
elliptical "lungs". The mask is the union of the ellipse interiors evaluated at
pixel centres, so it is known analytically.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import DatasetManifest, ManifestEntry, load_manifest, write_image, write_manifest, write_mask

MANIFEST_NAME = "manifest.tsv"
MIN_FOREGROUND = 0.02
MAX_FOREGROUND = 0.45


@dataclass(frozen=True)
class PhantomConfig:
    seed: int = 0
    count: int = 100
    size: int = 64
    noise_sigma: float = 0.05
    blob_count_range: tuple[int, int] = (1, 2)
    slices_per_scan: int = 5
    test_fraction: float = 0.2
    lung_intensity: float = 0.2
    body_intensity: float = 0.7
    background_intensity: float = 0.05

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if self.size < 32:
            raise ValueError(f"size must be >= 32, got {self.size}")
        if not 0.0 <= self.noise_sigma <= 0.5:
            raise ValueError(f"noise_sigma must lie in [0, 0.5], got {self.noise_sigma}")
        lo, hi = self.blob_count_range
        if not 1 <= lo <= hi:
            raise ValueError(f"bad blob_count_range {self.blob_count_range}")
        if self.slices_per_scan < 1:
            raise ValueError("slices_per_scan must be >= 1")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ValueError(f"test_fraction must lie in [0, 1), got {self.test_fraction}")


@dataclass(frozen=True)
class Ellipse:
    cy: float
    cx: float
    a: float  # semi-axis along the rotated x direction
    b: float
    theta: float

    def contains(self, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        dy, dx = y - self.cy, x - self.cx
        c, s = math.cos(self.theta), math.sin(self.theta)
        u = (dx * c + dy * s) / self.a
        v = (-dx * s + dy * c) / self.b
        return u * u + v * v <= 1.0


@dataclass(frozen=True)
class PhantomSlice:
    image: np.ndarray
    mask: np.ndarray
    lungs: tuple[Ellipse, ...]
    body_center: tuple[float, float]
    body_radius: float


def ellipse_mask(size: int, lungs: tuple[Ellipse, ...]) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    mask = np.zeros((size, size), dtype=bool)
    for e in lungs:
        mask |= e.contains(y, x)
    return mask.astype(np.uint8)


def _sample_geometry(rng: np.random.Generator, cfg: PhantomConfig):
    n = cfg.size
    body_c = (n / 2 + rng.uniform(-n / 16, n / 16), n / 2 + rng.uniform(-n / 16, n / 16))
    body_r = rng.uniform(0.38, 0.46) * n
    lo, hi = cfg.blob_count_range
    k = int(rng.integers(lo, hi + 1))
    lungs = []
    for i in range(k):
        if k == 1:
            offset = rng.uniform(-0.1, 0.1) * n
        else:
            # spread lobes left to right across the body
            side = -1.0 + 2.0 * i / (k - 1)
            offset = side * rng.uniform(0.15, 0.25) * n
        cy = body_c[0] + rng.uniform(-0.1, 0.1) * n
        cx = body_c[1] + offset
        a = rng.uniform(n / 8, n / 3)
        b = rng.uniform(n / 8, n / 3)
        theta = rng.uniform(0.0, math.pi)
        lungs.append(Ellipse(cy, cx, a, b, theta))
    return body_c, body_r, tuple(lungs)


def sample_slice(rng: np.random.Generator, cfg: PhantomConfig) -> PhantomSlice:
    """Draw one slice, resampling the geometry until the lung fraction is sane."""
    n = cfg.size
    while True:
        body_c, body_r, lungs = _sample_geometry(rng, cfg)
        mask = ellipse_mask(n, lungs)
        if MIN_FOREGROUND <= mask.mean() <= MAX_FOREGROUND:
            break
    y, x = np.mgrid[0:n, 0:n].astype(np.float64)
    body = (y - body_c[0]) ** 2 + (x - body_c[1]) ** 2 <= body_r**2
    image = np.full((n, n), cfg.background_intensity)
    image[body] = cfg.body_intensity
    image[mask.astype(bool)] = cfg.lung_intensity
    if cfg.noise_sigma > 0:
        image = image + rng.normal(0.0, cfg.noise_sigma, size=image.shape)
    return PhantomSlice(image.clip(0.0, 1.0), mask, lungs, body_c, body_r)


def _test_scans(n_scans: int, cfg: PhantomConfig, rng: np.random.Generator) -> set[int]:
    n_test = int(round(n_scans * cfg.test_fraction))
    if cfg.test_fraction > 0 and n_scans >= 2:
        n_test = min(max(n_test, 1), n_scans - 1)
    else:
        n_test = 0
    return set(int(i) for i in rng.permutation(n_scans)[:n_test])


def generate(cfg: PhantomConfig, out_dir: str | os.PathLike) -> DatasetManifest:
    """Write ``cfg.count`` image/mask PNG pairs and a manifest under ``out_dir``."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    slice_seq, split_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.Generator(np.random.PCG64(slice_seq))
    n_scans = math.ceil(cfg.count / cfg.slices_per_scan)
    test = _test_scans(n_scans, cfg, np.random.Generator(np.random.PCG64(split_seq)))

    entries = []
    for i in range(cfg.count):
        scan, index = divmod(i, cfg.slices_per_scan)
        scan_id = f"scan{scan:03d}"
        s = sample_slice(rng, cfg)
        img_p = out / "images" / f"{scan_id}_{index:03d}.png"
        msk_p = out / "masks" / f"{scan_id}_{index:03d}.png"
        write_image(img_p, s.image)
        write_mask(msk_p, s.mask)
        split = "test" if scan in test else "train"
        entries.append(ManifestEntry(img_p.resolve(), msk_p.resolve(), scan_id, index, split))
    write_manifest(out / MANIFEST_NAME, entries)
    return load_manifest(out / MANIFEST_NAME)
