"""Image/mask primitives, PNG I/O and the tab-separated dataset manifest.

Images are float arrays in [0, 1] of shape (H, W); masks are uint8 arrays
holding exactly 0 or 1. Manifest lines look like::

    <image_path>\t<mask_path>\t<scan_id>\t<slice_index>\t<train|test>

Relative paths are resolved against the manifest's directory.
"""
from __future__ import annotations

import os
import tempfile
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .errors import EmptyManifest, InvalidPixel, ManifestError, MissingFile, ShapeError

DEFAULT_THRESHOLD = 0.5
SPLITS = ("train", "test")


def normalize_image(raw: np.ndarray, bit_depth: int = 8) -> np.ndarray:
    """Map integer pixels onto [0, 1] by dividing by the largest code value."""
    if bit_depth not in (8, 16):
        raise InvalidPixel(f"unsupported bit depth {bit_depth}; expected 8 or 16")
    raw = np.asarray(raw)
    if raw.ndim != 2:
        raise ShapeError(f"expected a 2D image, got shape {raw.shape}")
    top = 2**bit_depth - 1
    if raw.size and (raw.min() < 0 or raw.max() > top):
        raise InvalidPixel(
            f"pixel values span [{raw.min()}, {raw.max()}], outside the {bit_depth}-bit range [0, {top}]"
        )
    return raw.astype(np.float64) / top


def binarize(prob: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Hard mask: 1 where ``prob >= threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    return (np.asarray(prob) >= threshold).astype(np.uint8)


def resize(img: np.ndarray, size: int, *, mask: bool = False, depth: int = 0) -> np.ndarray:
    """Resize a square-target image (bilinear) or mask (nearest neighbour).

    ``depth`` is the number of 2x poolings of the network the result feeds;
    ``size`` must be divisible by ``2**depth``.
    """
    if size < 8 or size % (2**depth):
        raise ShapeError(f"size {size} must be >= 8 and divisible by 2**{depth}")
    img = np.asarray(img)
    if img.ndim != 2:
        raise ShapeError(f"expected a 2D array, got shape {img.shape}")
    if img.shape == (size, size):
        return img.copy()
    t = torch.from_numpy(np.ascontiguousarray(img, dtype=np.float64))[None, None]
    if mask:
        out = F.interpolate(t, size=(size, size), mode="nearest")
        return out[0, 0].numpy().astype(np.uint8)
    out = F.interpolate(t, size=(size, size), mode="bilinear", align_corners=False)
    return out[0, 0].numpy().clip(0.0, 1.0)


# --- PNG I/O -----------------------------------------------------------------

def read_image(path: str | os.PathLike) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            raw = np.asarray(im, dtype=np.int64)
            return normalize_image(raw, 16)
        if im.mode != "L":
            im = im.convert("L")
        return normalize_image(np.asarray(im), 8)


def read_mask(path: str | os.PathLike) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode != "L":
            im = im.convert("L")
        return (np.asarray(im) >= 128).astype(np.uint8)


def _atomic_save(im: Image.Image, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        im.save(tmp, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_image(path: str | os.PathLike, img: np.ndarray) -> None:
    """Quantize a [0, 1] image to 8 bits and write it atomically."""
    img = np.asarray(img, dtype=np.float64)
    if not np.isfinite(img).all():
        raise InvalidPixel("image contains non-finite values")
    codes = np.rint(img.clip(0.0, 1.0) * 255.0).astype(np.uint8)
    _atomic_save(Image.fromarray(codes, mode="L"), Path(path))


def write_mask(path: str | os.PathLike, mask: np.ndarray) -> None:
    codes = (np.asarray(mask) > 0).astype(np.uint8) * 255
    _atomic_save(Image.fromarray(codes, mode="L"), Path(path))


# --- manifest ----------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    image_path: Path
    mask_path: Path
    scan_id: str
    slice_index: int
    split: str

    def load(self) -> tuple[np.ndarray, np.ndarray]:
        image, mask = read_image(self.image_path), read_mask(self.mask_path)
        if image.shape != mask.shape:
            raise ShapeError(f"{self.image_path} is {image.shape} but its mask is {mask.shape}")
        return image, mask


@dataclass(frozen=True)
class VolumeScan:
    scan_id: str
    slices: tuple[tuple[np.ndarray, np.ndarray], ...]

    @property
    def masks(self) -> list[np.ndarray]:
        return [m for _, m in self.slices]


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    source: Path | None = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self.entries)

    def split(self, name: str) -> list[ManifestEntry]:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return [e for e in self.entries if e.split == name]

    def scan_ids(self, split: str | None = None) -> list[str]:
        seen: dict[str, None] = {}
        for e in self.entries:
            if split is None or e.split == split:
                seen.setdefault(e.scan_id)
        return list(seen)

    def scans(self, split: str) -> list[VolumeScan]:
        """Group a split into scans ordered by slice index."""
        groups: OrderedDict[str, list[ManifestEntry]] = OrderedDict()
        for e in self.split(split):
            groups.setdefault(e.scan_id, []).append(e)
        scans = []
        for scan_id, entries in groups.items():
            entries.sort(key=lambda e: e.slice_index)
            scans.append(VolumeScan(scan_id, tuple(e.load() for e in entries)))
        return scans


def _fmt_path(p: Path, base: Path) -> str:
    try:
        return str(p.relative_to(base))
    except ValueError:
        return str(p)


def write_manifest(path: str | os.PathLike, entries: Sequence[ManifestEntry]) -> None:
    path = Path(path)
    base = path.parent.resolve()
    lines = [
        "\t".join(
            (
                _fmt_path(e.image_path, base),
                _fmt_path(e.mask_path, base),
                e.scan_id,
                str(e.slice_index),
                e.split,
            )
        )
        for e in entries
    ]
    path.write_text("".join(line + "\n" for line in lines))


def load_manifest(path: str | os.PathLike, *, check_files: bool = True) -> DatasetManifest:
    """Parse and validate a manifest, keeping file order."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"manifest not found: {path}")
    base = path.parent.resolve()
    entries: list[ManifestEntry] = []
    seen_slices: set[tuple[str, int]] = set()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise ManifestError(f"{path}:{lineno}: expected 5 tab-separated fields, got {len(fields)}")
        image_s, mask_s, scan_id, index_s, split = fields
        try:
            index = int(index_s)
        except ValueError:
            raise ManifestError(f"{path}:{lineno}: slice index {index_s!r} is not an integer") from None
        if split not in SPLITS:
            raise ManifestError(f"{path}:{lineno}: split must be train or test, got {split!r}")
        if not scan_id:
            raise ManifestError(f"{path}:{lineno}: empty scan id")
        if (scan_id, index) in seen_slices:
            raise ManifestError(f"{path}:{lineno}: duplicate slice {index} of scan {scan_id}")
        seen_slices.add((scan_id, index))
        image_p, mask_p = base / image_s, base / mask_s
        if check_files:
            for p in (image_p, mask_p):
                if not p.is_file():
                    raise MissingFile(f"{path}:{lineno}: missing file {p}")
                try:
                    with Image.open(p) as im:
                        im.verify()
                except Exception as exc:
                    raise ManifestError(f"{path}:{lineno}: cannot parse image {p}: {exc}") from None
        entries.append(ManifestEntry(image_p, mask_p, scan_id, index, split))
    if not entries:
        raise EmptyManifest(f"manifest {path} has no records")
    train_scans = {e.scan_id for e in entries if e.split == "train"}
    leaked = sorted(train_scans & {e.scan_id for e in entries if e.split == "test"})
    if leaked:
        raise ManifestError(f"{path}: scans in both train and test splits: {', '.join(leaked)}")
    return DatasetManifest(tuple(entries), source=path)


def load_split_arrays(
    manifest: DatasetManifest, split: str, size: int | None = None, depth: int = 0
) -> tuple[np.ndarray, np.ndarray, list[ManifestEntry]]:
    """Stack every slice of a split into (N, H, W) image and mask arrays."""
    entries = manifest.split(split)
    images, masks = [], []
    for e in entries:
        img, msk = e.load()
        if size is not None:
            img, msk = resize(img, size, depth=depth), resize(msk, size, mask=True, depth=depth)
        images.append(img)
        masks.append(msk)
    if not entries:
        return np.zeros((0, 0, 0)), np.zeros((0, 0, 0), dtype=np.uint8), entries
    shapes = {a.shape for a in images}
    if len(shapes) != 1:
        raise ShapeError(f"{split} split mixes image sizes {sorted(shapes)}; pass a resize target")
    return np.stack(images), np.stack(masks), entries
