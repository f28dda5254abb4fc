import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from lgan.data import (
    ManifestEntry,
    binarize,
    load_manifest,
    normalize_image,
    read_image,
    read_mask,
    resize,
    write_image,
    write_manifest,
    write_mask,
)
from lgan.errors import EmptyManifest, InvalidPixel, ManifestError, MissingFile, ShapeError


def test_normalize_examples():
    assert np.all(normalize_image(np.zeros((4, 4), dtype=np.uint8), 8) == 0.0)
    assert normalize_image(np.full((2, 2), 255), 8)[0, 0] == 1.0
    assert normalize_image(np.full((1, 1), 128), 8)[0, 0] == pytest.approx(128 / 255)
    assert normalize_image(np.full((1, 1), 65535), 16)[0, 0] == 1.0


def test_normalize_rejects_out_of_range():
    with pytest.raises(InvalidPixel):
        normalize_image(np.array([[256]]), 8)
    with pytest.raises(InvalidPixel):
        normalize_image(np.array([[-1]]), 8)
    with pytest.raises(InvalidPixel):
        normalize_image(np.zeros((2, 2)), 12)


@given(hnp.arrays(np.int64, (5, 5), elements=st.integers(0, 255)), hnp.arrays(np.int64, (5, 5), elements=st.integers(0, 255)))
def test_normalize_monotone(a, b):
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    assert np.all(normalize_image(lo) <= normalize_image(hi))


def test_binarize_examples():
    assert binarize(np.full((3, 3), 0.9)).min() == 1
    assert binarize(np.full((3, 3), 0.1)).max() == 0
    assert binarize(np.array([0.49, 0.50, 0.51]), 0.5).tolist() == [0, 1, 1]


@given(
    hnp.arrays(np.float64, (4, 4), elements=st.floats(0, 1)),
    st.floats(0.01, 0.99),
    st.floats(0.01, 0.99),
)
def test_binarize_idempotent(p, t1, t2):
    once = binarize(p, t1)
    assert np.array_equal(binarize(once, t2), once)


def test_resize_examples():
    img = np.random.default_rng(0).random((224, 224))
    assert np.array_equal(resize(img, 224), img)
    const = np.full((40, 40), 0.37)
    assert np.allclose(resize(const, 64), 0.37)
    assert np.allclose(resize(np.full((64, 64), 0.37), 32), 0.37)
    small = np.array([[1, 1], [0, 0]], dtype=np.uint8)
    big = resize(small, 8, mask=True)
    assert big.dtype == np.uint8
    assert np.all(big[:4] == 1) and np.all(big[4:] == 0)


def test_resize_nearest_2x2_to_4x4():
    # nearest source of output row r is floor(r * 2 / 4)
    src = np.array([[1, 1], [0, 0]], dtype=np.uint8)
    import torch
    import torch.nn.functional as F

    out = F.interpolate(torch.tensor(src, dtype=torch.float64)[None, None], size=(4, 4), mode="nearest")[0, 0]
    assert out.tolist() == [[1, 1, 1, 1], [1, 1, 1, 1], [0, 0, 0, 0], [0, 0, 0, 0]]


def test_resize_rejects_bad_sizes():
    with pytest.raises(ShapeError):
        resize(np.zeros((16, 16)), 4)
    with pytest.raises(ShapeError):
        resize(np.zeros((16, 16)), 36, depth=3)


@given(hnp.arrays(np.uint8, (16, 16), elements=st.integers(0, 1)))
def test_resize_identity_on_masks(m):
    assert np.array_equal(resize(m, 16, mask=True), m)


def test_png_roundtrip(tmp_path):
    img = np.arange(256, dtype=np.float64).reshape(16, 16) / 255
    write_image(tmp_path / "a.png", img)
    assert np.array_equal(read_image(tmp_path / "a.png"), img)
    mask = (img > 0.5).astype(np.uint8)
    write_mask(tmp_path / "m.png", mask)
    assert np.array_equal(read_mask(tmp_path / "m.png"), mask)


def _pair(tmp_path, name):
    write_image(tmp_path / f"{name}.png", np.zeros((8, 8)))
    write_mask(tmp_path / f"{name}_m.png", np.zeros((8, 8)))
    return f"{name}.png", f"{name}_m.png"


def test_manifest_empty(tmp_path):
    (tmp_path / "m.tsv").write_text("")
    with pytest.raises(EmptyManifest):
        load_manifest(tmp_path / "m.tsv")


def test_manifest_two_records_in_order(tmp_path):
    a, am = _pair(tmp_path, "b")
    b, bm = _pair(tmp_path, "a")
    (tmp_path / "m.tsv").write_text(f"{a}\t{am}\ts1\t0\ttrain\n{b}\t{bm}\ts2\t0\ttest\n")
    man = load_manifest(tmp_path / "m.tsv")
    assert len(man) == 2
    assert [e.image_path.name for e in man] == ["b.png", "a.png"]
    assert [e.split for e in man] == ["train", "test"]


def test_manifest_missing_mask_names_path(tmp_path):
    a, _ = _pair(tmp_path, "a")
    (tmp_path / "m.tsv").write_text(f"{a}\tnope.png\ts1\t0\ttrain\n")
    with pytest.raises(MissingFile, match="nope.png"):
        load_manifest(tmp_path / "m.tsv")


@pytest.mark.parametrize(
    "line, msg",
    [
        ("a.png\ta_m.png\ts1\t0\n", "5 tab-separated"),
        ("a.png\ta_m.png\ts1\tx\ttrain\n", "not an integer"),
        ("a.png\ta_m.png\ts1\t0\tval\n", "train or test"),
    ],
)
def test_manifest_malformed_reports_line(tmp_path, line, msg):
    _pair(tmp_path, "a")
    (tmp_path / "m.tsv").write_text("# header comment\n" + line)
    with pytest.raises(ManifestError, match=msg) as err:
        load_manifest(tmp_path / "m.tsv")
    assert ":2:" in str(err.value)


def test_manifest_rejects_scan_in_both_splits(tmp_path):
    a, am = _pair(tmp_path, "a")
    b, bm = _pair(tmp_path, "b")
    (tmp_path / "m.tsv").write_text(f"{a}\t{am}\ts1\t0\ttrain\n{b}\t{bm}\ts1\t1\ttest\n")
    with pytest.raises(ManifestError, match="s1"):
        load_manifest(tmp_path / "m.tsv")


def test_manifest_write_read_roundtrip(tmp_path):
    a, am = _pair(tmp_path, "a")
    entries = [ManifestEntry((tmp_path / a).resolve(), (tmp_path / am).resolve(), "s9", 3, "test")]
    write_manifest(tmp_path / "m.tsv", entries)
    assert (tmp_path / "m.tsv").read_text() == "a.png\ta_m.png\ts9\t3\ttest\n"
    man = load_manifest(tmp_path / "m.tsv")
    assert man.entries[0].image_path == entries[0].image_path
    scans = man.scans("test")
    assert scans[0].scan_id == "s9" and len(scans[0].slices) == 1
