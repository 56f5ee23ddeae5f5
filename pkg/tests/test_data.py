import logging

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from cerfgan.data import (AugmentSpec, DomainDataset, DomainSampler, augment, center_view, denormalize, iterations_per_epoch,
                          load_domains, load_mnist, make_toy_translation_dataset, normalize, read_idx,
                          scan_domain_folder, write_domain_folder, write_idx)


@settings(max_examples=30)
@given(arrays(np.uint8, st.tuples(st.integers(1, 8), st.integers(1, 8), st.just(3))))
def test_normalize_round_trip(img):
    t = normalize(img)
    assert t.shape == (3,) + img.shape[:2]
    assert t.min() >= -1 and t.max() <= 1
    assert np.array_equal(denormalize(t), img)


def test_augment_shape_range_and_determinism():
    img = np.random.default_rng(0).integers(0, 256, (256, 256, 3), dtype=np.uint8)
    spec = AugmentSpec()
    out = augment(img, spec, np.random.default_rng(5))
    assert out.shape == (3, 128, 128)
    assert out.min() >= -1 and out.max() <= 1
    assert torch.equal(out, augment(img, spec, np.random.default_rng(5)))


def test_constant_gray_maps_to_zero():
    # 127.5 cannot be stored in uint8; 127 and 128 bracket it at -1/255 and +1/255
    for v in (127, 128):
        out = augment(np.full((150, 150, 3), v, np.uint8), AugmentSpec(), np.random.default_rng(0))
        assert out.abs().max().item() == pytest.approx(1 / 255, abs=1e-6)


def test_augment_mirror_probability():
    img = np.zeros((64, 64, 3), np.uint8)
    img[:, :32] = 255
    spec = AugmentSpec(64, 64, 0.5)
    rng = np.random.default_rng(1)
    flips = sum(augment(img, spec, rng)[0, 0, 0].item() < 0 for _ in range(2000))
    assert 900 < flips < 1100
    assert all(augment(img, AugmentSpec(64, 64, 0.0), rng)[0, 0, 0] > 0 for _ in range(20))


def test_augment_rejects_small_images_and_bad_specs():
    with pytest.raises(ValueError):
        AugmentSpec(crop=128, resize_to=100)
    with pytest.raises(ValueError):
        AugmentSpec(mirror_prob=1.5)


def _write_images(folder, n, size=(20, 30)):
    folder.mkdir(parents=True, exist_ok=True)
    for j in range(n):
        Image.fromarray(np.full(size + (3,), j % 256, np.uint8)).save(folder / f"{j:03d}.png")


def test_scan_folder_counts_and_sorts(tmp_path):
    _write_images(tmp_path / "sketch", 88)
    (tmp_path / "sketch" / "notes.txt").write_text("not an image")
    ds = scan_domain_folder(tmp_path / "sketch", 1)
    assert len(ds) == 88 and ds.domain == 1
    assert ds.files == sorted(ds.files)


def test_scan_folder_errors(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(ValueError, match="no images"):
        scan_domain_folder(tmp_path / "empty", 0)
    with pytest.raises(FileNotFoundError):
        scan_domain_folder(tmp_path / "absent", 0)
    (tmp_path / "bad").mkdir()
    (tmp_path / "bad" / "x.png").write_bytes(b"garbage")
    with pytest.raises(ValueError, match="failed to decode"):
        scan_domain_folder(tmp_path / "bad", 0)


def test_scan_folder_skips_corrupt_files(tmp_path, caplog):
    _write_images(tmp_path / "mixed", 3)
    (tmp_path / "mixed" / "zz.jpg").write_bytes(b"\x00\x01")
    with caplog.at_level(logging.WARNING):
        ds = scan_domain_folder(tmp_path / "mixed", 0)
    assert len(ds) == 3
    assert "zz.jpg" in caplog.text


def test_grayscale_files_are_channel_replicated(tmp_path):
    (tmp_path / "g").mkdir()
    Image.fromarray(np.arange(64, dtype=np.uint8).reshape(8, 8)).save(tmp_path / "g" / "a.png")
    img = scan_domain_folder(tmp_path / "g", 0).raw(0)
    assert img.shape == (8, 8, 3)
    assert np.array_equal(img[..., 0], img[..., 2])


def test_load_domains_missing_folder(tmp_path):
    _write_images(tmp_path / "A", 2)
    with pytest.raises(FileNotFoundError, match="B"):
        load_domains(tmp_path, ["A", "B"])


def test_color_inversion_oracle():
    a, b = make_toy_translation_dataset("color-inversion", 16, np.random.default_rng(0))
    assert a.images.shape == (16, 64, 64, 3)
    assert np.array_equal(b.images, 255 - a.images)
    # negation in [-1, 1] is the perfect translator, exact up to float32 rounding of v/127.5
    for j in range(len(a)):
        ta, tb = normalize(a.raw(j)), normalize(b.raw(j))
        assert (-ta - tb).abs().max() < 1e-6
        assert np.array_equal(denormalize(-ta), b.raw(j))
    # background is black in A
    assert (a.images.reshape(16, -1, 3).min(axis=1) == 0).all()


def test_shape_fill_oracle():
    a, b = make_toy_translation_dataset("shape-fill", 16, np.random.default_rng(1))
    # outlines are a subset of the filled shapes and share their colors
    on_a = a.images.any(-1)
    assert np.array_equal(a.images[on_a], b.images[on_a])
    assert (b.images.any(-1).sum() > on_a.sum())


def test_toy_errors_and_determinism():
    with pytest.raises(ValueError, match="unknown toy kind"):
        make_toy_translation_dataset("stripes", 16, np.random.default_rng(0))
    with pytest.raises(ValueError):
        make_toy_translation_dataset("color-inversion", 15, np.random.default_rng(0))
    x = make_toy_translation_dataset("shape-fill", 16, np.random.default_rng(9))[0].images
    y = make_toy_translation_dataset("shape-fill", 16, np.random.default_rng(9))[0].images
    assert np.array_equal(x, y)


def test_toy_folder_round_trip(tmp_path):
    a, _ = make_toy_translation_dataset("color-inversion", 16, np.random.default_rng(0))
    write_domain_folder(a, tmp_path / "A")
    back = scan_domain_folder(tmp_path / "A", 0)
    assert len(back) == 16
    assert np.array_equal(back.raw(3), a.raw(3))


def test_idx_round_trip(tmp_path):
    imgs = np.random.default_rng(0).integers(0, 256, (5, 28, 28), dtype=np.uint8)
    labels = np.arange(5, dtype=np.uint8)
    write_idx(tmp_path / "train-images-idx3-ubyte.gz", imgs)
    write_idx(tmp_path / "train-labels-idx1-ubyte", labels)
    raw = (tmp_path / "train-labels-idx1-ubyte").read_bytes()
    assert raw[:4] == b"\x00\x00\x08\x01"
    x, y = load_mnist(tmp_path, "train")
    assert np.array_equal(x, imgs) and np.array_equal(y, labels)
    with pytest.raises(FileNotFoundError):
        load_mnist(tmp_path, "test")


def test_idx_bad_magic_and_truncation(tmp_path):
    (tmp_path / "bad").write_bytes(b"\x00\x00\x09\x03" + b"\x00" * 8)
    with pytest.raises(ValueError, match="magic"):
        read_idx(tmp_path / "bad")
    (tmp_path / "short").write_bytes(b"\x00\x00\x08\x01\x00\x00\x00\x05\x01\x02")
    with pytest.raises(ValueError, match="expected 5"):
        read_idx(tmp_path / "short")


def test_sampler_visits_every_image_per_pass():
    imgs = np.stack([np.full((64, 64, 3), j, np.uint8) for j in range(8)])
    ds = DomainDataset(0, images=imgs)
    sampler = DomainSampler([ds], AugmentSpec(64, 64, 0.0), 4, np.random.default_rng(0))
    seen = torch.cat([sampler.batch(0), sampler.batch(0)])
    values = sorted(round(denormalize(x)[0, 0, 0]) for x in seen)
    assert values == list(range(8))


def test_iterations_per_epoch_uses_largest_domain():
    a = DomainDataset(0, images=np.zeros((10, 4, 4, 3), np.uint8))
    b = DomainDataset(1, images=np.zeros((17, 4, 4, 3), np.uint8))
    assert iterations_per_epoch([a, b], 4) == 5


def test_center_view_is_deterministic_and_square():
    img = np.random.default_rng(0).integers(0, 256, (100, 80, 3), dtype=np.uint8)
    v = center_view(img, 64)
    assert v.shape == (3, 64, 64)
    assert torch.equal(v, center_view(img, 64))
