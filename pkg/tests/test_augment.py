from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxfer.augment import (
    AffineTransform,
    AugmentConfig,
    apply_affine,
    augmented_batches,
    centered_inverse_warp,
    sample_transform,
)
from ctxfer.dataset import ClassLabel, ImageSample
from ctxfer.errors import ConfigError, EmptyDataset, SingularTransform

IDENTITY = AugmentConfig(zoom_range=0, shear_range=0, shift_range=0, hflip=False)


def stub_samples(n, size=4, seed=0):
    """In-memory samples with distinct pixel content."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        s = ImageSample(f"s{i}", ClassLabel.COVID_POSITIVE if i % 2 else ClassLabel.COVID_NEGATIVE, (size, size))
        s._pixels = ((i + rng.random((size, size, 3))) / (n + 1)).astype(np.float32)
        out.append(s)
    return out


def test_identity_transform_exact(backend, rng):
    img = rng.random((9, 11, 3)).astype(np.float32)
    np.testing.assert_array_equal(apply_affine(img, AffineTransform.identity()), img)
    np.testing.assert_array_equal(apply_affine(img, centered_inverse_warp((9, 11))), img)


def test_double_hflip_bit_exact(backend, rng):
    img = rng.random((8, 13, 3)).astype(np.float32)
    flipped = apply_affine(img, AffineTransform.hflip(13))
    np.testing.assert_array_equal(flipped, img[:, ::-1])
    np.testing.assert_array_equal(apply_affine(flipped, AffineTransform.hflip(13)), img)
    np.testing.assert_array_equal(apply_affine(img, centered_inverse_warp((8, 13), flip=True)), img[:, ::-1])


def test_flip_2x2():
    a, b, c, d = 0.1, 0.2, 0.3, 0.4
    img = np.array([[a, b], [c, d]])[..., None]
    out = apply_affine(img, AffineTransform.hflip(2))[..., 0]
    np.testing.assert_array_equal(out, [[b, a], [d, c]])


def test_one_pixel_right_shift_on_ramp():
    ramp = (np.arange(9, dtype=np.float64).reshape(3, 3) / 8)[..., None]
    out = apply_affine(ramp, centered_inverse_warp((3, 3), shift=(1.0, 0.0)))[..., 0]
    # out(y, x) = in(y, x - 1) with the left column clamped to the edge
    expected = np.stack([ramp[:, 0, 0], ramp[:, 0, 0], ramp[:, 1, 0]], axis=1)
    np.testing.assert_array_equal(out, expected)
    const = apply_affine(ramp, centered_inverse_warp((3, 3), shift=(1.0, 0.0)), "constant", 0.0)[..., 0]
    np.testing.assert_array_equal(const[:, 0], 0.0)
    np.testing.assert_array_equal(const[:, 1:], ramp[:, :2, 0])


def test_composition_matches_hand_matrix():
    t = centered_inverse_warp((5, 5), zoom=2.0, shear_deg=0.0, shift=(1.0, -1.0))
    # inverse of p -> 2(p - c) + c + s with c = 2: q -> (q - s - c)/2 + c
    np.testing.assert_allclose(t.matrix, [[0.5, 0, 0.5], [0, 0.5, 1.5]], atol=1e-12)


def test_singular_rejected():
    with pytest.raises(SingularTransform):
        apply_affine(np.zeros((2, 2, 1)), AffineTransform(np.zeros((2, 3))))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["nearest", "constant"]))
def test_output_range(seed, fill):
    rng = np.random.default_rng(seed)
    cfg = AugmentConfig(fill=fill, fill_value=1.0)
    img = rng.random((10, 12, 3)).astype(np.float32)
    out = apply_affine(img, sample_transform(cfg, rng, (10, 12)), cfg.fill, cfg.fill_value)
    assert out.dtype == np.float32
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_zoom_draws_are_centered():
    cfg = AugmentConfig()
    rng = np.random.default_rng(0)
    zooms = [1.0 / sample_transform(cfg, rng, (10, 10)).matrix[1, 1] for _ in range(10_000)]
    assert abs(np.mean(zooms) - 1.0) < 0.01
    assert 0.8 <= min(zooms) and max(zooms) <= 1.2


def test_batch_count_and_sizes():
    samples = stub_samples(558, size=2)
    sizes = [len(y) for _, y in augmented_batches(samples, IDENTITY, 32, np.random.default_rng(0))]
    assert len(sizes) == 18
    assert sizes == [32] * 17 + [14]


def test_each_epoch_is_a_permutation():
    samples = stub_samples(37, size=3)
    rng = np.random.default_rng(4)
    originals = Counter(s.pixels.tobytes() for s in samples)
    orders = []
    for _ in range(2):
        seen = [img.tobytes() for x, _ in augmented_batches(samples, IDENTITY, 8, rng) for img in x]
        assert Counter(seen) == originals
        orders.append(seen)
    assert orders[0] != orders[1]


def test_identity_config_returns_raw_pixels():
    samples = stub_samples(5, size=3)
    x, y = next(augmented_batches(samples, IDENTITY, 5, np.random.default_rng(0)))
    by_bytes = {s.pixels.tobytes(): s.target for s in samples}
    for img, target in zip(x, y):
        assert by_bytes[img.tobytes()] == target


def test_augmented_batches_deterministic():
    samples = stub_samples(20, size=6)
    cfg = AugmentConfig()
    a = [x for x, _ in augmented_batches(samples, cfg, 7, np.random.default_rng(9))]
    b = [x for x, _ in augmented_batches(samples, cfg, 7, np.random.default_rng(9))]
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)


def test_empty_dataset():
    with pytest.raises(EmptyDataset):
        next(augmented_batches([], IDENTITY, 4, np.random.default_rng(0)))


@pytest.mark.parametrize("kwargs", [{"zoom_range": -0.1}, {"zoom_range": 1.0}, {"shear_range": 90},
                                    {"fill": "wrap"}, {"fill_value": 2.0}])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        AugmentConfig(**kwargs)


def test_config_round_trip():
    cfg = AugmentConfig(zoom_range=0.1, vshift_range=0.05, fill="constant", seed=3)
    assert AugmentConfig.from_dict(cfg.to_dict()) == cfg
