"""Label-preserving affine augmentation: zoom, shear, shift and horizontal flip."""

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, EmptyDataset, SingularTransform
from .kernels import CONSTANT, NEAREST_EDGE, warp_affine

FILL_MODES = {"nearest": NEAREST_EDGE, "constant": CONSTANT}


@dataclass(frozen=True)
class AugmentConfig:
    zoom_range: float = 0.2
    shear_range: float = 11.46  # degrees (0.2 rad)
    shift_range: float = 0.2
    vshift_range: float = None  # None: same as shift_range
    hflip: bool = True
    fill: str = "nearest"
    fill_value: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.vshift_range is None:
            object.__setattr__(self, "vshift_range", self.shift_range)
        for name in ("zoom_range", "shear_range", "shift_range", "vshift_range"):
            if getattr(self, name) < 0:
                raise ConfigError(f"augment.{name} must be >= 0")
        if self.zoom_range >= 1:
            raise ConfigError("augment.zoom_range must be < 1")
        if self.shear_range >= 90:
            raise ConfigError("augment.shear_deg must be < 90")
        if self.fill not in FILL_MODES:
            raise ConfigError(f"augment.fill must be one of {sorted(FILL_MODES)}")
        if not 0.0 <= self.fill_value <= 1.0:
            raise ConfigError("augment.fill_value must lie in [0, 1]")

    @property
    def is_identity(self):
        return not (self.zoom_range or self.shear_range or self.shift_range or self.vshift_range or self.hflip)

    def to_dict(self):
        d = asdict(self)
        d["shear_deg"] = d.pop("shear_range")
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "shear_deg" in d:
            d["shear_range"] = d.pop("shear_deg")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"augment section: {exc}") from None


@dataclass(frozen=True)
class AffineTransform:
    """2x3 map from output pixel ``(x, y, 1)`` to the input coordinate it samples."""

    matrix: np.ndarray

    @classmethod
    def identity(cls):
        return cls(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    @classmethod
    def hflip(cls, width):
        return cls(np.array([[-1.0, 0.0, width - 1.0], [0.0, 1.0, 0.0]]))

    @classmethod
    def shift(cls, dx, dy):
        # content moves by (dx, dy); sampling looks back by the same amount
        return cls(np.array([[1.0, 0.0, -dx], [0.0, 1.0, -dy]]))

    @property
    def determinant(self):
        m = self.matrix
        return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]


def _h(m):
    return np.vstack([m, [0.0, 0.0, 1.0]])


def centered_inverse_warp(size, zoom=1.0, shear_deg=0.0, shift=(0.0, 0.0), flip=False):
    """Inverse-warp matrix of ``flip . shift . shear . zoom`` about the image centre.

    ``zoom`` > 1 magnifies; ``shift`` is in pixels; ``shear_deg`` tilts rows
    along x.
    """
    h, w = size
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    t = math.tan(math.radians(shear_deg))
    # inverses of each forward step, applied in reverse order
    to_center = np.array([[1.0, 0.0, -cx], [0.0, 1.0, -cy]])
    unflip = np.array([[-1.0 if flip else 1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    unshift = np.array([[1.0, 0.0, -shift[0]], [0.0, 1.0, -shift[1]]])
    unshear = np.array([[1.0, -t, 0.0], [0.0, 1.0, 0.0]])
    unzoom = np.array([[1.0 / zoom, 0.0, 0.0], [0.0, 1.0 / zoom, 0.0]])
    from_center = np.array([[1.0, 0.0, cx], [0.0, 1.0, cy]])
    m = _h(from_center) @ _h(unzoom) @ _h(unshear) @ _h(unshift) @ _h(unflip) @ _h(to_center)
    return AffineTransform(m[:2].copy())


def sample_transform(config, rng, size):
    """Draw one transform for an image of ``size = (H, W)``.

    Every draw consumes the same number of variates so streams stay aligned
    whatever the configuration.
    """
    h, w = size
    zoom = rng.uniform(1.0 - config.zoom_range, 1.0 + config.zoom_range)
    shear = rng.uniform(-config.shear_range, config.shear_range)
    dx = rng.uniform(-config.shift_range, config.shift_range) * w
    dy = rng.uniform(-config.vshift_range, config.vshift_range) * h
    flip = bool(rng.random() < 0.5) and config.hflip
    return centered_inverse_warp(size, zoom, shear, (dx, dy), flip)


def apply_affine(image, t, fill="nearest", fill_value=0.0):
    """Resample ``image`` (``H x W x C`` in [0, 1]) through ``t``."""
    image = np.asarray(image)
    if image.size == 0:
        raise ValueError("empty image")
    if abs(t.determinant) < 1e-12:
        raise SingularTransform(f"non-invertible transform, det={t.determinant}")
    return warp_affine(image, t.matrix, FILL_MODES[fill], fill_value, 0.0, 1.0)


def augmented_batches(samples, config, batch_size, rng):
    """Yield one epoch of shuffled ``(pixels, targets)`` batches.

    Call once per epoch with the same generator to get a fresh shuffle.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    samples = list(samples)
    if not samples:
        raise EmptyDataset("no training samples")
    order = rng.permutation(len(samples))
    for start in range(0, len(samples), batch_size):
        idx = order[start:start + batch_size]
        images = []
        for i in idx:
            img = samples[i].pixels
            if not config.is_identity:
                t = sample_transform(config, rng, img.shape[:2])
                img = apply_affine(img, t, config.fill, config.fill_value)
            images.append(img)
        targets = np.array([samples[i].target for i in idx], dtype=np.float64)
        yield np.stack(images), targets
