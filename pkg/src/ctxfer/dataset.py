"""Discovery, loading and splitting of the two-class CT image corpus.

Expected layout::

    root/train/<positive dir>/*.png|jpg|jpeg
    root/train/<negative dir>/...
    root/val/<positive dir>/...
    root/val/<negative dir>/...

A root that holds the two class folders directly is treated as a single pool
and split with :func:`hold_out_split` when a ratio is given.
"""

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError, DecodeError, DegenerateSplit, EmptyClass, MissingClassDirectory
from .kernels import resize_bilinear

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
SPLITS = ("train", "val")
DEFAULT_INPUT_SIZE = (299, 299)


class ClassLabel(enum.Enum):
    COVID_POSITIVE = "COVID_POSITIVE"
    COVID_NEGATIVE = "COVID_NEGATIVE"

    @property
    def target(self):
        return 1 if self is ClassLabel.COVID_POSITIVE else 0


DEFAULT_CLASS_DIRS = {"COVID": ClassLabel.COVID_POSITIVE, "non-COVID": ClassLabel.COVID_NEGATIVE}


def load_image(path, target_size=DEFAULT_INPUT_SIZE):
    """Decode ``path`` to an ``H x W x 3`` float32 array in ``[0, 1]``.

    Grayscale sources are replicated across channels; resizing is bilinear.
    """
    h, w = target_size
    if h < 1 or w < 1:
        raise ValueError(f"target size must be positive, got {target_size}")
    try:
        with Image.open(path) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    if rgb.shape[:2] != (h, w):
        rgb = resize_bilinear(rgb, h, w)
    return (rgb / 255.0).astype(np.float32)


@dataclass(eq=False)
class ImageSample:
    path: Path
    label: ClassLabel
    target_size: tuple = DEFAULT_INPUT_SIZE
    _pixels: np.ndarray = field(default=None, repr=False)

    @property
    def pixels(self):
        if self._pixels is None:
            self._pixels = load_image(self.path, self.target_size)
        return self._pixels

    @property
    def target(self):
        return self.label.target


def _counts(samples):
    out = {label.value: 0 for label in ClassLabel}
    for s in samples:
        out[s.label.value] += 1
    return out


@dataclass
class DatasetManifest:
    train_samples: list
    val_samples: list
    warnings: list = field(default_factory=list)

    @property
    def counts(self):
        return {"train": _counts(self.train_samples), "val": _counts(self.val_samples)}

    def to_json(self):
        return json.dumps(self.counts, indent=2, sort_keys=True) + "\n"


def _readable(path):
    try:
        with Image.open(path) as im:
            im.verify()
        return True
    except (UnidentifiedImageError, OSError, SyntaxError):
        return False


def _scan_split(split_dir, class_dirs, target_size, warnings):
    samples = []
    for dirname, label in class_dirs.items():
        cls_dir = split_dir / dirname
        if not cls_dir.is_dir():
            raise MissingClassDirectory(f"{split_dir} has no class folder {dirname!r}")
        found = 0
        for path in sorted(p for p in cls_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES):
            if not _readable(path):
                warnings.append(f"unreadable image skipped: {path}")
                log.warning("unreadable image skipped: %s", path)
                continue
            samples.append(ImageSample(path, label, tuple(target_size)))
            found += 1
        if found == 0:
            raise EmptyClass(f"{cls_dir} contains no readable images")
    samples.sort(key=lambda s: str(s.path))
    return samples


def scan_dataset(root, class_dirs=None, target_size=DEFAULT_INPUT_SIZE, split_ratio=None, seed=0):
    """Enumerate ``root`` into a :class:`DatasetManifest`.

    Samples are ordered lexicographically by path. With ``split_ratio`` set and
    no ``train/`` or ``val/`` folder present, ``root`` is read as one pool and
    split per class.
    """
    root = Path(root)
    class_dirs = dict(class_dirs or DEFAULT_CLASS_DIRS)
    if not root.is_dir():
        raise DataError(f"dataset root {root} does not exist")
    warnings = []
    has_splits = any((root / s).is_dir() for s in SPLITS)
    if split_ratio is not None and not has_splits:
        pool = _scan_split(root, class_dirs, target_size, warnings)
        train, val = hold_out_split(pool, split_ratio, seed)
        return DatasetManifest(train, val, warnings)
    for split in SPLITS:
        if not (root / split).is_dir():
            raise MissingClassDirectory(f"{root} has no {split}/ folder")
    train = _scan_split(root / "train", class_dirs, target_size, warnings)
    val = _scan_split(root / "val", class_dirs, target_size, warnings)
    return DatasetManifest(train, val, warnings)


def hold_out_split(pool, ratio, seed=0):
    """Stratified, seeded split of ``pool`` into ``(train, val)``.

    Each class contributes ``round(n * ratio)`` samples to train. Both outputs
    are sorted by path.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    pool = list(pool)
    if not pool:
        raise DegenerateSplit("cannot split an empty pool")
    rng = np.random.default_rng(seed)
    train, val = [], []
    for label in ClassLabel:
        members = sorted((s for s in pool if s.label is label), key=lambda s: str(s.path))
        n_train = round(len(members) * ratio)
        if n_train == 0 or n_train == len(members):
            raise DegenerateSplit(
                f"class {label.value} with {len(members)} samples leaves an empty side at ratio {ratio}"
            )
        order = rng.permutation(len(members))
        train.extend(members[i] for i in order[:n_train])
        val.extend(members[i] for i in order[n_train:])
    train.sort(key=lambda s: str(s.path))
    val.sort(key=lambda s: str(s.path))
    return train, val


def stack_samples(samples):
    """``(pixels, targets)`` arrays for a sequence of samples."""
    if not samples:
        return np.zeros((0,) + tuple(DEFAULT_INPUT_SIZE) + (3,), np.float32), np.zeros(0, np.float64)
    x = np.stack([s.pixels for s in samples])
    y = np.array([s.target for s in samples], dtype=np.float64)
    return x, y
