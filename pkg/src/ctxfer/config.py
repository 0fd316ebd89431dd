"""Pipeline configuration: one TOML file with typed sections.

Section seeds default to the top-level ``seed``; a ``--seed`` override
replaces all of them. :meth:`PipelineConfig.to_dict` is fully resolved and
feeds back into :meth:`PipelineConfig.from_dict` unchanged.
"""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import tomli

from .augment import AugmentConfig
from .dataset import ClassLabel
from .errors import ConfigError
from .model import BackboneSpec, HeadSpec
from .training import TrainConfig


@dataclass(frozen=True)
class DatasetSection:
    positive_dir: str = "COVID"
    negative_dir: str = "non-COVID"
    split_ratio: float = None

    def __post_init__(self):
        if self.positive_dir == self.negative_dir:
            raise ConfigError("dataset.positive_dir and negative_dir must differ")
        if self.split_ratio is not None and not 0 < self.split_ratio < 1:
            raise ConfigError("dataset.split_ratio must lie in (0, 1)")

    @property
    def class_dirs(self):
        return {self.positive_dir: ClassLabel.COVID_POSITIVE, self.negative_dir: ClassLabel.COVID_NEGATIVE}


@dataclass(frozen=True)
class CompareSection:
    fixtures: str = None  # "builtin" or a path to a fixtures JSON file
    runs: tuple = ()
    include_current: bool = True

    def __post_init__(self):
        object.__setattr__(self, "runs", tuple(self.runs))


@dataclass(frozen=True)
class PipelineConfig:
    dataset_root: str
    input_size: tuple = (299, 299)
    output_dir: str = "runs"
    seed: int = 0
    name: str = "Proposed Model"
    dataset: DatasetSection = field(default_factory=DatasetSection)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    backbone: BackboneSpec = field(default_factory=BackboneSpec)
    head: HeadSpec = field(default_factory=HeadSpec)
    training: TrainConfig = field(default_factory=TrainConfig)
    compare: CompareSection = field(default_factory=CompareSection)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        known = {"dataset_root", "input_size", "output_dir", "seed", "name",
                 "dataset", "augment", "backbone", "head", "training", "compare"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "dataset_root" not in d:
            raise ConfigError("dataset_root is required")
        seed = int(d.get("seed", 0))
        size = tuple(int(v) for v in d.get("input_size", (299, 299)))

        def section(name, ctor, seeded=False, **extra):
            body = dict(d.get(name, {}))
            if seeded:
                body.setdefault("seed", seed)
            body.update(extra)
            try:
                return ctor(body)
            except TypeError as exc:
                raise ConfigError(f"[{name}] {exc}") from None

        return cls(
            dataset_root=str(d["dataset_root"]),
            input_size=size,
            output_dir=str(d.get("output_dir", "runs")),
            seed=seed,
            name=str(d.get("name", "Proposed Model")),
            dataset=section("dataset", lambda b: DatasetSection(**b)),
            augment=section("augment", AugmentConfig.from_dict, seeded=True),
            backbone=section("backbone", lambda b: BackboneSpec(**b), seeded=True, input_size=size),
            head=section("head", lambda b: HeadSpec(**b)),
            training=section("training", TrainConfig.from_dict, seeded=True),
            compare=section("compare", lambda b: CompareSection(**b)),
        )

    def to_dict(self):
        backbone = self.backbone.to_dict()
        backbone.pop("input_size")
        return {
            "dataset_root": self.dataset_root,
            "input_size": list(self.input_size),
            "output_dir": self.output_dir,
            "seed": self.seed,
            "name": self.name,
            "dataset": asdict(self.dataset),
            "augment": self.augment.to_dict(),
            "backbone": backbone,
            "head": self.head.to_dict(),
            "training": self.training.to_dict(),
            "compare": {**asdict(self.compare), "runs": list(self.compare.runs)},
        }

    @property
    def run_id(self):
        """Content hash of everything that shapes the results (not the output location)."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("compare")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    @property
    def run_dir(self):
        return Path(self.output_dir) / self.run_id


def _drop_seeds(d):
    for name in ("augment", "backbone", "training"):
        d.get(name, {}).pop("seed", None)


def load_config(path, out=None, seed=None):
    """Read a TOML config and apply command-line overrides."""
    path = Path(path)
    try:
        raw = tomli.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    base = path.parent
    for key in ("dataset_root", "output_dir"):
        if key in raw and not Path(raw[key]).is_absolute():
            raw[key] = os.path.normpath(base / raw[key])
    weights = raw.get("backbone", {}).get("weights")
    if weights and weights != "RANDOM" and (base / weights).is_file():
        raw["backbone"]["weights"] = os.path.normpath(base / weights)
    compare = raw.get("compare", {})
    if compare.get("fixtures") not in (None, "builtin"):
        compare["fixtures"] = os.path.normpath(base / compare["fixtures"])
    if "runs" in compare:
        compare["runs"] = [os.path.normpath(base / r) for r in compare["runs"]]
    if out is not None:
        raw["output_dir"] = str(out)
    if seed is not None:
        raw["seed"] = int(seed)
        _drop_seeds(raw)
    return PipelineConfig.from_dict(raw)
