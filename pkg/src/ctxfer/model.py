"""Truncated frozen backbone plus the dense classification head.

Head layout: flatten -> dense(units, activation) -> dropout(rate) -> dense(1, sigmoid).
Head parameters are named like the layers they belong to (``dense/kernel``,
``dense_1/bias``, ...); backbone parameters keep their registry names.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .backbone import FeatureExtractor, get_architecture, load_weights_archive, random_weights
from .errors import ConfigError, ShapeMismatch

RANDOM = "RANDOM"
HEAD_PARAMS = ("dense/kernel", "dense/bias", "dense_1/kernel", "dense_1/bias")
PIXEL_RANGES = ("unit", "symmetric")

_P_LO = np.finfo(np.float64).tiny
_P_HI = 1.0 - 2.0**-53


@dataclass(frozen=True)
class BackboneSpec:
    architecture: str = "inception_v3"
    weights: str = RANDOM
    truncation_node: str = "mixed4"
    frozen: bool = True
    input_size: tuple = (299, 299)
    pixel_range: str = "unit"
    seed: int = 0  # only used for RANDOM weights

    def __post_init__(self):
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        if len(self.input_size) != 2 or min(self.input_size) < 1:
            raise ConfigError(f"input_size must be two positive integers, got {self.input_size}")
        if self.pixel_range not in PIXEL_RANGES:
            raise ConfigError(f"pixel_range must be one of {PIXEL_RANGES}")
        get_architecture(self.architecture).check_node(self.truncation_node)

    def to_dict(self):
        d = asdict(self)
        d["input_size"] = list(self.input_size)
        return d


ACTIVATIONS = ("relu", "tanh", "sigmoid", "linear")


@dataclass(frozen=True)
class HeadSpec:
    dense_units: int = 1024
    dropout_rate: float = 0.2
    activation: str = "relu"
    dtype: str = "float32"
    output_units: int = 1
    output_activation: str = "sigmoid"

    def __post_init__(self):
        if self.dense_units < 1:
            raise ConfigError("head.dense_units must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("head.dropout_rate must lie in [0, 1)")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"head.activation must be one of {ACTIVATIONS}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("head.dtype must be float32 or float64")
        if self.output_units != 1 or self.output_activation != "sigmoid":
            raise ConfigError("the head ends in a single sigmoid unit")

    def to_dict(self):
        return asdict(self)


def head_param_shapes(feature_shape, head):
    d = int(np.prod(feature_shape))
    return {
        "dense/kernel": (d, head.dense_units),
        "dense/bias": (head.dense_units,),
        "dense_1/kernel": (head.dense_units, 1),
        "dense_1/bias": (1,),
    }


def truncate_backbone(backbone_spec):
    """Registry sub-graph ending at the configured truncation node."""
    return get_architecture(backbone_spec.architecture).truncate(backbone_spec.truncation_node)


def describe_classifier(backbone_spec, head_spec):
    """Per-layer summary computed from shapes alone; allocates no weights."""
    graph = truncate_backbone(backbone_spec)
    size = backbone_spec.input_size
    layers = graph.summary(size, trainable=not backbone_spec.frozen)
    feature_shape = graph.shapes(size)[graph.output]
    flat = int(np.prod(feature_shape))
    hs = head_param_shapes(feature_shape, head_spec)
    n_dense = int(np.prod(hs["dense/kernel"])) + head_spec.dense_units
    layers += [
        {"name": "flatten", "op": "flatten", "output_shape": [flat], "params": 0, "trainable": False},
        {"name": "dense", "op": "dense", "output_shape": [head_spec.dense_units], "params": n_dense,
         "trainable": True},
        {"name": "dropout", "op": "dropout", "output_shape": [head_spec.dense_units], "params": 0,
         "trainable": False},
        {"name": "dense_1", "op": "dense", "output_shape": [1], "params": head_spec.dense_units + 1,
         "trainable": True},
    ]
    return {
        "architecture": backbone_spec.architecture,
        "truncation_node": backbone_spec.truncation_node,
        "input_shape": list(size) + [3],
        "feature_shape": list(feature_shape),
        "layers": layers,
        "total_params": sum(l["params"] for l in layers),
        "trainable_params": sum(l["params"] for l in layers if l["trainable"]),
        "head_params": n_dense + head_spec.dense_units + 1,
    }


@dataclass
class ClassifierModel:
    backbone: BackboneSpec
    head: HeadSpec
    extractor: FeatureExtractor
    params: dict
    trainable_mask: dict = field(default_factory=dict)

    @property
    def feature_shape(self):
        return self.extractor.feature_shape

    def head_params(self):
        return {k: self.params[k] for k in HEAD_PARAMS}

    def count_params(self, trainable_only=False):
        return sum(
            int(v.size) for k, v in self.params.items() if self.trainable_mask[k] or not trainable_only
        )

    def summary(self):
        return describe_classifier(self.backbone, self.head)

    def summary_json(self):
        return json.dumps(self.summary(), indent=2) + "\n"


def glorot_uniform(rng, shape, dtype):
    fan_in, fan_out = shape
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    out = np.empty(shape, dtype=dtype)
    rows = max(1, (1 << 22) // max(fan_out, 1))
    for start in range(0, fan_in, rows):
        block = rng.random((min(rows, fan_in - start), fan_out), dtype=dtype)
        out[start:start + block.shape[0]] = (2.0 * block - 1.0) * limit
    return out


def init_head(feature_shape, head, seed=0):
    rng = np.random.default_rng(seed)
    dtype = np.dtype(head.dtype)
    shapes = head_param_shapes(feature_shape, head)
    return {
        "dense/kernel": glorot_uniform(rng, shapes["dense/kernel"], dtype),
        "dense/bias": np.zeros(shapes["dense/bias"], dtype),
        "dense_1/kernel": glorot_uniform(rng, shapes["dense_1/kernel"], dtype),
        "dense_1/bias": np.zeros(shapes["dense_1/bias"], dtype),
    }


def build_classifier(backbone_spec, head_spec, seed=0, head_params=None):
    """Assemble backbone (loaded or seeded-random) and head (Glorot-uniform, zero bias)."""
    if not backbone_spec.frozen:
        raise ConfigError("backbone fine-tuning is not supported; set frozen = true")
    graph = truncate_backbone(backbone_spec)
    size = backbone_spec.input_size
    if backbone_spec.weights == RANDOM:
        weights = random_weights(graph, size, backbone_spec.seed)
    else:
        weights = load_weights_archive(backbone_spec.weights, graph, size)
    extractor = FeatureExtractor(graph, weights, size)
    if head_params is None:
        head_params = init_head(extractor.feature_shape, head_spec, seed)
    else:
        expected = head_param_shapes(extractor.feature_shape, head_spec)
        for k, shape in expected.items():
            if k not in head_params or tuple(head_params[k].shape) != shape:
                raise ConfigError(f"head parameter {k} missing or not of shape {shape}")
        head_params = {k: np.asarray(head_params[k], dtype=head_spec.dtype) for k in HEAD_PARAMS}
    params = dict(weights)
    params.update(head_params)
    mask = {k: k in HEAD_PARAMS for k in params}
    return ClassifierModel(backbone_spec, head_spec, extractor, params, mask)


def to_model_input(pixels, pixel_range="unit"):
    x = np.asarray(pixels, dtype=np.float32)
    return x if pixel_range == "unit" else x * 2.0 - 1.0


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    p = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return np.clip(p, _P_LO, _P_HI)


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return (1.0 / (1.0 + np.exp(-z))).astype(z.dtype)
    return z


def _activation_grad(z, a, kind):
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    if kind == "tanh":
        return 1 - a * a
    if kind == "sigmoid":
        return a * (1 - a)
    return np.ones_like(z)


def head_forward(params, features, head, training=False, rng=None):
    """Return ``(probabilities, cache)`` for a feature batch."""
    dtype = params["dense/kernel"].dtype
    f = np.asarray(features).reshape(len(features), -1).astype(dtype, copy=False)
    if f.shape[1] != params["dense/kernel"].shape[0]:
        raise ShapeMismatch(f"{f.shape[1]} features vs dense input {params['dense/kernel'].shape[0]}")
    z1 = f @ params["dense/kernel"] + params["dense/bias"]
    a1 = _activate(z1, head.activation)
    mask = None
    if training and head.dropout_rate > 0:
        if rng is None:
            raise ValueError("training mode with dropout needs a random generator")
        keep = 1.0 - head.dropout_rate
        mask = (rng.random(a1.shape) >= head.dropout_rate).astype(dtype) / dtype.type(keep)
        a1d = a1 * mask
    else:
        a1d = a1
    z2 = (a1d @ params["dense_1/kernel"] + params["dense_1/bias"])[:, 0]
    return sigmoid(z2), (f, z1, a1, mask, a1d)


def head_backward(params, cache, grad_logits, head):
    """Parameter gradients given dLoss/dlogit per sample."""
    f, z1, a1, mask, a1d = cache
    dtype = params["dense/kernel"].dtype
    g = np.asarray(grad_logits, dtype=dtype)[:, None]
    grads = {
        "dense_1/kernel": a1d.T @ g,
        "dense_1/bias": g.sum(axis=0),
    }
    g_a = g @ params["dense_1/kernel"].T
    if mask is not None:
        g_a = g_a * mask
    g_z1 = g_a * _activation_grad(z1, a1, head.activation)
    grads["dense/kernel"] = f.T @ g_z1
    grads["dense/bias"] = g_z1.sum(axis=0)
    return grads


def extract_features(model, pixels):
    return model.extractor(to_model_input(pixels, model.backbone.pixel_range))


def forward(model, batch, training_mode=False, rng=None):
    """Probabilities in (0, 1), one per image of ``batch`` (pixels in [0, 1])."""
    batch = np.asarray(batch)
    expected = model.backbone.input_size + (3,)
    if batch.ndim != 4 or batch.shape[1:] != expected:
        raise ShapeMismatch(f"expected images of shape {expected}, got {batch.shape[1:]}")
    p, _ = head_forward(model.params, extract_features(model, batch), model.head, training_mode, rng)
    return p


def save_head(path, model):
    with open(path, "wb") as fh:
        np.savez(fh, **model.head_params())


def load_head(path):
    with np.load(path, allow_pickle=False) as data:
        return {k: data[k] for k in data.files}
