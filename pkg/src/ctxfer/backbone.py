"""Named-node backbone graphs, shape propagation, weights archives and a
numpy executor.

A backbone is a list of nodes in creation order. ``conv`` nodes bundle
convolution (no bias), batch normalisation without scale, and ReLU, which is
how Keras builds Inception-v3. Only the ancestors of a truncation node are
kept by :meth:`Graph.truncate`, so downstream parameters never exist in a
truncated model.
"""

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeMismatch, UnknownNode, WeightsMismatch
from .kernels import pool2d, pool_output_size, pool_padding

WEIGHTS_PATH_ENV = "CTXFER_WEIGHTS_PATH"
BN_EPSILON = 1e-3
INPUT = "input"


@dataclass(frozen=True)
class Node:
    name: str
    op: str  # input | conv | maxpool | avgpool | concat
    inputs: tuple = ()
    filters: int = 0
    kernel: tuple = (1, 1)
    stride: int = 1
    padding: str = "same"


def conv_param_names(name):
    return (f"{name}/kernel", f"{name}/bn_beta", f"{name}/bn_mean", f"{name}/bn_var")


@dataclass
class Graph:
    name: str
    nodes: list
    truncation_points: list
    mixed: list = field(default_factory=list)

    def __post_init__(self):
        self.by_name = {n.name: n for n in self.nodes}

    @property
    def output(self):
        return self.nodes[-1].name

    def check_node(self, node):
        if node not in self.truncation_points:
            raise UnknownNode(node, self.mixed or self.truncation_points)

    def truncate(self, node):
        """Sub-graph computing ``node`` and nothing downstream of it."""
        self.check_node(node)
        keep = set()
        stack = [node]
        while stack:
            cur = stack.pop()
            if cur in keep:
                continue
            keep.add(cur)
            stack.extend(self.by_name[cur].inputs)
        nodes = [n for n in self.nodes if n.name in keep]
        points = [p for p in self.truncation_points if p in keep]
        return Graph(self.name, nodes, points, [m for m in self.mixed if m in keep])

    def shapes(self, input_size, channels=3):
        """Output shape ``(h, w, c)`` of every node."""
        out = {}
        for n in self.nodes:
            if n.op == "input":
                out[n.name] = (int(input_size[0]), int(input_size[1]), channels)
            elif n.op == "concat":
                parts = [out[i] for i in n.inputs]
                if len({p[:2] for p in parts}) != 1:
                    raise ConfigError(f"spatial mismatch at {n.name}: {parts}")
                out[n.name] = parts[0][:2] + (sum(p[2] for p in parts),)
            else:
                h, w, c = out[n.inputs[0]]
                oh = pool_output_size(h, n.kernel[0], n.stride, n.padding)
                ow = pool_output_size(w, n.kernel[1], n.stride, n.padding)
                if oh < 1 or ow < 1:
                    raise ConfigError(f"input {input_size} too small for node {n.name}")
                out[n.name] = (oh, ow, n.filters if n.op == "conv" else c)
        return out

    def param_shapes(self, input_size, channels=3):
        shapes = self.shapes(input_size, channels)
        params = {}
        for n in self.nodes:
            if n.op != "conv":
                continue
            cin = shapes[n.inputs[0]][2]
            k, beta, mean, var = conv_param_names(n.name)
            params[k] = (n.kernel[0], n.kernel[1], cin, n.filters)
            params[beta] = params[mean] = params[var] = (n.filters,)
        return params

    def summary(self, input_size, trainable=False):
        shapes = self.shapes(input_size)
        pshapes = self.param_shapes(input_size)
        rows = []
        for n in self.nodes:
            count = 0
            if n.op == "conv":
                count = sum(int(np.prod(pshapes[p])) for p in conv_param_names(n.name))
            rows.append({
                "name": n.name,
                "op": n.op,
                "output_shape": list(shapes[n.name]),
                "params": count,
                "trainable": bool(trainable and count),
            })
        return rows


class _Builder:
    def __init__(self, name):
        self.name = name
        self.nodes = [Node(INPUT, "input")]
        self.counts = {}
        self.mixed = []

    def _auto(self, prefix):
        k = self.counts.get(prefix, 0)
        self.counts[prefix] = k + 1
        return prefix if k == 0 else f"{prefix}_{k}"

    def _add(self, node):
        self.nodes.append(node)
        return node.name

    def conv(self, x, filters, kh, kw, stride=1, padding="same"):
        return self._add(Node(self._auto("conv2d"), "conv", (x,), filters, (kh, kw), stride, padding))

    def maxpool(self, x, size=3, stride=2, padding="valid"):
        return self._add(Node(self._auto("max_pooling2d"), "maxpool", (x,), 0, (size, size), stride, padding))

    def avgpool(self, x, size=3, stride=1, padding="same"):
        return self._add(Node(self._auto("average_pooling2d"), "avgpool", (x,), 0, (size, size), stride, padding))

    def concat(self, xs, name=None, mixed=False):
        name = name or self._auto("concatenate")
        if mixed:
            self.mixed.append(name)
        return self._add(Node(name, "concat", tuple(xs)))

    def graph(self):
        return Graph(self.name, self.nodes, [INPUT] + self.mixed, list(self.mixed))


def inception_v3():
    """Inception-v3 feature layers, mixed0 ... mixed10, in Keras layer order."""
    b = _Builder("inception_v3")
    x = b.conv(INPUT, 32, 3, 3, stride=2, padding="valid")
    x = b.conv(x, 32, 3, 3, padding="valid")
    x = b.conv(x, 64, 3, 3)
    x = b.maxpool(x)
    x = b.conv(x, 80, 1, 1, padding="valid")
    x = b.conv(x, 192, 3, 3, padding="valid")
    x = b.maxpool(x)

    for i, pool_filters in enumerate((32, 64, 64)):
        b1 = b.conv(x, 64, 1, 1)
        b5 = b.conv(x, 48, 1, 1)
        b5 = b.conv(b5, 64, 5, 5)
        bd = b.conv(x, 64, 1, 1)
        bd = b.conv(bd, 96, 3, 3)
        bd = b.conv(bd, 96, 3, 3)
        bp = b.avgpool(x)
        bp = b.conv(bp, pool_filters, 1, 1)
        x = b.concat([b1, b5, bd, bp], f"mixed{i}", mixed=True)

    b3 = b.conv(x, 384, 3, 3, stride=2, padding="valid")
    bd = b.conv(x, 64, 1, 1)
    bd = b.conv(bd, 96, 3, 3)
    bd = b.conv(bd, 96, 3, 3, stride=2, padding="valid")
    bp = b.maxpool(x)
    x = b.concat([b3, bd, bp], "mixed3", mixed=True)

    for i, width in ((4, 128), (5, 160), (6, 160), (7, 192)):
        b1 = b.conv(x, 192, 1, 1)
        b7 = b.conv(x, width, 1, 1)
        b7 = b.conv(b7, width, 1, 7)
        b7 = b.conv(b7, 192, 7, 1)
        bd = b.conv(x, width, 1, 1)
        bd = b.conv(bd, width, 7, 1)
        bd = b.conv(bd, width, 1, 7)
        bd = b.conv(bd, width, 7, 1)
        bd = b.conv(bd, 192, 1, 7)
        bp = b.avgpool(x)
        bp = b.conv(bp, 192, 1, 1)
        x = b.concat([b1, b7, bd, bp], f"mixed{i}", mixed=True)

    b3 = b.conv(x, 192, 1, 1)
    b3 = b.conv(b3, 320, 3, 3, stride=2, padding="valid")
    b7 = b.conv(x, 192, 1, 1)
    b7 = b.conv(b7, 192, 1, 7)
    b7 = b.conv(b7, 192, 7, 1)
    b7 = b.conv(b7, 192, 3, 3, stride=2, padding="valid")
    bp = b.maxpool(x)
    x = b.concat([b3, b7, bp], "mixed8", mixed=True)

    for i in range(2):
        b1 = b.conv(x, 320, 1, 1)
        b3 = b.conv(x, 384, 1, 1)
        b3a = b.conv(b3, 384, 1, 3)
        b3b = b.conv(b3, 384, 3, 1)
        b3 = b.concat([b3a, b3b], f"mixed9_{i}")
        bd = b.conv(x, 448, 1, 1)
        bd = b.conv(bd, 384, 3, 3)
        bda = b.conv(bd, 384, 1, 3)
        bdb = b.conv(bd, 384, 3, 1)
        bd = b.concat([bda, bdb])
        bp = b.avgpool(x)
        bp = b.conv(bp, 192, 1, 1)
        x = b.concat([b1, b3, bd, bp], f"mixed{9 + i}", mixed=True)
    return b.graph()


def tiny_inception():
    """Two-block miniature with the same node vocabulary, for tests and smoke runs."""
    b = _Builder("tiny_inception")
    x = b.conv(INPUT, 8, 3, 3, stride=2, padding="valid")
    x = b.maxpool(x)
    for i in range(2):
        b1 = b.conv(x, 4, 1, 1)
        b3 = b.conv(x, 4, 1, 1)
        b3 = b.conv(b3, 4, 3, 3)
        bp = b.avgpool(x)
        bp = b.conv(bp, 4, 1, 1)
        x = b.concat([b1, b3, bp], f"mixed{i}", mixed=True)
    return b.graph()


ARCHITECTURES = {
    "inception_v3": inception_v3,
    "tiny_inception": tiny_inception,
}


def get_architecture(name):
    try:
        return ARCHITECTURES[name]()
    except KeyError:
        raise ConfigError(f"unknown architecture {name!r}; known: {sorted(ARCHITECTURES)}") from None


# --------------------------------------------------------------------------
# weights
# --------------------------------------------------------------------------

def random_weights(graph, input_size, seed=0):
    """Seeded stand-in weights (He-normal kernels, mild random BN statistics)."""
    rng = np.random.default_rng(seed)
    out = {}
    for name, shape in graph.param_shapes(input_size).items():
        if name.endswith("/kernel"):
            fan_in = shape[0] * shape[1] * shape[2]
            out[name] = (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)
        elif name.endswith("/bn_var"):
            out[name] = rng.uniform(0.5, 1.5, shape).astype(np.float32)
        else:
            out[name] = (0.1 * rng.standard_normal(shape)).astype(np.float32)
    return out


def save_weights_archive(path, tensors):
    """Write ``name -> little-endian float32 tensor`` as an ``.npz`` archive."""
    path = Path(path)
    arrays = {name: np.asarray(t, dtype="<f4") for name, t in tensors.items()}
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def resolve_weights_path(source):
    path = Path(source)
    if path.is_file():
        return path
    if not path.is_absolute():
        for root in os.environ.get(WEIGHTS_PATH_ENV, "").split(os.pathsep):
            if root and (Path(root) / path).is_file():
                return Path(root) / path
    raise ConfigError(
        f"weights archive {source!r} not found (searched cwd and ${WEIGHTS_PATH_ENV})"
    )


def load_weights_archive(path, graph, input_size):
    """Load the tensors ``graph`` needs; extra names (pruned layers) are ignored."""
    path = resolve_weights_path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            available = {name: data[name] for name in data.files}
    except (OSError, ValueError) as exc:
        raise WeightsMismatch(f"cannot read weights archive {path}: {exc}") from exc
    wanted = graph.param_shapes(input_size)
    missing = [n for n in wanted if n not in available]
    bad = [
        f"{n}: archive {available[n].shape} vs architecture {shape}"
        for n, shape in wanted.items()
        if n in available and available[n].shape != tuple(shape)
    ]
    if missing or bad:
        raise WeightsMismatch(
            f"{path} does not match {graph.name}: "
            + "; ".join(([f"missing {missing[:5]}"] if missing else []) + bad[:5])
        )
    return {n: available[n].astype(np.float32) for n in wanted}


# --------------------------------------------------------------------------
# execution
# --------------------------------------------------------------------------

def conv2d(x, kernel, stride=1, padding="same"):
    """NHWC convolution by patch extraction and one matrix product."""
    kh, kw, cin, cout = kernel.shape
    n, h, w, _ = x.shape
    if kh == kw == 1 and stride == 1:
        return (x.reshape(-1, cin) @ kernel.reshape(cin, cout)).reshape(n, h, w, cout)
    oh = pool_output_size(h, kh, stride, padding)
    ow = pool_output_size(w, kw, stride, padding)
    pt = pool_padding(h, kh, stride, padding)
    pl = pool_padding(w, kw, stride, padding)
    pb = max((oh - 1) * stride + kh - h - pt, 0)
    pr = max((ow - 1) * stride + kw - w - pl, 0)
    if pt or pb or pl or pr:
        x = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))
    win = win[:, : (oh - 1) * stride + 1 : stride, : (ow - 1) * stride + 1 : stride]
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * oh * ow, kh * kw * cin)
    return (cols @ kernel.reshape(kh * kw * cin, cout)).reshape(n, oh, ow, cout)


class FeatureExtractor:
    """Frozen backbone: maps an ``N x H x W x 3`` batch to the truncation node's output.

    Batch normalisation is folded into the convolution at construction.
    """

    def __init__(self, graph, weights, input_size, chunk=8):
        self.graph = graph
        self.input_size = tuple(input_size)
        self.weights = weights
        self.chunk = chunk
        shapes = graph.shapes(self.input_size)
        self.feature_shape = shapes[graph.output]
        self._folded = {}
        for n in graph.nodes:
            if n.op == "conv":
                k, beta, mean, var = (weights[p] for p in conv_param_names(n.name))
                inv = (1.0 / np.sqrt(var.astype(np.float64) + BN_EPSILON))
                kernel = (k * inv).astype(np.float32)
                bias = (beta - mean * inv).astype(np.float32)
                self._folded[n.name] = (kernel, bias)

    def _run(self, x):
        acts = {INPUT: x}
        last_use = {}
        for i, n in enumerate(self.graph.nodes):
            for src in n.inputs:
                last_use[src] = i
        for i, n in enumerate(self.graph.nodes):
            if n.op == "input":
                continue
            if n.op == "concat":
                y = np.concatenate([acts[s] for s in n.inputs], axis=-1)
            elif n.op == "conv":
                kernel, bias = self._folded[n.name]
                y = conv2d(acts[n.inputs[0]], kernel, n.stride, n.padding)
                y += bias
                np.maximum(y, 0.0, out=y)
            else:
                op = "max" if n.op == "maxpool" else "avg"
                y = pool2d(acts[n.inputs[0]], n.kernel, n.stride, n.padding, op)
            acts[n.name] = y
            for src in n.inputs:
                if last_use.get(src) == i and src != self.graph.output:
                    del acts[src]
        return acts[self.graph.output]

    def __call__(self, batch):
        batch = np.asarray(batch, dtype=np.float32)
        if batch.ndim != 4 or batch.shape[1:3] != self.input_size or batch.shape[3] != 3:
            raise ShapeMismatch(
                f"expected batch of shape (N, {self.input_size[0]}, {self.input_size[1]}, 3), got {batch.shape}"
            )
        if len(self.graph.nodes) == 1:
            return batch.copy()
        parts = [self._run(batch[i:i + self.chunk]) for i in range(0, len(batch), self.chunk)]
        if not parts:
            return np.zeros((0,) + self.feature_shape, dtype=np.float32)
        return np.concatenate(parts, axis=0)
