"""Two-block convolutional action classifier with hand-written backward pass.

Every 3x3 convolution is followed by ReLU, batch normalization and dropout,
in that order. Block outputs feed global average pooling and one linear
layer producing class logits.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from . import layers as L
from ..ingest import SchemaError, read_container, write_container

CHECKPOINT_MAGIC = b"THAR"


@dataclass(frozen=True)
class NetworkSpec:
    in_channels: int = 42
    height: int = 135
    width: int = 240
    block_filters: Tuple[int, int] = (128, 256)
    num_classes: int = 5
    dropout: float = 0.3

    def conv_layers(self) -> List[Tuple[str, int, int, int]]:
        """(name, in_channels, out_channels, stride) in forward order."""
        f1, f2 = self.block_filters
        return [
            ("conv1", self.in_channels, f1, 2),
            ("conv2", f1, f1, 1),
            ("conv3", f1, f2, 2),
            ("conv4", f2, f2, 1),
        ]

    def feature_size(self) -> Tuple[int, int]:
        h, w = self.height, self.width
        for _, _, _, stride in self.conv_layers():
            h, w = L.conv_output_size(h, stride), L.conv_output_size(w, stride)
        return h, w

    def param_shapes(self) -> Dict[str, tuple]:
        shapes = {}
        for name, cin, cout, _ in self.conv_layers():
            shapes[f"{name}.w"] = (3, 3, cin, cout)
            shapes[f"{name}.b"] = (cout,)
            shapes[f"{name}.gamma"] = (cout,)
            shapes[f"{name}.beta"] = (cout,)
        shapes["fc.w"] = (self.block_filters[1], self.num_classes)
        shapes["fc.b"] = (self.num_classes,)
        return shapes

    def num_params(self) -> int:
        return int(sum(np.prod(s) for s in self.param_shapes().values()))


@dataclass
class Model:
    spec: NetworkSpec
    params: Dict[str, np.ndarray]
    running: Dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "Model":
        return Model(self.spec, copy.deepcopy(self.params), copy.deepcopy(self.running))


def init_params(spec: NetworkSpec, seed=0, dtype=np.float32) -> Model:
    """He-normal convolution weights, fan-in scaled linear weights, zero biases."""
    rng = np.random.default_rng(seed)
    params: Dict[str, np.ndarray] = {}
    running: Dict[str, np.ndarray] = {}
    for name, cin, cout, _ in spec.conv_layers():
        params[f"{name}.w"] = (rng.standard_normal((3, 3, cin, cout)) * np.sqrt(2.0 / (9 * cin))).astype(dtype)
        params[f"{name}.b"] = np.zeros(cout, dtype=dtype)
        params[f"{name}.gamma"] = np.ones(cout, dtype=dtype)
        params[f"{name}.beta"] = np.zeros(cout, dtype=dtype)
        running[f"{name}.mean"] = np.zeros(cout, dtype=dtype)
        running[f"{name}.var"] = np.ones(cout, dtype=dtype)
    fan_in = spec.block_filters[1]
    params["fc.w"] = (rng.standard_normal((fan_in, spec.num_classes)) * np.sqrt(1.0 / fan_in)).astype(dtype)
    params["fc.b"] = np.zeros(spec.num_classes, dtype=dtype)
    return Model(spec, params, running)


def forward(model: Model, batch: np.ndarray, train: bool = False, seed=None):
    """Logits for an (N, C, H, W) batch.

    Train mode uses batch statistics and seeded dropout masks; the cache then
    carries updated running statistics under "running".
    """
    spec = model.spec
    x = np.asarray(batch)
    expected = (spec.in_channels, spec.height, spec.width)
    if x.ndim != 4 or x.shape[1:] != expected:
        raise ValueError(f"batch shape {x.shape} does not match (N, {expected[0]}, {expected[1]}, {expected[2]})")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p = model.params
    h = np.ascontiguousarray(x.transpose(0, 2, 3, 1)).astype(p["conv1.w"].dtype, copy=False)
    caches = []
    running = dict(model.running)
    for name, _, _, stride in spec.conv_layers():
        h, c_conv = L.conv3x3_forward(h, p[f"{name}.w"], p[f"{name}.b"], stride)
        h, c_relu = L.relu_forward(h)
        h, c_bn, running[f"{name}.mean"], running[f"{name}.var"] = L.batchnorm_forward(
            h, p[f"{name}.gamma"], p[f"{name}.beta"], running[f"{name}.mean"], running[f"{name}.var"], train
        )
        h, c_drop = L.dropout_forward(h, spec.dropout, rng, train)
        caches.append((name, c_conv, c_relu, c_bn, c_drop))
    pooled, c_pool = L.global_avg_pool_forward(h)
    logits, c_fc = L.linear_forward(pooled, p["fc.w"], p["fc.b"])
    if train:
        running = {k: v.astype(p["conv1.w"].dtype) for k, v in running.items()}
    return logits, {"layers": caches, "pool": c_pool, "fc": c_fc, "running": running}


def recalibrate_bn(model: Model, batch: np.ndarray, chunk: int = 100) -> Model:
    """Replace running BN statistics by population statistics of `batch`.

    Layers are visited in order; each layer's statistics are computed on
    inputs normalized with the already recalibrated earlier layers, and
    dropout is off, so the result matches what eval mode will see.
    """
    spec = model.spec
    p = model.params
    dtype = p["conv1.w"].dtype
    hs = [
        np.ascontiguousarray(np.asarray(batch[i : i + chunk]).transpose(0, 2, 3, 1)).astype(dtype, copy=False)
        for i in range(0, len(batch), chunk)
    ]
    running = dict(model.running)
    for name, _, _, stride in spec.conv_layers():
        hs = [L.relu_forward(L.conv3x3_forward(h, p[f"{name}.w"], p[f"{name}.b"], stride)[0])[0] for h in hs]
        count = sum(h.shape[0] * h.shape[1] * h.shape[2] for h in hs)
        mean = sum(h.sum(axis=(0, 1, 2), dtype=np.float64) for h in hs) / count
        var = sum(((h - mean) ** 2).sum(axis=(0, 1, 2), dtype=np.float64) for h in hs) / count
        running[f"{name}.mean"] = mean.astype(dtype)
        running[f"{name}.var"] = var.astype(dtype)
        hs = [
            L.batchnorm_forward(h, p[f"{name}.gamma"], p[f"{name}.beta"], running[f"{name}.mean"], running[f"{name}.var"], False)[0]
            for h in hs
        ]
    return Model(spec, p, running)


def backward(dlogits: np.ndarray, cache) -> Dict[str, np.ndarray]:
    grads: Dict[str, np.ndarray] = {}
    dpooled, grads["fc.w"], grads["fc.b"] = L.linear_backward(dlogits, cache["fc"])
    dh = L.global_avg_pool_backward(dpooled, cache["pool"])
    for name, c_conv, c_relu, c_bn, c_drop in reversed(cache["layers"]):
        dh = L.dropout_backward(dh, c_drop)
        dh, grads[f"{name}.gamma"], grads[f"{name}.beta"] = L.batchnorm_backward(dh, c_bn)
        dh = L.relu_backward(dh, c_relu)
        # The input batch needs no gradient.
        need_dx = name != "conv1"
        dh, grads[f"{name}.w"], grads[f"{name}.b"] = L.conv3x3_backward(dh, c_conv, need_dx)
    return grads


def loss_and_grad(model: Model, batch: np.ndarray, labels, seed=None, train: bool = True):
    """Mean softmax cross-entropy, parameter gradients, and the forward cache."""
    logits, cache = forward(model, batch, train=train, seed=seed)
    loss, dlogits = L.softmax_cross_entropy(logits, np.asarray(labels))
    return loss, backward(dlogits, cache), cache


def predict_proba(model: Model, batch: np.ndarray, batch_size: int = 100) -> np.ndarray:
    out = []
    for i in range(0, len(batch), batch_size):
        logits, _ = forward(model, batch[i : i + batch_size], train=False)
        out.append(L.softmax(logits.astype(np.float64)))
    return np.concatenate(out) if out else np.zeros((0, model.spec.num_classes))


def save_checkpoint(model: Model) -> bytes:
    header = {"kind": "action-classifier", "spec": asdict(model.spec)}
    arrays = {f"param/{k}": v for k, v in sorted(model.params.items())}
    arrays.update({f"running/{k}": v for k, v in sorted(model.running.items())})
    return write_container(CHECKPOINT_MAGIC, header, arrays)


def load_checkpoint(data: bytes) -> Model:
    meta, arrays = read_container(data, CHECKPOINT_MAGIC)
    if meta.get("kind") != "action-classifier":
        raise SchemaError("not an action-classifier checkpoint")
    s = meta["spec"]
    s["block_filters"] = tuple(s["block_filters"])
    spec = NetworkSpec(**s)
    params = {k[len("param/") :]: v for k, v in arrays.items() if k.startswith("param/")}
    running = {k[len("running/") :]: v for k, v in arrays.items() if k.startswith("running/")}
    if set(params) != set(spec.param_shapes()):
        raise SchemaError("checkpoint parameters do not match its spec")
    return Model(spec, params, running)
