"""Configurable VGG-style Siamese embedding network with tied weights.

Both streams run the same parameter set.  The embedding is tapped at FC2
after rectification so its entries are nonnegative and cosine similarity
between embeddings lands in [0, 1].  The verification head consumes the
elementwise absolute difference of the two embeddings and ends in a sigmoid,
which makes the score exactly symmetric in its two inputs.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ConfigError, FormatError, ShapeError
from .tensor import Graph, Tensor

CHECKPOINT_MAGIC = b"DGNETv1"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkSpec:
    """Topology: conv stages, two fc widths, then head widths ending in 1."""

    input_shape: tuple[int, int, int]
    stages: tuple[tuple[int, int], ...]  # (out_channels, convs before a maxpool2)
    fc: tuple[int, int]
    head: tuple[int, ...]
    name: str = "custom"

    def __post_init__(self):
        if not self.stages:
            raise ConfigError("conv stage list must be nonempty")
        if len(self.fc) != 2 or self.fc[1] < 2:
            raise ConfigError(f"fc widths must be [fc1, fc2] with fc2 >= 2, got {self.fc}")
        if not self.head or self.head[-1] != 1:
            raise ConfigError(f"head widths must end in 1, got {self.head}")
        c, h, w = self.input_shape
        for _ in self.stages:
            if h % 2 or w % 2:
                raise ConfigError(f"spatial extent {h}x{w} not divisible by maxpool2 stages")
            h, w = h // 2, w // 2

    @property
    def conv_layer_count(self) -> int:
        return sum(n for _, n in self.stages)

    @property
    def weighted_layer_count(self) -> int:
        return self.conv_layer_count + len(self.fc) + len(self.head)

    def flat_size(self) -> int:
        c, h, w = self.input_shape
        for out_c, _ in self.stages:
            c = out_c
            h, w = h // 2, w // 2
        return c * h * w

    def layer_shapes(self) -> list[tuple[str, tuple, tuple]]:
        """(kind, weight shape, bias shape) per weighted layer, in order."""
        layers = []
        c_in = self.input_shape[0]
        for out_c, n_convs in self.stages:
            for _ in range(n_convs):
                layers.append(("conv", (out_c, c_in, 3, 3), (out_c,)))
                c_in = out_c
        n_in = self.flat_size()
        for width in self.fc:
            layers.append(("fc", (width, n_in), (width,)))
            n_in = width
        n_in = self.fc[1]  # head consumes |embA - embB|
        for width in self.head:
            layers.append(("head", (width, n_in), (width,)))
            n_in = width
        return layers

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "stages": [list(s) for s in self.stages],
            "fc": list(self.fc),
            "head": list(self.head),
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(
            input_shape=tuple(d["input_shape"]),
            stages=tuple(tuple(s) for s in d["stages"]),
            fc=tuple(d["fc"]),
            head=tuple(d["head"]),
            name=d.get("name", "custom"),
        )

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def tiny(cls) -> "NetworkSpec":
        return cls(input_shape=(1, 32, 32), stages=((8, 2), (16, 2)),
                   fc=(64, 32), head=(16, 1), name="tiny")

    @classmethod
    def vggface16(cls) -> "NetworkSpec":
        # 13 conv + 2 fc + 1 head linear = 16 weighted layers
        return cls(input_shape=(3, 224, 224),
                   stages=((64, 2), (128, 2), (256, 3), (512, 3), (512, 3)),
                   fc=(4096, 4096), head=(1,), name="vggface16")

    @classmethod
    def profile(cls, name: str) -> "NetworkSpec":
        if name == "tiny":
            return cls.tiny()
        if name == "vggface16":
            return cls.vggface16()
        raise ConfigError(f"unknown profile {name!r}")


DEFAULT_FREEZE = {"tiny": 1, "vggface16": 4}


@dataclass
class NetworkParams:
    """Learnable tensors in declaration order, plus a per-tensor freeze mask."""

    spec: NetworkSpec
    tensors: list[Tensor]
    freeze: list[bool] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        if not self.freeze:
            self.freeze = [False] * len(self.tensors)

    def frozen_tensors(self) -> list[Tensor]:
        return [t for t, f in zip(self.tensors, self.freeze) if f]

    def layer_params(self):
        """Iterate (kind, weight tensor, bias tensor) per weighted layer."""
        kinds = [k for k, _, _ in self.spec.layer_shapes()]
        for i, kind in enumerate(kinds):
            yield kind, self.tensors[2 * i], self.tensors[2 * i + 1]


def build_network(spec: NetworkSpec, seed: int) -> NetworkParams:
    """He-uniform weights, zero biases; deterministic for a fixed seed."""
    rng = np.random.default_rng(seed)
    tensors = []
    for _, w_shape, b_shape in spec.layer_shapes():
        fan_in = int(np.prod(w_shape[1:]))
        limit = np.sqrt(6.0 / fan_in)
        tensors.append(Tensor(rng.uniform(-limit, limit, size=w_shape)))
        tensors.append(Tensor(np.zeros(b_shape)))
    return NetworkParams(spec=spec, tensors=tensors, seed=seed)


def freeze_prefix(params: NetworkParams, k: int) -> NetworkParams:
    """Mark the weights and biases of the first k conv layers frozen."""
    n_conv = params.spec.conv_layer_count
    if k < 0 or k > n_conv:
        raise ConfigError(f"freeze prefix {k} exceeds {n_conv} conv layers")
    mask = [False] * len(params.tensors)
    for i in range(2 * k):
        mask[i] = True
    params.freeze = mask
    return params


def forward_embedding(params: NetworkParams, x: Tensor, g: Graph | None = None) -> Tensor:
    """One stream: conv stages -> flatten -> fc1 -> fc2, rectified throughout."""
    if x.shape != params.spec.input_shape:
        raise ShapeError(f"input shape {x.shape} != spec {params.spec.input_shape}")
    layers = list(params.layer_params())
    h = x
    i = 0
    for _, n_convs in params.spec.stages:
        for _ in range(n_convs):
            _, w, b = layers[i]
            h = ops.relu(g, ops.conv2d(g, h, w, b, stride=1, pad=1))
            i += 1
        h = ops.maxpool2(g, h)
    h = ops.reshape(g, h, (params.spec.flat_size(),))
    for _ in params.spec.fc:
        _, w, b = layers[i]
        h = ops.relu(g, ops.linear(g, h, w, b))
        i += 1
    return h


def forward_head(params: NetworkParams, emb_a: Tensor, emb_b: Tensor,
                 g: Graph | None = None) -> Tensor:
    """Verification head over |embA - embB|; returns a scalar tensor in (0,1)."""
    layers = list(params.layer_params())
    head_layers = [lp for lp in layers if lp[0] == "head"]
    h = ops.absolute(g, ops.sub(g, emb_a, emb_b))
    for _, w, b in head_layers[:-1]:
        h = ops.relu(g, ops.linear(g, h, w, b))
    _, w, b = head_layers[-1]
    h = ops.sigmoid(g, ops.linear(g, h, w, b))
    return ops.reshape(g, h, ())


def siamese_forward(params: NetworkParams, x_a: Tensor, x_b: Tensor,
                    g: Graph | None = None) -> tuple[Tensor, Tensor, Tensor]:
    """Tied-weight forward of both streams; returns (embA, embB, p)."""
    emb_a = forward_embedding(params, x_a, g)
    emb_b = forward_embedding(params, x_b, g)
    p = forward_head(params, emb_a, emb_b, g)
    return emb_a, emb_b, p


def save_params(params: NetworkParams, path) -> None:
    header = {
        "spec": params.spec.to_dict(),
        "fingerprint": params.spec.fingerprint(),
        "seed": params.seed,
        "freeze": params.freeze,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        f.write(blob)
        for t in params.tensors:
            f.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_params(path, expect_spec: NetworkSpec | None = None) -> NetworkParams:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise FormatError("bad checkpoint magic")
    off = len(CHECKPOINT_MAGIC)
    try:
        version, blob_len = struct.unpack_from("<II", raw, off)
    except struct.error as exc:
        raise FormatError("truncated checkpoint header") from exc
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    off += 8
    try:
        header = json.loads(raw[off:off + blob_len])
    except ValueError as exc:
        raise FormatError("corrupt checkpoint header") from exc
    off += blob_len
    spec = NetworkSpec.from_dict(header["spec"])
    if spec.fingerprint() != header["fingerprint"]:
        raise FormatError("spec fingerprint mismatch inside checkpoint")
    if expect_spec is not None and expect_spec.fingerprint() != header["fingerprint"]:
        raise FormatError(
            f"checkpoint built for spec {spec.name!r}, expected {expect_spec.name!r}")
    tensors = []
    for _, w_shape, b_shape in spec.layer_shapes():
        for shape in (w_shape, b_shape):
            n = int(np.prod(shape)) * 8
            if off + n > len(raw):
                raise FormatError("truncated checkpoint payload")
            tensors.append(Tensor(np.frombuffer(raw, dtype="<f8", count=int(np.prod(shape)),
                                                offset=off).reshape(shape).copy()))
            off += n
    if off != len(raw):
        raise FormatError("trailing bytes in checkpoint")
    return NetworkParams(spec=spec, tensors=tensors,
                         freeze=list(header.get("freeze", [])), seed=header.get("seed", 0))
