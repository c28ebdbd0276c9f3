"""Compact single-class grid detector.

A staged-downsampling backbone (conv 3x3 -> leaky relu -> maxpool 2x2 per
stage) feeds a 1x1 head that predicts, per grid cell, a box offset
(tx, ty), a log-scale box size (tw, th) and an objectness logit (to). An
image is called a single hit when any cell's sigmoid objectness exceeds
the decision threshold.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from .layers import (
    ConfigurationError,
    LayerParams,
    conv2d_backward,
    conv2d_forward,
    leaky_relu,
    leaky_relu_backward,
    maxpool2d,
    maxpool2d_backward,
    sigmoid,
)

CHECKPOINT_MAGIC = b"SPICNN01"

# Channel order of the head output / GridPrediction raw array.
TX, TY, TW, TH, TO = range(5)


class AnnotationError(ValueError):
    """A ground-truth bounding box violates its invariants."""


class CheckpointError(Exception):
    pass


class NotACheckpointError(CheckpointError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


class CheckpointMismatchError(CheckpointError):
    pass


@dataclass(frozen=True)
class DetectorConfig:
    input_size: int = 416
    stages: int = 5
    channels: tuple[int, ...] | None = None
    lambda_coord: float = 5.0
    lambda_obj: float = 1.0
    lambda_noobj: float = 0.5
    decision_threshold: float = 0.24

    def __post_init__(self):
        if self.input_size % (1 << self.stages) != 0:
            raise ConfigurationError(
                f"input_size {self.input_size} not divisible by 2^{self.stages}"
            )
        if self.channels is None:
            default = (16, 32, 64, 128, 256, 512, 1024)[: self.stages]
            object.__setattr__(self, "channels", default)
        else:
            object.__setattr__(self, "channels", tuple(self.channels))
        if len(self.channels) != self.stages:
            raise ConfigurationError(
                f"{len(self.channels)} channel widths for {self.stages} stages"
            )

    @property
    def grid(self) -> int:
        return self.input_size >> self.stages

    @classmethod
    def desk_scale(cls, **overrides) -> "DetectorConfig":
        """CPU-trainable default: 128 px input, 5 stages, S=4 grid."""
        kw = dict(input_size=128, stages=5, channels=(8, 16, 32, 32, 32))
        kw.update(overrides)
        return cls(**kw)


@dataclass(frozen=True)
class BoxAnnotation:
    """Ground-truth box in normalized [0,1] image coordinates."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise AnnotationError(f"box center ({self.cx}, {self.cy}) outside [0,1]")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise AnnotationError(f"box size ({self.w}, {self.h}) outside (0,1]")


@dataclass
class GridPrediction:
    """Raw head output for one image: array (5, S, S)."""

    raw: np.ndarray

    @property
    def grid(self) -> int:
        return self.raw.shape[1]

    @property
    def objectness(self) -> np.ndarray:
        """Sigmoid objectness per cell, shape (S, S)."""
        return sigmoid(self.raw[TO])


@dataclass
class Detection:
    row: int
    col: int
    cx: float
    cy: float
    w: float
    h: float
    objectness: float


@dataclass
class Model:
    config: DetectorConfig
    layers: list[LayerParams]
    iteration: int = 0
    seed: int = 0

    def forward(self, x):
        """Batch forward pass: (N,3,H,W) -> ((N,5,S,S), cache).

        Pure with respect to the model: all intermediates live in the
        returned cache, so concurrent inference on shared weights is safe.
        """
        cache = []
        for p in self.layers[:-1]:
            z, cols = conv2d_forward(x, p, stride=1, pad=1)
            a = leaky_relu(z)
            pooled, argmax = maxpool2d(a)
            cache.append((x, z, argmax, a.shape, cols))
            x = pooled
        out, cols = conv2d_forward(x, self.layers[-1], stride=1, pad=0)
        cache.append((x, cols))  # head input
        return out, cache

    def backward(self, cache, output_grad):
        """Accumulate parameter gradients; return gradient w.r.t. the input."""
        head_x, head_cols = cache[-1]
        g = conv2d_backward(head_x, self.layers[-1], output_grad, 1, 0,
                            cols=head_cols)
        for p, (x, z, argmax, a_shape, cols) in zip(
            reversed(self.layers[:-1]), reversed(cache[:-1])
        ):
            g = maxpool2d_backward(argmax, g, a_shape)
            g = leaky_relu_backward(z, g)
            g = conv2d_backward(x, p, g, stride=1, pad=1, cols=cols)
        return g

    def zero_grad(self):
        for p in self.layers:
            p.zero_grad()

    def astype(self, dtype) -> "Model":
        return Model(
            config=self.config,
            layers=[p.astype(dtype) for p in self.layers],
            iteration=self.iteration,
            seed=self.seed,
        )


def build_model(config: DetectorConfig, seed: int, dtype=np.float32) -> Model:
    """Seeded scaled-uniform init: weights ~ U(+-sqrt(2/fan_in)), bias 0."""
    rng = np.random.default_rng(seed)
    layers = []
    c_in = 3
    for i, c_out in enumerate(config.channels, start=1):
        fan_in = c_in * 9
        lim = np.sqrt(2.0 / fan_in)
        w = rng.uniform(-lim, lim, size=(c_out, c_in, 3, 3)).astype(dtype)
        layers.append(LayerParams.create(w, np.zeros(c_out, dtype=dtype),
                                         name=f"stage{i}"))
        c_in = c_out
    lim = np.sqrt(2.0 / c_in)
    w = rng.uniform(-lim, lim, size=(5, c_in, 1, 1)).astype(dtype)
    layers.append(LayerParams.create(w, np.zeros(5, dtype=dtype), name="head"))
    return Model(config=config, layers=layers, seed=seed)


def forward_detect(model: Model, image: np.ndarray) -> GridPrediction:
    """Run one 3xNxN image through the detector."""
    n = model.config.input_size
    if image.shape != (3, n, n):
        raise ConfigurationError(
            f"expected image of shape (3, {n}, {n}), got {image.shape}"
        )
    out, _ = model.forward(image[None])
    return GridPrediction(out[0])


def _responsible_cell(truth: BoxAnnotation, s: int) -> tuple[int, int]:
    i = min(int(truth.cy * s), s - 1)
    j = min(int(truth.cx * s), s - 1)
    return i, j


def detection_loss(pred, truth: BoxAnnotation | None, config: DetectorConfig):
    """Single-class squared-error detection loss and its gradient.

    With a truth box: coordinate terms (lambda_coord) and an objectness
    target of 1 at the responsible cell, objectness pushed to 0 everywhere
    else (lambda_noobj). Without truth only the no-object term remains.
    Returns (loss, grad) with grad shaped like the raw prediction.
    """
    raw = pred.raw if isinstance(pred, GridPrediction) else pred
    s = raw.shape[1]
    grad = np.zeros_like(raw)

    sig_o = sigmoid(raw[TO])
    noobj = np.ones((s, s), dtype=bool)
    loss = 0.0

    if truth is not None:
        i, j = _responsible_cell(truth, s)
        noobj[i, j] = False

        x_hat = truth.cx * s - j
        y_hat = truth.cy * s - i
        w_hat = np.log(truth.w)
        h_hat = np.log(truth.h)

        sx = sigmoid(raw[TX, None, i, j])[0]
        sy = sigmoid(raw[TY, None, i, j])[0]
        lc = config.lambda_coord
        loss += lc * (
            (sx - x_hat) ** 2
            + (sy - y_hat) ** 2
            + (raw[TW, i, j] - w_hat) ** 2
            + (raw[TH, i, j] - h_hat) ** 2
        )
        grad[TX, i, j] = 2 * lc * (sx - x_hat) * sx * (1 - sx)
        grad[TY, i, j] = 2 * lc * (sy - y_hat) * sy * (1 - sy)
        grad[TW, i, j] = 2 * lc * (raw[TW, i, j] - w_hat)
        grad[TH, i, j] = 2 * lc * (raw[TH, i, j] - h_hat)

        so = sig_o[i, j]
        loss += config.lambda_obj * (so - 1.0) ** 2
        grad[TO, i, j] = 2 * config.lambda_obj * (so - 1.0) * so * (1 - so)

    so = sig_o[noobj]
    loss += config.lambda_noobj * float(np.sum(so ** 2))
    grad[TO][noobj] = 2 * config.lambda_noobj * so ** 2 * (1 - so)
    return float(loss), grad


def decide(pred: GridPrediction, threshold: float):
    """Single-hit decision: any cell with sigmoid objectness strictly above
    the threshold. Returns (is_single_hit, detections sorted by objectness
    descending)."""
    obj = pred.objectness
    s = pred.grid
    detections = []
    for i, j in zip(*np.nonzero(obj > threshold)):
        raw = pred.raw
        detections.append(
            Detection(
                row=int(i),
                col=int(j),
                cx=float((j + sigmoid(raw[TX, None, i, j])[0]) / s),
                cy=float((i + sigmoid(raw[TY, None, i, j])[0]) / s),
                w=float(np.exp(raw[TW, i, j])),
                h=float(np.exp(raw[TH, i, j])),
                objectness=float(obj[i, j]),
            )
        )
    detections.sort(key=lambda d: d.objectness, reverse=True)
    return bool(detections), detections


def _layer_manifest(model: Model):
    return [
        {"name": p.name, "weights": list(p.weights.shape), "bias": list(p.bias.shape)}
        for p in model.layers
    ]


def save_checkpoint(model: Model, path):
    """magic + u32le header length + JSON header + f32le weight blobs."""
    header = {
        "config": asdict(model.config),
        "iteration": model.iteration,
        "seed": model.seed,
        "manifest": _layer_manifest(model),
    }
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    blobs = b"".join(
        p.weights.astype("<f4").tobytes() + p.bias.astype("<f4").tobytes()
        for p in model.layers
    )
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(raw)))
        f.write(raw)
        f.write(blobs)


def load_checkpoint(path) -> Model:
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != CHECKPOINT_MAGIC:
        raise NotACheckpointError(f"{path}: not a checkpoint (bad magic)")
    if len(data) < 12:
        raise CheckpointCorruptError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<I", data[8:12])
    if 12 + hlen > len(data):
        raise CheckpointCorruptError(f"{path}: truncated header")
    try:
        header = json.loads(data[12:12 + hlen])
        config = DetectorConfig(
            **{**header["config"], "channels": tuple(header["config"]["channels"])}
        )
        manifest = header["manifest"]
        iteration = int(header["iteration"])
        seed = int(header["seed"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointCorruptError(f"{path}: malformed header ({exc})") from exc

    model = build_model(config, seed=seed)
    model.iteration = iteration
    if len(manifest) != len(model.layers):
        raise CheckpointMismatchError(
            f"{path}: {len(manifest)} layers in file, config plan has "
            f"{len(model.layers)}"
        )
    for p, entry in zip(model.layers, manifest):
        if tuple(entry["weights"]) != p.weights.shape or tuple(entry["bias"]) != p.bias.shape:
            raise CheckpointMismatchError(
                f"{path}: layer {entry['name']!r} shapes {entry['weights']}/"
                f"{entry['bias']} do not match config plan "
                f"{p.weights.shape}/{p.bias.shape}"
            )

    offset = 12 + hlen
    for p in model.layers:
        for attr in ("weights", "bias"):
            arr = getattr(p, attr)
            nbytes = arr.size * 4
            if offset + nbytes > len(data):
                raise CheckpointCorruptError(f"{path}: truncated weight blob")
            values = np.frombuffer(data, dtype="<f4", count=arr.size, offset=offset)
            setattr(p, attr, values.reshape(arr.shape).copy())
            offset += nbytes
    if offset != len(data):
        raise CheckpointCorruptError(f"{path}: {len(data) - offset} trailing bytes")
    for p in model.layers:
        p.grad_w = np.zeros_like(p.weights)
        p.grad_b = np.zeros_like(p.bias)
        p.vel_w = np.zeros_like(p.weights)
        p.vel_b = np.zeros_like(p.bias)
    return model
