"""A small trainable CNN parsed from C(n)(f)-S(s) architecture strings.

Forward and backward passes are written against numpy only: valid (unpadded)
convolutions with ReLU, average pooling with trailing-edge truncation, one
dense layer producing the 5 class logits, and a softmax output. Gradients are
exact backpropagation, pinned by a finite-difference check in the tests.
"""

from __future__ import annotations

import base64
import hashlib
import json
import re
from dataclasses import dataclass

import numpy as np

from .aqi import GRADES, AqiGrade
from .classify import severity_argmax
from .imaging import RasterImage

N_CLASSES = len(GRADES)


class CnnError(Exception):
    """Base class for CNN failures."""


class ArchSyntaxError(CnnError):
    """Architecture string violates the C(n)(f)-S(s) grammar."""

    def __init__(self, position: int, message: str):
        super().__init__(f"token {position}: {message}")
        self.position = position


class EmptyArchitecture(CnnError):
    pass


class ShapeMismatch(CnnError):
    pass


@dataclass(frozen=True)
class Conv:
    maps: int
    filter_size: int

    def __post_init__(self):
        if self.maps < 1 or self.filter_size < 1:
            raise ValueError("conv maps and filter size must be >= 1")
        if self.filter_size % 2 == 0:
            raise ValueError("filter size must be odd")


@dataclass(frozen=True)
class Pool:
    scale: int

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError("pool scale must be >= 1")


@dataclass(frozen=True)
class Dense:
    units: int

    def __post_init__(self):
        if self.units < 1:
            raise ValueError("dense units must be >= 1")


@dataclass(frozen=True)
class SoftmaxOutput:
    classes: int = N_CLASSES


LayerSpec = Conv | Pool | Dense | SoftmaxOutput

_CONV_RE = re.compile(r"^C\((\d+)\)\((\d+)\)$")
_POOL_RE = re.compile(r"^S\((\d+)\)$")


def parse_arch(text: str) -> list[LayerSpec]:
    """Parse dash-separated C(n)(f) | S(s) tokens into layer specs.

    A Dense(5) -> SoftmaxOutput(5) classifier head is appended implicitly.
    """
    if not text or not text.strip():
        raise EmptyArchitecture("architecture string is empty")
    layers: list[LayerSpec] = []
    for pos, token in enumerate(text.strip().split("-"), start=1):
        token = token.strip()
        if m := _CONV_RE.match(token):
            maps, filt = int(m.group(1)), int(m.group(2))
            try:
                layers.append(Conv(maps, filt))
            except ValueError as exc:
                raise ArchSyntaxError(pos, str(exc)) from exc
        elif m := _POOL_RE.match(token):
            try:
                layers.append(Pool(int(m.group(1))))
            except ValueError as exc:
                raise ArchSyntaxError(pos, str(exc)) from exc
        else:
            raise ArchSyntaxError(pos, f"unrecognized token {token!r}")
    layers.append(Dense(N_CLASSES))
    layers.append(SoftmaxOutput(N_CLASSES))
    return layers


def output_shapes(
    layers, input_size: int, in_channels: int = 3
) -> list[tuple[int, ...]]:
    """Shape after each layer: (h, w, c) through the spatial stack, then the
    flattened dense/softmax widths. Raises ShapeMismatch when a layer empties
    the spatial extent."""
    shapes: list[tuple[int, ...]] = []
    h = w = input_size
    c = in_channels
    for i, layer in enumerate(layers):
        if isinstance(layer, Conv):
            h, w = h - layer.filter_size + 1, w - layer.filter_size + 1
            c = layer.maps
            if h < 1 or w < 1:
                raise ShapeMismatch(f"layer {i}: convolution exhausts the image")
            shapes.append((h, w, c))
        elif isinstance(layer, Pool):
            h, w = h // layer.scale, w // layer.scale
            if h < 1 or w < 1:
                raise ShapeMismatch(f"layer {i}: pooling exhausts the image")
            shapes.append((h, w, c))
        elif isinstance(layer, Dense):
            shapes.append((layer.units,))
            h = w = c = 0
        else:
            shapes.append((layer.classes,))
    return shapes


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 20
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0, batch_size >= 1")


class CnnModel:
    """Layer list plus per-layer weight tensors; weights mutate during
    training, everything else is fixed at construction."""

    def __init__(self, arch: str, input_size: int = 200, in_channels: int = 3, seed: int = 0):
        self.arch = arch
        self.layers = parse_arch(arch)
        self.input_size = input_size
        self.in_channels = in_channels
        self.shapes = output_shapes(self.layers, input_size, in_channels)
        self.weights: list[dict[str, np.ndarray]] = []
        rng = np.random.default_rng(seed)
        c = in_channels
        flat_dim = None
        for layer, shape in zip(self.layers, self.shapes):
            if isinstance(layer, Conv):
                f = layer.filter_size
                fan_in = f * f * c
                limit = np.sqrt(6.0 / fan_in)
                self.weights.append(
                    {
                        "w": rng.uniform(-limit, limit, size=(f, f, c, layer.maps)),
                        "b": np.zeros(layer.maps),
                    }
                )
                c = layer.maps
                flat_dim = shape[0] * shape[1] * shape[2]
            elif isinstance(layer, Pool):
                self.weights.append({})
                flat_dim = shape[0] * shape[1] * shape[2]
            elif isinstance(layer, Dense):
                if flat_dim is None:
                    flat_dim = input_size * input_size * in_channels
                limit = np.sqrt(6.0 / flat_dim)
                self.weights.append(
                    {
                        "w": rng.uniform(-limit, limit, size=(flat_dim, layer.units)),
                        "b": np.zeros(layer.units),
                    }
                )
                flat_dim = layer.units
            else:
                self.weights.append({})

    @property
    def flatten_length(self) -> int:
        for layer, w in zip(self.layers, self.weights):
            if isinstance(layer, Dense):
                return w["w"].shape[0]
        raise CnnError("model has no dense layer")

    @property
    def model_id(self) -> str:
        return f"skycast-cnn-{_weights_checksum(self.weights)[:12]}"


def _as_batch(model: CnnModel, x) -> np.ndarray:
    if isinstance(x, RasterImage):
        x = x.pixels
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[1:] != (model.input_size, model.input_size, model.in_channels):
        raise ShapeMismatch(
            f"expected input {model.input_size}x{model.input_size}x"
            f"{model.in_channels}, got {arr.shape}"
        )
    return arr


def _conv_windows(x: np.ndarray, f: int) -> np.ndarray:
    # (B, H', W', C, f, f) view over the spatial axes
    return np.lib.stride_tricks.sliding_window_view(x, (f, f), axis=(1, 2))


def _forward(model: CnnModel, X: np.ndarray, keep_cache: bool):
    caches = []
    a = X
    for layer, wt in zip(model.layers, model.weights):
        if isinstance(layer, Conv):
            windows = _conv_windows(a, layer.filter_size)
            z = np.einsum("bhwcij,ijco->bhwo", windows, wt["w"], optimize=True) + wt["b"]
            mask = z > 0
            out = np.where(mask, z, 0.0)
            caches.append({"x": a, "mask": mask} if keep_cache else None)
            a = out
        elif isinstance(layer, Pool):
            s = layer.scale
            b, h, w, c = a.shape
            hc, wc = (h // s) * s, (w // s) * s
            cropped = a[:, :hc, :wc, :]
            out = cropped.reshape(b, h // s, s, w // s, s, c).mean(axis=(2, 4))
            caches.append({"shape": a.shape} if keep_cache else None)
            a = out
        elif isinstance(layer, Dense):
            flat = a.reshape(a.shape[0], -1)
            if flat.shape[1] != wt["w"].shape[0]:
                raise ShapeMismatch(
                    f"dense input length {flat.shape[1]} does not match weights "
                    f"{wt['w'].shape[0]}"
                )
            out = flat @ wt["w"] + wt["b"]
            caches.append({"flat": flat, "shape": a.shape} if keep_cache else None)
            a = out
        else:  # SoftmaxOutput
            shifted = a - a.max(axis=1, keepdims=True)
            log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            log_p = shifted - log_norm
            p = np.exp(log_p)
            caches.append({"p": p, "log_p": log_p} if keep_cache else None)
            a = p
    return a, caches


def forward(model: CnnModel, x) -> np.ndarray:
    """Class probabilities (5,) for one image, or (B, 5) for a batch."""
    arr = _as_batch(model, x)
    probs, _ = _forward(model, arr, keep_cache=False)
    if isinstance(x, RasterImage) or np.asarray(x).ndim == 3:
        return probs[0]
    return probs


def loss_and_gradients(model: CnnModel, batch, labels):
    """Mean cross-entropy over the batch plus backprop gradients for every
    weight tensor (a list of dicts mirroring model.weights)."""
    X = _as_batch(model, batch)
    y = np.array(
        [v.value if isinstance(v, AqiGrade) else int(v) for v in labels], dtype=np.int64
    )
    if len(y) != len(X):
        raise ShapeMismatch("batch and labels must be aligned")
    if len(y) == 0:
        raise ShapeMismatch("batch must be nonempty")
    probs, caches = _forward(model, X, keep_cache=True)
    n = len(y)
    log_p = caches[-1]["log_p"]
    loss = float(-log_p[np.arange(n), y].mean())

    grads: list[dict[str, np.ndarray]] = [dict() for _ in model.layers]
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), y] = 1.0
    delta = (probs - onehot) / n  # gradient at the logits, through softmax+CE
    for i in range(len(model.layers) - 2, -1, -1):
        layer, wt, cache = model.layers[i], model.weights[i], caches[i]
        if isinstance(layer, Dense):
            flat = cache["flat"]
            grads[i]["w"] = flat.T @ delta
            grads[i]["b"] = delta.sum(axis=0)
            delta = (delta @ wt["w"].T).reshape(cache["shape"])
        elif isinstance(layer, Pool):
            s = layer.scale
            b, h, w, c = cache["shape"]
            hp, wp = delta.shape[1], delta.shape[2]
            spread = np.zeros((b, h, w, c))
            expanded = np.repeat(np.repeat(delta, s, axis=1), s, axis=2) / (s * s)
            spread[:, : hp * s, : wp * s, :] = expanded
            delta = spread
        elif isinstance(layer, Conv):
            x_in = cache["x"]
            dz = delta * cache["mask"]
            windows = _conv_windows(x_in, layer.filter_size)
            grads[i]["w"] = np.einsum("bhwcij,bhwo->ijco", windows, dz, optimize=True)
            grads[i]["b"] = dz.sum(axis=(0, 1, 2))
            f = layer.filter_size
            pad = f - 1
            dz_pad = np.pad(dz, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
            dz_windows = np.lib.stride_tricks.sliding_window_view(dz_pad, (f, f), axis=(1, 2))
            w_flip = wt["w"][::-1, ::-1, :, :]
            delta = np.einsum("bhwopq,pqco->bhwc", dz_windows, w_flip, optimize=True)
    return loss, grads


def train(model: CnnModel, X, y, cfg: TrainConfig | None = None):
    """Mini-batch SGD with momentum and seeded shuffling; returns the model
    and the per-epoch mean loss history."""
    cfg = cfg or TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.array(
        [v.value if isinstance(v, AqiGrade) else int(v) for v in y], dtype=np.int64
    )
    if len(X) != len(y) or len(y) == 0:
        raise ShapeMismatch("training data must be nonempty and aligned")
    rng = np.random.default_rng(cfg.seed)
    velocity = [
        {name: np.zeros_like(arr) for name, arr in wt.items()} for wt in model.weights
    ]
    history = []
    n = len(y)
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            loss, grads = loss_and_gradients(model, X[idx], y[idx])
            epoch_loss += loss * len(idx)
            for wt, vel, grad in zip(model.weights, velocity, grads):
                for name in wt:
                    vel[name] = cfg.momentum * vel[name] - cfg.learning_rate * grad[name]
                    wt[name] += vel[name]
        history.append(epoch_loss / n)
    return model, history


def predict(model: CnnModel, img) -> tuple[AqiGrade, np.ndarray]:
    """Argmax grade with severity tie-breaking, plus the probabilities."""
    probs = forward(model, img)
    if probs.ndim != 1:
        raise ShapeMismatch("predict expects a single image")
    return GRADES[severity_argmax(probs)], probs


# ---------------------------------------------------------------------------
# Model file
# ---------------------------------------------------------------------------

CNN_MAGIC = "SKYCAST-CNN v1"


def _weight_arrays(weights) -> list[tuple[int, str, np.ndarray]]:
    out = []
    for i, wt in enumerate(weights):
        for name in sorted(wt):
            out.append((i, name, wt[name]))
    return out


def _weights_checksum(weights) -> str:
    blob = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
        for _, _, arr in _weight_arrays(weights)
    )
    return hashlib.sha256(blob).hexdigest()


def save_cnn(model: CnnModel, path) -> None:
    arrays = _weight_arrays(model.weights)
    blob = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, _, a in arrays)
    doc = {
        "arch": model.arch,
        "input_size": model.input_size,
        "in_channels": model.in_channels,
        "model_id": model.model_id,
        "arrays": [
            {"layer": i, "name": name, "shape": list(a.shape)} for i, name, a in arrays
        ],
        "blob": base64.b64encode(blob).decode("ascii"),
        "checksum": hashlib.sha256(blob).hexdigest(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CNN_MAGIC + "\n")
        json.dump(doc, fh)
        fh.write("\n")


def load_cnn(path) -> CnnModel:
    with open(path, encoding="utf-8") as fh:
        magic = fh.readline().strip()
        if magic != CNN_MAGIC:
            raise CnnError(f"not a {CNN_MAGIC} file: {path}")
        doc = json.load(fh)
    blob = base64.b64decode(doc["blob"])
    if hashlib.sha256(blob).hexdigest() != doc["checksum"]:
        raise CnnError("weight checksum mismatch; file is corrupt")
    model = CnnModel(
        doc["arch"], input_size=doc["input_size"], in_channels=doc["in_channels"], seed=0
    )
    flat = np.frombuffer(blob, dtype="<f8")
    offset = 0
    for meta in doc["arrays"]:
        shape = tuple(meta["shape"])
        size = int(np.prod(shape))
        arr = flat[offset : offset + size].reshape(shape).copy()
        model.weights[meta["layer"]][meta["name"]] = arr
        offset += size
    if offset != len(flat):
        raise CnnError("weight blob length does not match declared shapes")
    return model
