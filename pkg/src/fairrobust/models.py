"""Small differentiable classifiers (linear / MLP) with hand-written backprop.

Parameters live in one flat float64 vector; each layer stores its weight
matrix (out x in, row-major) followed by its bias. Scores are raw logits.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("relu", "tanh")
MAX_HIDDEN_LAYERS = 3

CHECKPOINT_MAGIC = b"FRCK"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    num_classes: int = 2
    hidden: tuple = ()
    activations: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        acts = tuple(self.activations) if self.hidden else ()
        if len(acts) == 1 and len(self.hidden) > 1:
            acts = acts * len(self.hidden)
        if not acts and self.hidden:
            acts = ("relu",) * len(self.hidden)
        object.__setattr__(self, "activations", acts)
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if len(self.hidden) > MAX_HIDDEN_LAYERS:
            raise ValueError(f"at most {MAX_HIDDEN_LAYERS} hidden layers are supported")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be positive")
        if len(acts) != len(self.hidden):
            raise ValueError("need one activation per hidden layer")
        bad = [a for a in acts if a not in ACTIVATIONS]
        if bad:
            raise ValueError(f"unknown activation(s) {bad}; choose from {ACTIVATIONS}")

    @property
    def widths(self) -> tuple:
        return (self.input_dim, *self.hidden, self.num_classes)

    @property
    def num_params(self) -> int:
        w = self.widths
        return sum(w[i + 1] * (w[i] + 1) for i in range(len(w) - 1))

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "num_classes": self.num_classes,
                "hidden": list(self.hidden), "activations": list(self.activations)}

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(int(d["input_dim"]), int(d.get("num_classes", 2)),
                   tuple(d.get("hidden", ())), tuple(d.get("activations", ())))


@dataclass
class SmallModel:
    arch: Architecture
    params: np.ndarray
    _slices: list = field(init=False, repr=False)

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (self.arch.num_params,):
            raise ValueError(
                f"architecture needs {self.arch.num_params} parameters, got {self.params.shape}")
        self._slices = _layer_slices(self.arch)

    @property
    def input_dim(self) -> int:
        return self.arch.input_dim

    @property
    def num_classes(self) -> int:
        return self.arch.num_classes

    def layers(self, params=None):
        """Yield ``(W, b)`` views for each layer."""
        p = self.params if params is None else params
        for (w_sl, w_shape), b_sl in self._slices:
            yield p[w_sl].reshape(w_shape), p[b_sl]

    def copy(self) -> "SmallModel":
        return SmallModel(self.arch, self.params.copy())

    def __call__(self, x):
        return forward(self, x)


@dataclass
class GradientRecord:
    loss_value: float
    grad_params: np.ndarray
    grad_input: np.ndarray


def _layer_slices(arch: Architecture):
    out = []
    off = 0
    w = arch.widths
    for i in range(len(w) - 1):
        n_in, n_out = w[i], w[i + 1]
        w_sl = slice(off, off + n_in * n_out)
        off += n_in * n_out
        b_sl = slice(off, off + n_out)
        off += n_out
        out.append(((w_sl, (n_out, n_in)), b_sl))
    return out


def init_params(arch: Architecture, seed: int) -> SmallModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias."""
    rng = np.random.default_rng(seed)
    chunks = []
    w = arch.widths
    for i in range(len(w) - 1):
        bound = 1.0 / np.sqrt(w[i])
        chunks.append(rng.uniform(-bound, bound, size=w[i] * w[i + 1]))
        chunks.append(rng.uniform(-bound, bound, size=w[i + 1]))
    return SmallModel(arch, np.concatenate(chunks))


def linear_model(weights, bias) -> SmallModel:
    """Linear model from a (C x d) weight matrix and length-C bias."""
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    bias = np.asarray(bias, dtype=float).ravel()
    arch = Architecture(weights.shape[1], weights.shape[0])
    return SmallModel(arch, np.concatenate([weights.ravel(), bias]))


def threshold_model(theta: float) -> SmallModel:
    """1-D two-class model predicting class 1 iff ``x > theta``.

    Class 0 plays the role of label -1 and class 1 of label +1; at
    ``x == theta`` the scores tie and argmax picks class 0.
    """
    return linear_model([[-1.0], [1.0]], [theta, -theta])


def induced_threshold(model: SmallModel) -> float:
    """Decision point ``-b/w`` of a 1-D two-class linear model."""
    if model.arch.hidden or model.arch.input_dim != 1 or model.num_classes != 2:
        raise ValueError("induced_threshold needs a 1-D two-class linear model")
    (W, b), = model.layers()
    dw = W[1, 0] - W[0, 0]
    db = b[1] - b[0]
    return float(-db / dw)


# --------------------------------------------------------------------------
# forward / backward

def _act(name, z):
    return np.maximum(z, 0.0) if name == "relu" else np.tanh(z)


def _act_grad(name, z, a):
    return (z > 0).astype(float) if name == "relu" else 1.0 - a * a


def _check_input(model: SmallModel, X):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    if X2.ndim != 2 or X2.shape[1] != model.input_dim:
        raise ValueError(f"expected input of dimension {model.input_dim}, got shape {X.shape}")
    return X2, single


def forward_cache(model: SmallModel, X):
    """Scores for a batch plus the intermediates backprop needs."""
    X, _ = _check_input(model, X)
    acts = model.arch.activations
    cache = [(X, None)]
    h = X
    layers = list(model.layers())
    for i, (W, b) in enumerate(layers):
        z = h @ W.T + b
        if i < len(layers) - 1:
            h = _act(acts[i], z)
            cache.append((h, z))
        else:
            h = z
    return h, cache


def forward(model: SmallModel, x):
    """Logits; a single input vector gives a length-C vector, a batch an (n, C) array."""
    X, single = _check_input(model, x)
    scores, _ = forward_cache(model, X)
    return scores[0] if single else scores


def backward_batch(model: SmallModel, cache, dscores):
    """Back-propagate ``dL/dscores`` (n x C).

    Returns ``(grad_params, grad_input)`` where the parameter gradient is
    summed over the batch.
    """
    layers = list(model.layers())
    acts = model.arch.activations
    grad = np.zeros_like(model.params)
    grad_layers = list(model.layers(grad))
    delta = np.asarray(dscores, dtype=float)
    for i in range(len(layers) - 1, -1, -1):
        h_in, _ = cache[i]
        gW, gb = grad_layers[i]
        gW += delta.T @ h_in
        gb += delta.sum(axis=0)
        delta = delta @ layers[i][0]
        if i > 0:
            h, z = cache[i]
            delta = delta * _act_grad(acts[i - 1], z, h)
    return grad, delta


def predict(model: SmallModel, X):
    """Argmax class; ties resolve to the lowest class index."""
    scores = forward(model, X)
    return np.argmax(scores, axis=-1)


def softmax(scores):
    s = np.asarray(scores, dtype=float)
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def backward(model: SmallModel, x, loss_fn, label: int, group=None) -> GradientRecord:
    """Loss value and exact gradients for a single sample.

    ``loss_fn`` is either a :class:`~fairrobust.losses.LossKind` (or its
    name) or a callable ``(scores, label) -> (value, dscores)``. ``group`` is
    accepted for interface symmetry; per-sample losses ignore it.
    """
    x = np.asarray(x, dtype=float)
    scores, cache = forward_cache(model, x[None, :] if x.ndim == 1 else x)
    if callable(loss_fn):
        value, dscores = loss_fn(scores[0], label)
        dscores = np.asarray(dscores, dtype=float)[None, :]
    else:
        from .losses import loss_and_grad

        values, dscores = loss_and_grad(loss_fn, scores, np.array([label]))
        value = values[0]
    g_params, g_input = backward_batch(model, cache, dscores)
    return GradientRecord(float(value), g_params, g_input.reshape(x.shape))


# --------------------------------------------------------------------------
# checkpoints

_ACT_CODES = {"relu": 0, "tanh": 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


def save_checkpoint(model: SmallModel, path, config: dict | None = None) -> Path:
    """Write the binary checkpoint and a JSON sidecar next to it.

    Layout (little-endian): magic ``FRCK``, u32 version, u32 input_dim,
    u32 num_classes, u32 n_hidden, n_hidden x (u32 width, u32 activation
    code), u64 n_params, n_params x f64.
    """
    path = Path(path)
    arch = model.arch
    buf = bytearray(CHECKPOINT_MAGIC)
    buf += struct.pack("<IIII", CHECKPOINT_VERSION, arch.input_dim, arch.num_classes,
                       len(arch.hidden))
    for width, act in zip(arch.hidden, arch.activations):
        buf += struct.pack("<II", width, _ACT_CODES[act])
    buf += struct.pack("<Q", model.params.size)
    buf += model.params.astype("<f8").tobytes()
    path.write_bytes(bytes(buf))
    sidecar = {"architecture": arch.to_dict(), "format_version": CHECKPOINT_VERSION}
    if config is not None:
        sidecar["config"] = config
    sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def load_checkpoint(path):
    """Read a checkpoint; returns ``(model, sidecar_dict_or_None)``."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {data[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    try:
        version, d, c, nh = struct.unpack_from("<IIII", data, 4)
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path}: unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})")
        off = 20
        hidden, acts = [], []
        for _ in range(nh):
            w, code = struct.unpack_from("<II", data, off)
            off += 8
            if code not in _ACT_NAMES:
                raise CheckpointError(f"{path}: unknown activation code {code}")
            hidden.append(w)
            acts.append(_ACT_NAMES[code])
        (n,) = struct.unpack_from("<Q", data, off)
        off += 8
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated header ({exc})") from None
    if len(data) != off + 8 * n:
        raise CheckpointError(f"{path}: expected {n} parameters, file size does not match")
    params = np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(np.float64)
    try:
        model = SmallModel(Architecture(d, c, tuple(hidden), tuple(acts)), params)
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    side = sidecar_path(path)
    sidecar = json.loads(side.read_text()) if side.exists() else None
    return model, sidecar
