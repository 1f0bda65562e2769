"""Small fully convolutional denoiser with analytic gradients and Adam training.

Activations are kept channels-last, ``(batch, H, W, C)``; weights use the
``[out][in][k][k]`` layout of the CNW1 file format.  Layers compute a
cross-correlation with zero padding that preserves the spatial shape.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..core import rng_for

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kernel: int
    c_in: int
    c_out: int
    bias: bool = True
    activation: str = "relu"  # "relu" | "none"

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel side must be odd and positive, got {self.kernel}")
        if self.activation not in ("relu", "none"):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class ConvNetSpec:
    layers: tuple[LayerSpec, ...]
    residual: bool = True

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        if self.layers[0].c_in != 1 or self.layers[-1].c_out != 1:
            raise ValueError("first layer must take 1 channel and last layer emit 1")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.c_out != b.c_in:
                raise ValueError(f"channel mismatch {a.c_out} -> {b.c_in}")

    @classmethod
    def default(cls, channels: int = 8, kernel: int = 3, n_layers: int = 3) -> "ConvNetSpec":
        """Residual net 1 -> channels -> ... -> 1 with ReLU between layers."""
        if n_layers == 1:
            return cls((LayerSpec(kernel, 1, 1, True, "none"),), True)
        layers = [LayerSpec(kernel, 1, channels)]
        layers += [LayerSpec(kernel, channels, channels) for _ in range(n_layers - 2)]
        layers.append(LayerSpec(kernel, channels, 1, True, "none"))
        return cls(tuple(layers), True)


@dataclass
class ConvNet:
    spec: ConvNetSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray | None]

    def __post_init__(self):
        if len(self.weights) != len(self.spec.layers) or len(self.biases) != len(self.spec.layers):
            raise ValueError("weight count does not match the layer count")
        for L, W, b in zip(self.spec.layers, self.weights, self.biases):
            if W.shape != (L.c_out, L.c_in, L.kernel, L.kernel):
                raise ValueError(f"weight shape {W.shape} does not match {L}")
            if L.bias and (b is None or b.shape != (L.c_out,)):
                raise ValueError(f"layer {L} needs a bias of length {L.c_out}")
            if not L.bias and b is not None:
                raise ValueError(f"layer {L} has no bias but one was given")

    @classmethod
    def init(cls, spec: ConvNetSpec, rng: np.random.Generator) -> "ConvNet":
        """Glorot-uniform weights, zero biases."""
        Ws, bs = [], []
        for L in spec.layers:
            fan_in = L.c_in * L.kernel**2
            fan_out = L.c_out * L.kernel**2
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            Ws.append(rng.uniform(-lim, lim, size=(L.c_out, L.c_in, L.kernel, L.kernel)))
            bs.append(np.zeros(L.c_out) if L.bias else None)
        return cls(spec, Ws, bs)

    def params(self) -> list[np.ndarray]:
        return [p for W, b in zip(self.weights, self.biases) for p in (W, b) if p is not None]

    def copy(self) -> "ConvNet":
        return ConvNet(
            self.spec,
            [W.copy() for W in self.weights],
            [None if b is None else b.copy() for b in self.biases],
        )

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return convnet_forward(self, x)


def _im2col(a: np.ndarray, k: int) -> np.ndarray:
    p = k // 2
    B, H, W, C = a.shape
    ap = np.pad(a, ((0, 0), (p, p), (p, p), (0, 0)))
    win = sliding_window_view(ap, (k, k), axis=(1, 2))  # (B, H, W, C, k, k)
    return win.reshape(B * H * W, C * k * k)


def _col2im(dcols: np.ndarray, shape, k: int) -> np.ndarray:
    p = k // 2
    B, H, W, C = shape
    d = dcols.reshape(B, H, W, C, k, k)
    out = np.zeros((B, H + 2 * p, W + 2 * p, C))
    for u in range(k):
        for v in range(k):
            out[:, u : u + H, v : v + W, :] += d[..., u, v]
    return out[:, p : p + H, p : p + W, :]


def _forward_cached(net: ConvNet, x: np.ndarray):
    """x: (B, H, W). Returns output (B, H, W) and per-layer caches."""
    a = x[..., None]
    caches = []
    for L, W, b in zip(net.spec.layers, net.weights, net.biases):
        B, H, Wd, _ = a.shape
        cols = _im2col(a, L.kernel)
        z = cols @ W.reshape(L.c_out, -1).T
        if b is not None:
            z = z + b
        z = z.reshape(B, H, Wd, L.c_out)
        out = np.maximum(z, 0.0) if L.activation == "relu" else z
        caches.append((a.shape, cols, z))
        a = out
    y = a[..., 0]
    if net.spec.residual:
        y = y + x
    return y, caches


def convnet_forward(net: ConvNet, x: np.ndarray) -> np.ndarray:
    """Apply the network to one 2D patch ``(H, W)`` or a batch ``(B, H, W)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return _forward_cached(net, x[None])[0][0]
    if x.ndim != 3:
        raise ValueError(f"expected (H, W) or (B, H, W) input, got {x.shape}")
    return _forward_cached(net, x)[0]


def loss_and_grad(net: ConvNet, inputs: np.ndarray, targets: np.ndarray, n_total: int | None = None):
    """Patch loss ``sum_n ||u(z_n) - t_n||^2 / n_total`` and its gradients.

    Gradients are returned in the order of :meth:`ConvNet.params`.
    """
    n_total = len(inputs) if n_total is None else n_total
    out, caches = _forward_cached(net, inputs)
    diff = out - targets
    loss = float(np.sum(diff * diff)) / n_total
    g = (2.0 / n_total) * diff[..., None]
    grads_rev = []
    for L, W, (shape_in, cols, z) in zip(
        reversed(net.spec.layers), reversed(net.weights), reversed(caches)
    ):
        if L.activation == "relu":
            g = g * (z > 0)
        gz = g.reshape(-1, L.c_out)
        dW = (gz.T @ cols).reshape(W.shape)
        db = gz.sum(axis=0) if L.bias else None
        grads_rev.append((dW, db))
        dcols = gz @ W.reshape(L.c_out, -1)
        g = _col2im(dcols, shape_in, L.kernel)
    grads = []
    for dW, db in reversed(grads_rev):
        grads.append(dW)
        if db is not None:
            grads.append(db)
    return loss, grads


def dataset_loss(net: ConvNet, inputs: np.ndarray, targets: np.ndarray, chunk: int = 512) -> float:
    total = 0.0
    for i in range(0, len(inputs), chunk):
        d = convnet_forward(net, inputs[i : i + chunk]) - targets[i : i + chunk]
        total += float(np.sum(d * d))
    return total / len(inputs)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("need lr > 0, epochs >= 1 and batch_size >= 1")


@dataclass
class TrainResult:
    net: ConvNet
    history: list[float] = field(default_factory=list)  # dataset loss, index 0 = initial


def convnet_train(
    spec: ConvNetSpec,
    inputs,
    targets,
    cfg: TrainConfig,
    net: ConvNet | None = None,
) -> TrainResult:
    """Fit the denoiser to (noisy, clean) patch pairs with Adam.

    ``inputs`` and ``targets`` are arrays of shape ``(n, H, W)`` (or lists of
    equally shaped patches).  The returned history holds the full-dataset
    loss before training and after every epoch.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.ndim != 3 or len(inputs) == 0:
        raise TrainingError(f"need a nonempty (n, H, W) patch stack, got {inputs.shape}")
    if inputs.shape != targets.shape:
        raise TrainingError(f"inputs {inputs.shape} and targets {targets.shape} differ")
    if net is None:
        net = ConvNet.init(spec, rng_for(cfg.seed, "init"))
    else:
        net = net.copy()
    shuffle = rng_for(cfg.seed, "shuffle")
    params = net.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    n = len(inputs)
    history = [dataset_loss(net, inputs, targets)]
    step = 0
    for epoch in range(cfg.epochs):
        perm = shuffle.permutation(n)
        for i in range(0, n, cfg.batch_size):
            idx = perm[i : i + cfg.batch_size]
            loss, grads = loss_and_grad(net, inputs[idx], targets[idx])
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss {loss} at epoch {epoch}, step {step}; "
                    f"last dataset loss {history[-1]:.4g}, lr {cfg.lr}"
                )
            step += 1
            c1 = 1.0 - cfg.beta1**step
            c2 = 1.0 - cfg.beta2**step
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= cfg.beta1
                mi += (1.0 - cfg.beta1) * g
                vi *= cfg.beta2
                vi += (1.0 - cfg.beta2) * g * g
                p -= cfg.lr * (mi / c1) / (np.sqrt(vi / c2) + cfg.eps)
        history.append(dataset_loss(net, inputs, targets))
        log.debug("epoch %d loss %.6g", epoch + 1, history[-1])
    if not np.isfinite(history[-1]):
        raise TrainingError(f"training diverged, loss history {history}")
    return TrainResult(net, history)


def write_train_log(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for i, h in enumerate(history):
            w.writerow([i, repr(float(h))])


def save_cnw(net: ConvNet, path) -> None:
    """Write ``net`` in CNW1 format (text header, then little-endian float64 data)."""
    lines = ["CNW1"]
    for L in net.spec.layers:
        lines.append(
            f"conv {L.kernel} {L.c_in} {L.c_out} {int(L.bias)} {L.activation}"
        )
    lines.append(f"residual {int(net.spec.residual)}")
    lines.append("data:")
    payload = bytearray(("\n".join(lines) + "\n").encode("ascii"))
    for W, b in zip(net.weights, net.biases):
        payload += np.ascontiguousarray(W, dtype="<f8").tobytes()
        if b is not None:
            payload += np.ascontiguousarray(b, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(payload))


def load_cnw(path) -> ConvNet:
    raw = Path(path).read_bytes()
    marker = b"data:\n"
    pos = raw.find(marker)
    if pos < 0:
        raise ValueError(f"{path}: missing 'data:' line")
    header = raw[:pos].decode("ascii").splitlines()
    body = raw[pos + len(marker) :]
    if not header or header[0] != "CNW1":
        raise ValueError(f"{path}: not a CNW1 file")
    layers, residual = [], None
    for line in header[1:]:
        parts = line.split()
        if parts[0] == "conv" and len(parts) == 6:
            k, ci, co, bias = (int(v) for v in parts[1:5])
            layers.append(LayerSpec(k, ci, co, bool(bias), parts[5]))
        elif parts[0] == "residual" and len(parts) == 2:
            residual = bool(int(parts[1]))
        else:
            raise ValueError(f"{path}: bad header line {line!r}")
    if residual is None:
        raise ValueError(f"{path}: missing residual line")
    spec = ConvNetSpec(tuple(layers), residual)
    need = sum(L.c_out * L.c_in * L.kernel**2 + (L.c_out if L.bias else 0) for L in layers)
    if len(body) != 8 * need:
        raise ValueError(f"{path}: expected {8 * need} data bytes, found {len(body)}")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    Ws, bs, off = [], [], 0
    for L in layers:
        n = L.c_out * L.c_in * L.kernel**2
        Ws.append(flat[off : off + n].reshape(L.c_out, L.c_in, L.kernel, L.kernel).copy())
        off += n
        if L.bias:
            bs.append(flat[off : off + L.c_out].copy())
            off += L.c_out
        else:
            bs.append(None)
    return ConvNet(spec, Ws, bs)


__all__ = [
    "ConvNet",
    "ConvNetSpec",
    "LayerSpec",
    "TrainConfig",
    "TrainResult",
    "TrainingError",
    "convnet_forward",
    "convnet_train",
    "dataset_loss",
    "load_cnw",
    "loss_and_grad",
    "save_cnw",
    "write_train_log",
]
