"""Three-layer SRCNN in numpy: forward pass, backprop, SGD and checkpoints.

Activations are channel-last, ``(B, H, W, C)``. Every convolution is zero-padded
("same") so spatial size is preserved through the network.
"""

from __future__ import annotations

import logging
import os
import struct
import zlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

log = logging.getLogger(__name__)

DEFAULT_LEARNING_RATES = (1e-4, 1e-4, 1e-5)
CHECKPOINT_MAGIC = b"SRCNN1"

# im2col matrices are built in slices of at most this many elements
_COLS_BUDGET = 1 << 22


def sub_seed(seed: int, name: str) -> int:
    """Stable per-purpose seed derived from the global seed."""
    return int(np.random.SeedSequence([seed, zlib.crc32(name.encode())]).generate_state(1)[0])


@dataclass
class ConvLayer:
    weight: np.ndarray  # (out_ch, in_ch, k, k)
    bias: np.ndarray  # (out_ch,)
    learning_rate: float

    def __post_init__(self):
        o, _, k, k2 = self.weight.shape
        if k != k2 or k % 2 == 0:
            raise ValueError(f"kernel must be square with odd size, got {k}x{k2}")
        if self.bias.shape != (o,):
            raise ValueError(f"bias shape {self.bias.shape} does not match {o} output channels")

    @property
    def k(self) -> int:
        return self.weight.shape[-1]

    @property
    def in_ch(self) -> int:
        return self.weight.shape[1]

    @property
    def out_ch(self) -> int:
        return self.weight.shape[0]


@dataclass
class SrcnnModel:
    layers: list[ConvLayer]

    @classmethod
    def create(
        cls,
        widths: Sequence[int] = (64, 32),
        kernels: Sequence[int] = (9, 1, 5),
        learning_rates: Sequence[float] = DEFAULT_LEARNING_RATES,
        seed: int = 0,
        init_std: float | str = 1e-3,
        dtype=np.float32,
    ) -> "SrcnnModel":
        """Gaussian-initialised weights, zero biases.

        ``init_std="he"`` scales each layer's deviation by ``sqrt(2 / fan_in)``.
        """
        rng = np.random.default_rng(sub_seed(seed, "init"))
        chans = [1, *widths, 1]
        layers = []
        for i, (k, lr) in enumerate(zip(kernels, learning_rates)):
            shape = (chans[i + 1], chans[i], k, k)
            std = np.sqrt(2.0 / (chans[i] * k * k)) if init_std == "he" else float(init_std)
            w = (rng.standard_normal(shape) * std).astype(dtype)
            layers.append(ConvLayer(w, np.zeros(chans[i + 1], dtype=dtype), float(lr)))
        return cls(layers)

    def copy(self) -> "SrcnnModel":
        return SrcnnModel(
            [ConvLayer(l.weight.copy(), l.bias.copy(), l.learning_rate) for l in self.layers]
        )

    def parameters(self) -> list[np.ndarray]:
        return [p for l in self.layers for p in (l.weight, l.bias)]

    @property
    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


@dataclass
class Cache:
    inputs: list[np.ndarray]  # input of each layer
    pre: list[np.ndarray]  # pre-activation output of each layer
    squeeze: bool


def _im2col_slices(b: int, h: int, w: int, cols_per_px: int):
    """Yield ``(batch slice, row slice)`` pieces that keep im2col matrices bounded."""
    per_image = h * w * cols_per_px
    if per_image <= _COLS_BUDGET:
        step = max(1, _COLS_BUDGET // per_image)
        for b0 in range(0, b, step):
            yield slice(b0, min(b, b0 + step)), slice(0, h)
    else:
        rows = max(1, _COLS_BUDGET // (w * cols_per_px))
        for bi in range(b):
            for r0 in range(0, h, rows):
                yield slice(bi, bi + 1), slice(r0, min(h, r0 + rows))


def _pad(x: np.ndarray, k: int) -> np.ndarray:
    p = k // 2
    return np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))


def _use_im2col(c: int, o: int, k: int) -> bool:
    # many outputs per window: one big GEMM wins; few outputs: per-offset products
    return o >= c and k > 1


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-padded cross-correlation on channel-last data, ``(B, H, W, C) -> (B, H, W, O)``.

    ``weight`` has shape ``(O, C, k, k)``.
    """
    b, h, w, c = x.shape
    o, _, k, _ = weight.shape
    weight = weight.astype(np.float64)
    if k == 1:
        out = (x.reshape(-1, c) @ weight[:, :, 0, 0].T).reshape(b, h, w, o)
    elif _use_im2col(c, o, k):
        out = np.empty((b, h, w, o))
        wmat = weight.reshape(o, -1).T
        win = sliding_window_view(_pad(x, k), (k, k), axis=(1, 2))  # (B, H, W, C, k, k)
        for bs, rs in _im2col_slices(b, h, w, c * k * k):
            cols = win[bs, rs].reshape(-1, c * k * k)
            out[bs, rs] = (cols @ wmat).reshape(out[bs, rs].shape)
    else:
        # project every pixel onto all kernel taps, then shift-add the taps
        p = k // 2
        taps = x.reshape(-1, c) @ weight.transpose(1, 0, 2, 3).reshape(c, -1)
        taps = _pad(taps.reshape(b, h, w, o * k * k), k).reshape(b, h + 2 * p, w + 2 * p, o, k, k)
        out = np.zeros((b, h, w, o))
        for i in range(k):
            for j in range(k):
                out += taps[:, i : i + h, j : j + w, :, i, j]
    out += bias.astype(np.float64)
    return out


def conv2d_weight_grad(x: np.ndarray, grad: np.ndarray, k: int) -> np.ndarray:
    """Kernel gradient ``(O, C, k, k)`` from layer input and output gradient (channel-last)."""
    b, h, w, c = x.shape
    o = grad.shape[-1]
    if k == 1:
        return (grad.reshape(-1, o).T @ x.reshape(-1, c)).reshape(o, c, 1, 1)
    if _use_im2col(c, o, k):
        gw = np.zeros((o, c * k * k))
        win = sliding_window_view(_pad(x, k), (k, k), axis=(1, 2))
        for bs, rs in _im2col_slices(b, h, w, c * k * k):
            cols = win[bs, rs].reshape(-1, c * k * k)
            gw += grad[bs, rs].reshape(-1, o).T @ cols
        return gw.reshape(o, c, k, k)
    # im2col of the (few-channel) output gradient instead of the input
    win = sliding_window_view(_pad(grad, k), (k, k), axis=(1, 2))[..., ::-1, ::-1]
    gw = np.zeros((o * k * k, c))
    for bs, rs in _im2col_slices(b, h, w, o * k * k):
        cols = win[bs, rs].reshape(-1, o * k * k)
        gw += cols.T @ x[bs, rs].reshape(-1, c)
    return gw.reshape(o, k, k, c).transpose(0, 3, 1, 2)


def conv2d_input_grad(grad: np.ndarray, weight: np.ndarray) -> np.ndarray:
    # same padding with odd k: the adjoint is a same-padded correlation with
    # the spatially flipped, channel-transposed kernel
    flipped = weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    return conv2d(grad, flipped, np.zeros(flipped.shape[0]))


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[None, :, :, None], True
    if x.ndim == 3:
        return x[..., None], False
    raise ValueError(f"expected (H, W) or (B, H, W) input, got shape {x.shape}")


def forward(model: SrcnnModel, x: np.ndarray) -> tuple[np.ndarray, Cache]:
    """Run the network on a plane ``(H, W)`` or batch ``(B, H, W)``."""
    a, squeeze = _as_batch(x)
    inputs, pre = [], []
    last = len(model.layers) - 1
    for i, layer in enumerate(model.layers):
        inputs.append(a)
        z = conv2d(a, layer.weight, layer.bias)
        pre.append(z)
        a = z if i == last else np.maximum(z, 0.0)
    out = a[0, :, :, 0] if squeeze else a[..., 0]
    return out, Cache(inputs, pre, squeeze)


def predict(model: SrcnnModel, x: np.ndarray) -> np.ndarray:
    return forward(model, x)[0]


Grads = list[tuple[np.ndarray, np.ndarray]]


def backward(
    model: SrcnnModel, cache: Cache, grad_output: np.ndarray, input_grad: bool = False
):
    """Gradients ``[(dW, db), ...]`` per layer, plus the input gradient if asked."""
    if len(cache.pre) != len(model.layers):
        raise ValueError("cache does not belong to this model")
    g, _ = _as_batch(grad_output)
    if g.shape != cache.pre[-1].shape:
        raise ValueError(f"grad_output shape {np.shape(grad_output)} does not match forward output")
    grads: Grads = [None] * len(model.layers)  # type: ignore[list-item]
    last = len(model.layers) - 1
    for i in range(last, -1, -1):
        layer = model.layers[i]
        if i != last:
            g = g * (cache.pre[i] > 0)
        if cache.inputs[i].shape[-1] != layer.in_ch:
            raise ValueError("cache does not belong to this model")
        grads[i] = (
            conv2d_weight_grad(cache.inputs[i], g, layer.k),
            g.sum(axis=(0, 1, 2)),
        )
        if i > 0 or input_grad:
            g = conv2d_input_grad(g, layer.weight)
    if input_grad:
        return grads, (g[0, :, :, 0] if cache.squeeze else g[..., 0])
    return grads


def sgd_step(model: SrcnnModel, grads: Grads) -> SrcnnModel:
    """In-place plain SGD update with each layer's own learning rate."""
    if len(grads) != len(model.layers):
        raise ValueError("gradient list does not match model layers")
    for layer, (gw, gb) in zip(model.layers, grads):
        if gw.shape != layer.weight.shape or gb.shape != layer.bias.shape:
            raise ValueError("gradient shape does not match parameter shape")
    for layer, (gw, gb) in zip(model.layers, grads):
        lr = layer.learning_rate
        layer.weight[...] = layer.weight - lr * gw
        layer.bias[...] = layer.bias - lr * gb
    return model


@dataclass
class TrainConfig:
    batch_size: int = 128
    max_steps: int = 1000
    loss_kind: str = "mse"
    seed: int = 0
    eval_every: int = 0  # 0 disables periodic evaluation
    checkpoint_every: int = 0  # 0 disables periodic checkpoints

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        self.loss_kind = self.loss_kind.replace("-", "_")
        if self.loss_kind not in ("mse", "fdpl", "fdpl_at"):
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")


@dataclass
class LogRow:
    step: int
    train_loss: float
    eval_psnr: float | None = None


@dataclass
class TrainLog:
    rows: list[LogRow] = field(default_factory=list)

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w") as f:
            f.write("step,train_loss,eval_psnr\n")
            for r in self.rows:
                ev = "" if r.eval_psnr is None else repr(float(r.eval_psnr))
                f.write(f"{r.step},{float(r.train_loss)!r},{ev}\n")


class TrainingDiverged(ArithmeticError):
    """Raised when the training loss stops being finite."""


def train(
    model: SrcnnModel,
    dataset,
    cfg: TrainConfig,
    loss: Callable[[np.ndarray, np.ndarray], tuple[float, np.ndarray]],
    evaluate: Callable[[SrcnnModel], float] | None = None,
    on_checkpoint: Callable[[SrcnnModel, int], None] | None = None,
) -> tuple[SrcnnModel, TrainLog]:
    """Mini-batch SGD for ``cfg.max_steps`` steps.

    ``dataset`` is a :class:`fdpl.dataset.PatchSet`. ``loss(target, output)``
    returns the batch-mean loss and its gradient. The training loss logged at
    a step is measured before that step's update.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    trainlog = TrainLog()
    step = 0
    epoch = 0
    while step < cfg.max_steps:
        for inputs, targets in dataset.batches(cfg.batch_size, cfg.seed, epoch):
            step += 1
            # overflow is reported as TrainingDiverged below, not as numpy warnings
            with np.errstate(over="ignore", invalid="ignore"):
                out, cache = forward(model, inputs)
                value, grad_out = loss(targets, out)
                if not np.isfinite(value):
                    raise TrainingDiverged(
                        f"training loss became {value} at step {step}; lower the learning rates"
                    )
                sgd_step(model, backward(model, cache, grad_out))
            row = LogRow(step, value)
            if evaluate is not None and cfg.eval_every and step % cfg.eval_every == 0:
                row.eval_psnr = evaluate(model)
                log.info("step %d loss %.6g eval psnr %.4f", step, value, row.eval_psnr)
            trainlog.rows.append(row)
            if on_checkpoint is not None and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                on_checkpoint(model, step)
            if step >= cfg.max_steps:
                break
        epoch += 1
    if not all(np.all(np.isfinite(p)) for p in model.parameters()):
        raise TrainingDiverged("model parameters are no longer finite; lower the learning rates")
    return model, trainlog


def save_checkpoint(model: SrcnnModel, path: str | os.PathLike) -> None:
    """Binary layout: magic, layer count, (out, in, k) per layer, then float32 data.

    Integers are little-endian u32; weights then bias of each layer follow in
    row-major order as little-endian float32.
    """
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(model.layers))]
    for l in model.layers:
        parts.append(struct.pack("<3I", l.out_ch, l.in_ch, l.k))
    for l in model.layers:
        parts.append(l.weight.astype("<f4").tobytes())
        parts.append(l.bias.astype("<f4").tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(parts))


class CheckpointError(ValueError):
    pass


def load_checkpoint(
    path: str | os.PathLike, learning_rates: Sequence[float] = DEFAULT_LEARNING_RATES
) -> SrcnnModel:
    with open(path, "rb") as f:
        data = f.read()
    if data[:6] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not an SRCNN checkpoint (bad magic)")
    pos = 6
    if len(data) < pos + 4:
        raise CheckpointError(f"{path}: truncated header")
    (n,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if n != len(learning_rates):
        raise CheckpointError(f"{path}: {n} layers, expected {len(learning_rates)}")
    if len(data) < pos + 12 * n:
        raise CheckpointError(f"{path}: truncated header")
    dims = [struct.unpack_from("<3I", data, pos + 12 * i) for i in range(n)]
    pos += 12 * n
    if dims[0][1] != 1 or dims[-1][0] != 1 or any(
        dims[i][0] != dims[i + 1][1] for i in range(n - 1)
    ):
        raise CheckpointError(f"{path}: inconsistent layer dimensions {dims}")
    expected = pos + 4 * sum(o * c * k * k + o for o, c, k in dims)
    if len(data) != expected:
        raise CheckpointError(f"{path}: size {len(data)} bytes, expected {expected}")
    layers = []
    for (o, c, k), lr in zip(dims, learning_rates):
        nw = o * c * k * k
        w = np.frombuffer(data, "<f4", nw, pos).reshape(o, c, k, k).astype(np.float32)
        pos += 4 * nw
        b = np.frombuffer(data, "<f4", o, pos).astype(np.float32)
        pos += 4 * o
        try:
            layers.append(ConvLayer(w, b, float(lr)))
        except ValueError as exc:
            raise CheckpointError(f"{path}: {exc}") from None
    return SrcnnModel(layers)


def identity_model(learning_rates: Sequence[float] = DEFAULT_LEARNING_RATES) -> SrcnnModel:
    """Model whose layers pass a non-negative input through unchanged."""
    model = SrcnnModel.create(learning_rates=learning_rates, init_std=0.0)
    for l in model.layers:
        l.weight[0, 0, l.k // 2, l.k // 2] = 1.0
    return model
