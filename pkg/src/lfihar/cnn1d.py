"""1D convolutional activity classifier in plain numpy.

Architecture, per conv block: same-padded stride-1 convolution, batch norm,
leaky ReLU (slope 0.01), max-pool with floor semantics. The last pooled map is
flattened (time-major) into FC1 -> leaky ReLU -> dropout -> FC2 -> softmax.

Tensors are channels-last: a batch of windows is ``(B, T, C)``. Conv weights
are stored as ``(C_in, k, C_out)`` so an im2col matrix of shape
``(B*T, C_in*k)`` multiplies them directly.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidConfig, NonFiniteLoss, ShapeMismatch

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "lfihar-cnn-1"
LEAKY_SLOPE = 0.01

# Parameter budget the reference network reports (total, fully connected).
REFERENCE_BUDGET = (3_703_816, 3_686_400)


@dataclass(frozen=True)
class ConvBlock:
    out_channels: int
    kernel_size: int = 5
    pool_size: int = 5


@dataclass(frozen=True)
class CnnConfig:
    input_length: int = 3600
    input_channels: int = 10
    conv_blocks: tuple[ConvBlock, ...] = (ConvBlock(32), ConvBlock(64), ConvBlock(128), ConvBlock(128))
    fc1_out: int = 1024
    dropout_p: float = 0.5
    num_classes: int = 7
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def temporal_lengths(self) -> list[int]:
        lengths = [self.input_length]
        for block in self.conv_blocks:
            lengths.append(lengths[-1] // block.pool_size)
        return lengths

    @property
    def flat_features(self) -> int:
        return self.temporal_lengths()[-1] * self.conv_blocks[-1].out_channels

    def validate(self) -> None:
        if len(self.conv_blocks) != 4:
            raise InvalidConfig(f"need 4 conv blocks, got {len(self.conv_blocks)}")
        for b in self.conv_blocks:
            if b.kernel_size % 2 != 1:
                raise InvalidConfig(f"kernel size must be odd, got {b.kernel_size}")
        if self.temporal_lengths()[-1] < 1:
            raise InvalidConfig(f"input length {self.input_length} pools down to zero")
        if not 0 <= self.dropout_p < 1:
            raise InvalidConfig(f"dropout_p must be in [0, 1), got {self.dropout_p}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 9
    lr_decay_per_epoch: float = 0.95
    weight_decay: float = 1e-4
    batch_size: int = 64
    seed: int = 0

    def validate(self) -> None:
        if self.learning_rate < 0:
            raise InvalidConfig("learning_rate must be >= 0")
        if not 0 < self.lr_decay_per_epoch <= 1:
            raise InvalidConfig("lr_decay_per_epoch must be in (0, 1]")
        if self.batch_size < 1 or self.epochs < 0:
            raise InvalidConfig("batch_size must be >= 1 and epochs >= 0")


@dataclass
class CnnModel:
    config: CnnConfig
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray]  # batch-norm running statistics
    seed: int = 0
    use_dropout: bool = True

    @property
    def dtype(self):
        return self.params["fc2.w"].dtype

    def copy(self) -> "CnnModel":
        return CnnModel(self.config, {k: v.copy() for k, v in self.params.items()},
                        {k: v.copy() for k, v in self.buffers.items()}, self.seed, self.use_dropout)

    def astype(self, dtype) -> "CnnModel":
        return CnnModel(self.config, {k: v.astype(dtype) for k, v in self.params.items()},
                        {k: v.astype(dtype) for k, v in self.buffers.items()}, self.seed, self.use_dropout)


def is_weight(name: str) -> bool:
    """Weights get decoupled weight decay; biases and batch-norm affine terms do not."""
    return name.endswith(".w")


def _uniform(rng, fan_in, shape, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape).astype(dtype)


def init_fc2(config: CnnConfig, rng, dtype) -> dict[str, np.ndarray]:
    return {
        "fc2.w": _uniform(rng, config.fc1_out, (config.fc1_out, config.num_classes), dtype),
        "fc2.b": _uniform(rng, config.fc1_out, (config.num_classes,), dtype),
    }


def init_model(config: CnnConfig = CnnConfig(), seed: int = 0, dtype=np.float32) -> CnnModel:
    config.validate()
    rng = np.random.default_rng(seed)
    params, buffers = {}, {}
    c_in = config.input_channels
    for i, b in enumerate(config.conv_blocks):
        fan_in = c_in * b.kernel_size
        params[f"conv{i}.w"] = _uniform(rng, fan_in, (c_in, b.kernel_size, b.out_channels), dtype)
        params[f"conv{i}.b"] = _uniform(rng, fan_in, (b.out_channels,), dtype)
        params[f"bn{i}.gamma"] = np.ones(b.out_channels, dtype)
        params[f"bn{i}.beta"] = np.zeros(b.out_channels, dtype)
        buffers[f"bn{i}.mean"] = np.zeros(b.out_channels, dtype)
        buffers[f"bn{i}.var"] = np.ones(b.out_channels, dtype)
        c_in = b.out_channels
    flat = config.flat_features
    params["fc1.w"] = _uniform(rng, flat, (flat, config.fc1_out), dtype)
    params["fc1.b"] = _uniform(rng, flat, (config.fc1_out,), dtype)
    params.update(init_fc2(config, rng, dtype))
    return CnnModel(config, params, buffers, seed)


def param_count(model_or_config) -> int:
    if isinstance(model_or_config, CnnModel):
        return int(sum(p.size for p in model_or_config.params.values()))
    return analytic_param_count(model_or_config)


def analytic_param_count(config: CnnConfig) -> int:
    """Closed form: conv ``c_in*k*c_out + c_out``, batch norm ``2*c_out``, linear ``in*out + out``."""
    total = 0
    c_in = config.input_channels
    for b in config.conv_blocks:
        total += c_in * b.kernel_size * b.out_channels + b.out_channels + 2 * b.out_channels
        c_in = b.out_channels
    total += config.flat_features * config.fc1_out + config.fc1_out
    total += config.fc1_out * config.num_classes + config.num_classes
    return total


def fc_param_count(config: CnnConfig) -> int:
    return (config.flat_features + 1) * config.fc1_out + (config.fc1_out + 1) * config.num_classes


# --------------------------------------------------------------------------- layers


def _conv_forward(x, w, b):
    bsz, T, c_in = x.shape
    k = w.shape[1]
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (0, 0)))
    cols = sliding_window_view(xp, k, axis=1).reshape(bsz * T, c_in * k)
    out = cols @ w.reshape(c_in * k, -1) + b
    return out.reshape(bsz, T, -1), cols


def _conv_backward(dout, cols, w, x_shape, need_dx=True):
    bsz, T, c_in = x_shape
    k = w.shape[1]
    p = k // 2
    d2 = dout.reshape(bsz * T, -1)
    dw = (cols.T @ d2).reshape(w.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (d2 @ w.reshape(c_in * k, -1).T).reshape(bsz, T, c_in, k)
    dxp = np.zeros((bsz, T + 2 * p, c_in), dtype=dout.dtype)
    for j in range(k):
        dxp[:, j:j + T, :] += dcols[:, :, :, j]
    return dxp[:, p:p + T, :], dw, db


def _leaky(x):
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def _leaky_backward(dy, x):
    return np.where(x > 0, dy, LEAKY_SLOPE * dy)


def _pool_argmax(z, size, sign):
    """Per-window index of the max of ``sign * z`` (first one on ties)."""
    bsz, T, c = z.shape
    tp = T // size
    if (sign < 0).any():
        z = z * sign
    return np.argmax(z[:, :tp * size].reshape(bsz, tp, size, c), axis=2)


def _pool_route(dout, idx, shape, size):
    """Max-pool backward: each pooled gradient goes to its window's argmax."""
    bsz, T, c = shape
    tp = dout.shape[1]
    dx = np.zeros(shape, dtype=dout.dtype)
    dxr = dx[:, :tp * size].reshape(bsz, tp, size, c)
    np.put_along_axis(dxr, idx[:, :, None, :], dout[:, :, None, :], axis=2)
    return dx


def _block_forward(z, gamma, beta, mean, var, eps, size):
    """batch norm -> leaky ReLU -> max-pool, evaluated only where the pool looks.

    Batch norm is a per-channel affine map and leaky ReLU is increasing, so the
    pooled maximum sits at the argmax of ``z`` (argmin where ``gamma < 0``).
    """
    inv_std = 1.0 / np.sqrt(var + eps)
    sign = np.where(gamma < 0, -1, 1).astype(z.dtype)
    idx = _pool_argmax(z, size, sign)
    bsz, T, c = z.shape
    tp = T // size
    zr = z[:, :tp * size].reshape(bsz, tp, size, c)
    zsel = np.take_along_axis(zr, idx[:, :, None, :], axis=2)[:, :, 0, :]
    xhat = (zsel - mean) * inv_std
    y = gamma * xhat + beta
    return _leaky(y), (idx, xhat, y, inv_std, mean)


def _block_backward(da, z, state, gamma, size):
    idx, xhat, y, inv_std, mean = state
    bsz, T, c = z.shape
    n = bsz * T
    dy = _leaky_backward(da, y)
    dgamma = (dy * xhat).sum(axis=(0, 1))
    dbeta = dy.sum(axis=(0, 1))
    dxhat = dy * gamma
    s1 = dxhat.sum(axis=(0, 1))
    s2 = (dxhat * xhat).sum(axis=(0, 1))
    # dense part: -(inv_std / n) * (s1 + xhat * s2) with xhat = (z - mean) * inv_std
    a = -(inv_std / n) * s2 * inv_std
    b = -(inv_std / n) * (s1 - mean * inv_std * s2)
    dz = z * a.astype(z.dtype)
    dz += b.astype(z.dtype)
    dz += _pool_route((inv_std * dxhat).astype(z.dtype), idx, z.shape, size)
    return dz, dgamma, dbeta


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# --------------------------------------------------------------------------- forward / backward


@dataclass
class Cache:
    x_shape: tuple
    blocks: list = field(default_factory=list)
    flat_shape: tuple = ()
    flat: np.ndarray | None = None
    h1: np.ndarray | None = None
    mask: np.ndarray | None = None
    a1: np.ndarray | None = None
    probs: np.ndarray | None = None


def features(model: CnnModel, x: np.ndarray, mode: str = "eval", *, rng=None,
             update_running: bool = True, cache: Cache | None = None) -> np.ndarray:
    """Conv stack + FC1 + leaky ReLU (+ dropout in train mode): the FC2 input."""
    cfg = model.config
    x = np.asarray(x, dtype=model.dtype)
    if x.ndim != 3 or x.shape[1:] != (cfg.input_length, cfg.input_channels):
        raise ShapeMismatch(
            f"expected (B, {cfg.input_length}, {cfg.input_channels}), got {x.shape}"
        )
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    train = mode == "train"
    p = model.params
    h = x
    for i, block in enumerate(cfg.conv_blocks):
        z, cols = _conv_forward(h, p[f"conv{i}.w"], p[f"conv{i}.b"])
        if train:
            mean = z.mean(axis=(0, 1))
            var = z.var(axis=(0, 1))
            if update_running:
                m = cfg.bn_momentum
                model.buffers[f"bn{i}.mean"] = ((1 - m) * model.buffers[f"bn{i}.mean"] + m * mean).astype(model.dtype)
                model.buffers[f"bn{i}.var"] = ((1 - m) * model.buffers[f"bn{i}.var"] + m * var).astype(model.dtype)
        else:
            mean, var = model.buffers[f"bn{i}.mean"], model.buffers[f"bn{i}.var"]
        pooled, state = _block_forward(z, p[f"bn{i}.gamma"], p[f"bn{i}.beta"], mean, var,
                                       cfg.bn_eps, block.pool_size)
        if cache is not None:
            cache.blocks.append((h.shape, cols, z, state))
        h = pooled
    flat = h.reshape(h.shape[0], -1)
    h1 = flat @ p["fc1.w"] + p["fc1.b"]
    a1 = _leaky(h1)
    mask = None
    if train and model.use_dropout and cfg.dropout_p > 0:
        rng = rng if rng is not None else np.random.default_rng(model.seed)
        keep = 1.0 - cfg.dropout_p
        mask = (rng.random(a1.shape) < keep).astype(model.dtype) / model.dtype.type(keep)
        a1 = a1 * mask
    if cache is not None:
        cache.flat_shape = h.shape
        cache.flat, cache.h1, cache.mask, cache.a1 = flat, h1, mask, a1
    return a1


def forward(model: CnnModel, x: np.ndarray, mode: str = "eval", *, rng=None,
            update_running: bool = True, cache: Cache | None = None) -> np.ndarray:
    """Class probabilities ``(B, num_classes)``.

    Train mode normalises with batch statistics (and updates the running ones
    unless ``update_running=False``) and applies inverted dropout drawn from
    ``rng``. Eval mode mutates nothing.
    """
    a1 = features(model, x, mode, rng=rng, update_running=update_running, cache=cache)
    probs = softmax(a1 @ model.params["fc2.w"] + model.params["fc2.b"])
    if cache is not None:
        cache.probs = probs
    return probs


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(picked, np.finfo(probs.dtype).tiny))))


def backward(model: CnnModel, cache: Cache, labels: np.ndarray, only: set[str] | None = None) -> dict[str, np.ndarray]:
    """Gradients of the mean cross-entropy for the batch held in ``cache``.

    ``only`` restricts the computation to a set of parameter names (the pass
    stops as soon as nothing upstream is needed).
    """
    p = model.params
    labels = np.asarray(labels)
    bsz = len(labels)
    grads: dict[str, np.ndarray] = {}
    want = (lambda name: True) if only is None else (lambda name: name in only)

    dlogits = cache.probs.copy()
    dlogits[np.arange(bsz), labels] -= 1
    dlogits /= bsz
    grads["fc2.w"] = cache.a1.T @ dlogits
    grads["fc2.b"] = dlogits.sum(axis=0)
    if only is not None and not (only - {"fc2.w", "fc2.b"}):
        return {k: v for k, v in grads.items() if want(k)}

    da1 = dlogits @ p["fc2.w"].T
    if cache.mask is not None:
        da1 = da1 * cache.mask
    dh1 = _leaky_backward(da1, cache.h1)
    grads["fc1.w"] = cache.flat.T @ dh1
    grads["fc1.b"] = dh1.sum(axis=0)
    dh = (dh1 @ p["fc1.w"].T).reshape(cache.flat_shape)

    n_blocks = len(model.config.conv_blocks)
    for i in reversed(range(n_blocks)):
        in_shape, cols, z, state = cache.blocks[i]
        block = model.config.conv_blocks[i]
        dz, grads[f"bn{i}.gamma"], grads[f"bn{i}.beta"] = _block_backward(
            dh, z, state, p[f"bn{i}.gamma"], block.pool_size
        )
        dh, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = _conv_backward(
            dz, cols, p[f"conv{i}.w"], in_shape, need_dx=i > 0
        )
    return {k: v for k, v in grads.items() if want(k)}


def loss_and_grads(model: CnnModel, x, labels, *, rng=None, update_running: bool = True):
    cache = Cache(np.shape(x))
    probs = forward(model, x, "train", rng=rng, update_running=update_running, cache=cache)
    return cross_entropy(probs, labels), backward(model, cache, labels)


def predict_proba(model: CnnModel, x: np.ndarray, batch_size: int = 128) -> np.ndarray:
    out = [forward(model, x[i:i + batch_size], "eval") for i in range(0, len(x), batch_size)]
    if not out:
        return np.zeros((0, model.config.num_classes), dtype=model.dtype)
    return np.concatenate(out)


def predict(model: CnnModel, x: np.ndarray, batch_size: int = 128) -> np.ndarray:
    return np.argmax(predict_proba(model, x, batch_size), axis=1)


# --------------------------------------------------------------------------- training


class Adam:
    """Adam with decoupled weight decay (applied to weights only)."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, weight_decay: float = 0.0,
                 betas=(0.9, 0.999), eps: float = 1e-8, names=None):
        self.lr = lr
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.names = list(names if names is not None else params)
        self.m = {k: np.zeros_like(params[k]) for k in self.names}
        self.v = {k: np.zeros_like(params[k]) for k in self.names}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for k in self.names:
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay and is_weight(k):
                update = update + self.weight_decay * params[k]
            params[k] -= (self.lr * update).astype(params[k].dtype)


@dataclass
class TrainResult:
    model: CnnModel
    step_losses: list[float]
    epoch_losses: list[float]


def train(model: CnnModel, x: np.ndarray, y: np.ndarray, tc: TrainConfig = TrainConfig(),
          *, in_place: bool = False, names=None, log_every: int = 0) -> TrainResult:
    """Mini-batch Adam training on ``(N, T, S)`` windows.

    The learning rate is multiplied by ``lr_decay_per_epoch`` after each epoch
    and the data order is reshuffled each epoch from ``tc.seed``.
    ``names`` restricts which parameters are updated.
    """
    tc.validate()
    if len(x) == 0:
        raise ValueError("training needs at least one batch")
    model = model if in_place else model.copy()
    y = np.asarray(y, dtype=np.int64)
    shuffle_seq, dropout_seq = np.random.SeedSequence(tc.seed).spawn(2)
    order_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)
    opt = Adam(model.params, tc.learning_rate, tc.weight_decay, names=names)
    only = None if names is None else set(names)
    step_losses, epoch_losses = [], []
    for epoch in range(tc.epochs):
        opt.lr = tc.learning_rate * tc.lr_decay_per_epoch**epoch
        order = order_rng.permutation(len(x))
        total = 0.0
        for s in range(0, len(x), tc.batch_size):
            batch = order[s:s + tc.batch_size]
            xb = np.asarray(x[batch], dtype=model.dtype)
            cache = Cache(xb.shape)
            probs = forward(model, xb, "train", rng=dropout_rng, cache=cache)
            loss = cross_entropy(probs, y[batch])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss {loss} at epoch {epoch}, step {s // tc.batch_size}, lr {opt.lr:g}")
            grads = backward(model, cache, y[batch], only)
            opt.step(model.params, grads)
            step_losses.append(loss)
            total += loss * len(batch)
        epoch_losses.append(total / len(x))
        if log_every and (epoch + 1) % log_every == 0:
            log.info("epoch %d loss %.4f lr %.3g", epoch + 1, epoch_losses[-1], opt.lr)
    return TrainResult(model, step_losses, epoch_losses)


# --------------------------------------------------------------------------- checkpoints


def save_checkpoint(model: CnnModel, path, train_seed: int | None = None) -> None:
    cfg = asdict(model.config)
    header = {
        "format": CHECKPOINT_FORMAT,
        "config": cfg,
        "seed": model.seed,
        "train_seed": train_seed,
        "use_dropout": model.use_dropout,
        "dtype": np.dtype(model.dtype).str,
    }
    arrays = {"header": np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)}
    arrays.update({"p:" + k: v for k, v in model.params.items()})
    arrays.update({"b:" + k: v for k, v in model.buffers.items()})
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[CnnModel, dict]:
    with np.load(path) as z:
        header = json.loads(bytes(z["header"]).decode())
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {header.get('format')!r}")
        cfg = header["config"]
        cfg["conv_blocks"] = tuple(ConvBlock(**b) for b in cfg["conv_blocks"])
        params = {k[2:]: z[k].copy() for k in z.files if k.startswith("p:")}
        buffers = {k[2:]: z[k].copy() for k in z.files if k.startswith("b:")}
    model = CnnModel(CnnConfig(**cfg), params, buffers, header["seed"], header["use_dropout"])
    return model, header


def config_for(num_channels: int, base: CnnConfig = CnnConfig(), input_length: int | None = None) -> CnnConfig:
    return replace(base, input_channels=num_channels, input_length=input_length or base.input_length)


def gradient_check(model: CnnModel, x, labels, h: float = 1e-6, floor: float = 1e-5, seed: int = 0) -> dict[str, float]:
    """Central-difference check of :func:`backward` for every parameter tensor.

    Returns ``max|analytic - numeric| / max(max|analytic|, max|numeric|, floor)``
    per tensor. The floor keeps tensors whose true gradient is zero (a conv bias
    feeding batch norm) from dividing round-off by round-off. Use a float64 model.
    """
    def loss():
        probs = forward(model, x, "train", rng=np.random.default_rng(seed), update_running=False)
        return cross_entropy(probs, labels)

    _, grads = loss_and_grads(model, x, labels, rng=np.random.default_rng(seed), update_running=False)
    errors = {}
    for name, p in model.params.items():
        numeric = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + h
            up = loss()
            p[i] = old - h
            down = loss()
            p[i] = old
            numeric[i] = (up - down) / (2 * h)
        scale = max(np.abs(numeric).max(), np.abs(grads[name]).max(), floor)
        errors[name] = float(np.abs(grads[name] - numeric).max() / scale)
    return errors


def random_tiny_config(rng: np.random.Generator) -> CnnConfig:
    """A small random architecture for gradient checks (pool 2 so short inputs survive four pools)."""
    T = int(rng.integers(30, 70))
    blocks = tuple(ConvBlock(int(rng.integers(1, 4)), int(rng.choice([1, 3, 5])), 2) for _ in range(4))
    return CnnConfig(T, int(rng.integers(1, 4)), blocks, int(rng.integers(2, 6)),
                     float(rng.choice([0.0, 0.5])), int(rng.integers(2, 5)))
