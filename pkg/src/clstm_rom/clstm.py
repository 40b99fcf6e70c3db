"""Convolution -> LSTM -> dense forecaster and its training loop."""

from dataclasses import asdict, dataclass, replace

import numpy as np

from . import nn
from .linalg import ContractError


@dataclass(frozen=True)
class CLstmConfig:
    n_in: int
    m: int
    z: int
    hidden: int = 64
    channels: int = 32
    width: int = 3
    stride: int = 1
    residual: bool = False
    linear: bool = False  # identity activations; test mode only

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class CLstmModel:
    """Parameters of one forecaster.

    ``params`` maps the names ``conv.k``, ``conv.b``, ``lstm.w``, ``lstm.b``,
    ``head.w``, ``head.b`` to arrays.  With ``residual`` the head output is
    added to a caller-supplied baseline (the last window state for a local
    model, the mean local prediction for the combiner).
    """

    config: CLstmConfig
    params: dict

    @classmethod
    def init(cls, config, rng):
        conv = nn.Conv1dParams.init(rng, config.n_in, config.channels, config.width, config.stride)
        lstm = nn.LstmCellParams.init(rng, config.channels, config.hidden)
        head = nn.DenseParams.init(rng, config.hidden, config.m * config.z)
        params = {
            "conv.k": conv.kernels, "conv.b": conv.bias,
            "lstm.w": lstm.w, "lstm.b": lstm.b,
            "head.w": head.w, "head.b": head.b,
        }
        if config.residual:
            # start from the baseline prediction
            params["head.w"] = params["head.w"] * 0.0
            params["head.b"] = params["head.b"] * 0.0
        return cls(config, params)

    def zeroed(self):
        return replace(self, params={k: np.zeros_like(v) for k, v in self.params.items()})

    @property
    def conv(self):
        return nn.Conv1dParams(self.params["conv.k"], self.params["conv.b"], self.config.stride)

    @property
    def lstm(self):
        return nn.LstmCellParams(self.params["lstm.w"], self.params["lstm.b"])

    @property
    def head(self):
        return nn.DenseParams(self.params["head.w"], self.params["head.b"])

    @property
    def output_shape(self):
        return (self.config.m, self.config.z)


def forward(model, x, base=None):
    """Predict (batch, m, z) from inputs (batch, steps, n_in)."""
    x = np.asarray(x, dtype=np.float64)
    cfg = model.config
    if x.ndim != 3 or x.shape[2] != cfg.n_in:
        raise ContractError(f"model expects (batch, steps, {cfg.n_in}) input, got {x.shape}")
    pre = nn.conv1d_forward(model.conv, x)
    feats = pre if cfg.linear else np.maximum(pre, 0.0)
    _, h_last, _, lcache = nn.lstm_forward(model.lstm, feats, linear=cfg.linear)
    y = nn.dense_forward(model.head, h_last)
    if cfg.residual:
        if base is None:
            raise ContractError("residual model needs a baseline prediction")
        y = y + base.reshape(y.shape)
    return y.reshape(-1, cfg.m, cfg.z), (x, pre, feats, lcache, h_last)


def predict(model, x, base=None):
    return forward(model, x, base)[0]


def backward(model, cache, dy):
    """Gradients of a scalar loss with respect to every parameter, plus dL/dx."""
    x, pre, feats, lcache, h_last = cache
    dy = dy.reshape(dy.shape[0], -1)
    ghead, dh = nn.dense_backward(model.head, h_last, dy)
    glstm, dfeats, _, _ = nn.lstm_backward(lcache, grad_hT=dh)
    dpre = dfeats if model.config.linear else dfeats * (pre > 0.0)
    gconv, dx = nn.conv1d_backward(model.conv, x, dpre)
    grads = {
        "conv.k": gconv.kernels, "conv.b": gconv.bias,
        "lstm.w": glstm.w, "lstm.b": glstm.b,
        "head.w": ghead.w, "head.b": ghead.b,
    }
    return grads, dx


def loss_and_grads(model, x, y, base=None):
    pred, cache = forward(model, x, base)
    grads, _ = backward(model, cache, nn.mse_grad(pred, y))
    return nn.mse_loss(pred, y), grads


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 32
    lr: float = 1e-3
    patience: int = 50
    min_delta: float = 1e-8
    lr_decay: float = 1.0  # multiplicative per-epoch factor


def fit(model, x, y, base=None, config=TrainConfig(), seed=0, perturb=None):
    """Adam/MSE training over shuffled mini-batches.

    Returns the trained model and the per-epoch mean training loss.  Stops
    early once the best loss has not improved by ``min_delta`` for
    ``patience`` epochs.  ``perturb(x, base, rng) -> (x, base)``, if given,
    is applied to every mini-batch (input-noise augmentation).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        raise ContractError("empty training set")
    rng = np.random.default_rng(seed)
    params = model.params
    state = nn.AdamState.zeros_like(params, lr=config.lr)
    curve = []
    best = np.inf
    since_best = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, b = x[idx], None if base is None else base[idx]
            if perturb is not None:
                xb, b = perturb(xb, b, rng)
            loss, grads = loss_and_grads(replace(model, params=params), xb, y[idx], b)
            params, state = nn.adam_step(state, params, grads)
            total += loss * idx.size
        epoch_loss = total / n
        curve.append(epoch_loss)
        if not np.isfinite(epoch_loss):
            raise FloatingPointError(f"training diverged at epoch {epoch}")
        if epoch_loss < best - config.min_delta:
            best = epoch_loss
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
        if config.lr_decay != 1.0:
            state = replace(state, lr=state.lr * config.lr_decay)
    return replace(model, params=params), np.array(curve)
