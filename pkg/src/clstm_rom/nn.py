"""Small neural-network kernel with hand-written backpropagation.

Layers: 1-D convolution, LSTM, Elman recurrent cell and a dense head.
Tensors are (batch, steps, features) float64 arrays.  Forward functions
return explicit caches; nothing is stored on the parameter objects.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .linalg import ContractError


def _tensor3(x, name="x"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ContractError(f"{name} must be (batch, steps, features), got {x.shape}")
    return x


def uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# --------------------------------------------------------------------------
# dense


@dataclass(frozen=True)
class DenseParams:
    w: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)

    @classmethod
    def init(cls, rng, n_in, n_out):
        return cls(uniform_init(rng, (n_out, n_in), n_in), uniform_init(rng, (n_out,), n_in))


def dense_forward(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.w.shape[1]:
        raise ContractError(f"dense expects {params.w.shape[1]} inputs, got {x.shape[-1]}")
    return x @ params.w.T + params.b


def dense_backward(params, x, dy):
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    grads = DenseParams(w=dy2.T @ x2, b=dy2.sum(axis=0))
    return grads, dy @ params.w


# --------------------------------------------------------------------------
# conv1d


@dataclass(frozen=True)
class Conv1dParams:
    kernels: np.ndarray  # (out_channels, in_channels, width)
    bias: np.ndarray  # (out_channels,)
    stride: int = 1
    padding: str = "same"

    def __post_init__(self):
        if self.padding not in ("same", "none"):
            raise ContractError(f"unknown padding {self.padding!r}")
        if self.padding == "same" and self.kernels.shape[2] % 2 == 0:
            raise ContractError("same padding needs an odd kernel width")
        if self.stride < 1:
            raise ContractError("stride must be >= 1")

    @classmethod
    def init(cls, rng, in_channels, out_channels, width=3, stride=1, padding="same"):
        fan_in = in_channels * width
        return cls(
            uniform_init(rng, (out_channels, in_channels, width), fan_in),
            uniform_init(rng, (out_channels,), fan_in),
            stride,
            padding,
        )

    @property
    def pad(self):
        return (self.kernels.shape[2] - 1) // 2 if self.padding == "same" else 0

    def out_steps(self, steps):
        n = (steps + 2 * self.pad - self.kernels.shape[2]) // self.stride + 1
        if n < 1:
            raise ContractError(f"sequence of {steps} steps too short for the kernel")
        return n


def _pad(params, x):
    p = params.pad
    if p == 0:
        return np.ascontiguousarray(x)
    return np.pad(x, ((0, 0), (p, p), (0, 0)))


def conv1d_forward(params, x):
    x = _tensor3(x)
    if x.shape[2] != params.kernels.shape[1]:
        raise ContractError(f"conv expects {params.kernels.shape[1]} channels, got {x.shape[2]}")
    t_out = params.out_steps(x.shape[1])
    return kernels.conv1d_forward_raw(_pad(params, x), params.kernels, params.bias, params.stride, t_out)


def conv1d_backward(params, x, dy):
    xp = _pad(params, _tensor3(x))
    dk, db, dxp = kernels.conv1d_backward_raw(xp, params.kernels, np.ascontiguousarray(dy), params.stride)
    p = params.pad
    dx = dxp[:, p:xp.shape[1] - p, :] if p else dxp
    return replace(params, kernels=dk, bias=db), dx


# --------------------------------------------------------------------------
# LSTM


@dataclass(frozen=True)
class LstmCellParams:
    """Stacked gate weights, gate order (q, i, f, o).

    ``w[g]`` multiplies the concatenation [h_{t-1}, x_t]; q is the tanh
    candidate, i/f/o the sigmoid input, forget and output gates.
    """

    w: np.ndarray  # (4, hidden, hidden + input)
    b: np.ndarray  # (4, hidden)

    @classmethod
    def init(cls, rng, n_in, hidden):
        fan_in = hidden + n_in
        return cls(uniform_init(rng, (4, hidden, fan_in), fan_in), uniform_init(rng, (4, hidden), fan_in))

    @property
    def hidden(self):
        return self.w.shape[1]

    @property
    def n_in(self):
        return self.w.shape[2] - self.w.shape[1]

    w_q = property(lambda self: self.w[0])
    w_i = property(lambda self: self.w[1])
    w_f = property(lambda self: self.w[2])
    w_o = property(lambda self: self.w[3])
    b_q = property(lambda self: self.b[0])
    b_i = property(lambda self: self.b[1])
    b_f = property(lambda self: self.b[2])
    b_o = property(lambda self: self.b[3])


@dataclass(frozen=True)
class LstmCache:
    x: np.ndarray
    wt: np.ndarray
    hs: np.ndarray
    cs: np.ndarray
    gates: np.ndarray
    linear: bool


def lstm_forward(params, x_seq, h0=None, c0=None, linear=False):
    """Returns (outputs h_1..h_T, h_T, c_T, cache).

    ``linear=True`` swaps every activation for the identity.
    """
    x = _tensor3(x_seq, "x_seq")
    B = x.shape[0]
    H = params.hidden
    if x.shape[2] != params.n_in:
        raise ContractError(f"LSTM expects {params.n_in} input features, got {x.shape[2]}")
    h0 = np.zeros((B, H)) if h0 is None else np.asarray(h0, dtype=np.float64)
    c0 = np.zeros((B, H)) if c0 is None else np.asarray(c0, dtype=np.float64)
    if h0.shape != (B, H) or c0.shape != (B, H):
        raise ContractError("initial state shape mismatch")
    wt = np.ascontiguousarray(params.w.reshape(4 * H, -1).T)
    b = params.b.reshape(-1)
    hs, cs, gates = kernels.lstm_forward_seq(np.ascontiguousarray(x), wt, b, h0, c0, linear)
    cache = LstmCache(x, wt, hs, cs, gates, linear)
    return hs[:, 1:], hs[:, -1], cs[:, -1], cache


def lstm_backward(cache, grad_outputs=None, grad_hT=None, grad_cT=None):
    """Gradients (params, x, h0, c0) of a scalar loss through the sequence."""
    B, T, _ = cache.x.shape
    H = cache.hs.shape[2]
    dh_seq = np.zeros((B, T, H)) if grad_outputs is None else np.ascontiguousarray(grad_outputs)
    if dh_seq.shape != (B, T, H):
        raise ContractError("grad_outputs shape does not match the cached forward pass")
    dh_last = np.zeros((B, H)) if grad_hT is None else np.asarray(grad_hT, dtype=np.float64)
    dc_last = np.zeros((B, H)) if grad_cT is None else np.asarray(grad_cT, dtype=np.float64)
    dwt, db, dx, dh0, dc0 = kernels.lstm_backward_seq(
        cache.x, cache.wt, cache.hs, cache.cs, cache.gates, dh_seq, dh_last, dc_last, cache.linear
    )
    grads = LstmCellParams(w=dwt.T.reshape(4, H, -1).copy(), b=db.reshape(4, H))
    return grads, dx, dh0, dc0


# --------------------------------------------------------------------------
# Elman


@dataclass(frozen=True)
class ElmanCellParams:
    w_h: np.ndarray  # (hidden, hidden + input)
    b_h: np.ndarray
    w_o: np.ndarray  # (out, hidden)
    b_o: np.ndarray

    @classmethod
    def init(cls, rng, n_in, hidden, n_out):
        fan = hidden + n_in
        return cls(
            uniform_init(rng, (hidden, fan), fan),
            uniform_init(rng, (hidden,), fan),
            uniform_init(rng, (n_out, hidden), hidden),
            uniform_init(rng, (n_out,), hidden),
        )


def elman_forward(params, x_seq, h0=None):
    """Returns (outputs o_1..o_T, hidden states h_1..h_T, cache)."""
    x = np.ascontiguousarray(_tensor3(x_seq, "x_seq"))
    H = params.w_h.shape[0]
    if x.shape[2] != params.w_h.shape[1] - H:
        raise ContractError("Elman input width mismatch")
    h0 = np.zeros((x.shape[0], H)) if h0 is None else np.asarray(h0, dtype=np.float64)
    wht = np.ascontiguousarray(params.w_h.T)
    wot = np.ascontiguousarray(params.w_o.T)
    hs, outs = kernels.elman_forward_seq(x, wht, params.b_h, wot, params.b_o, h0)
    return outs, hs[:, 1:], (x, wht, wot, hs, outs)


def elman_backward(cache, grad_outputs):
    x, wht, wot, hs, outs = cache
    dwht, dbh, dwot, dbo, dx, dh0 = kernels.elman_backward_seq(
        x, wht, wot, hs, outs, np.ascontiguousarray(grad_outputs)
    )
    return ElmanCellParams(dwht.T.copy(), dbh, dwot.T.copy(), dbo), dx, dh0


# --------------------------------------------------------------------------
# loss


def mse_loss(pred, target):
    d = np.asarray(pred, dtype=np.float64) - target
    return float(np.mean(d * d))


def mse_grad(pred, target):
    d = np.asarray(pred, dtype=np.float64) - target
    return 2.0 * d / d.size


# --------------------------------------------------------------------------
# optimizer


@dataclass(frozen=True)
class AdamState:
    m: dict
    v: dict
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **hyper):
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, **hyper)


def adam_step(state, params, grads):
    """One bias-corrected Adam update on a name -> array mapping.

    Returns new (params, state); inputs are left untouched.
    """
    if params.keys() != grads.keys():
        raise ContractError("parameter and gradient names differ")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ContractError(f"gradient shape mismatch for {k}: {g.shape} vs {p.shape}")
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * g * g
        new_p[k] = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_m[k] = m
        new_v[k] = v
    return new_p, replace(state, m=new_m, v=new_v, step=t)


# --------------------------------------------------------------------------
# finite-difference check


def grad_check(loss_and_grads, params, h=1e-5, floor=1e-8, per_tensor=False):
    """Worst relative error between analytic and central-difference gradients.

    ``loss_and_grads(params) -> (loss, grads)`` over a name -> array mapping.
    Elementwise (default): entries whose gradients are both below ``floor``
    in magnitude are skipped.  ``per_tensor``: one error per parameter array,
    ||analytic - numeric|| / max(||analytic||, ||numeric||).
    """
    _, grads = loss_and_grads(params)
    worst = 0.0
    for name, p in params.items():
        numeric = np.zeros_like(p, dtype=np.float64)
        for idx in np.ndindex(p.shape):
            plus = {k: v.copy() for k, v in params.items()}
            minus = {k: v.copy() for k, v in params.items()}
            plus[name][idx] += h
            minus[name][idx] -= h
            numeric[idx] = (loss_and_grads(plus)[0] - loss_and_grads(minus)[0]) / (2.0 * h)
        ana = np.asarray(grads[name], dtype=np.float64)
        if per_tensor:
            scale = max(np.linalg.norm(numeric), np.linalg.norm(ana))
            if scale >= floor:
                worst = max(worst, float(np.linalg.norm(numeric - ana) / scale))
            continue
        scale = np.maximum(np.abs(numeric), np.abs(ana))
        mask = scale >= floor
        if np.any(mask):
            worst = max(worst, float(np.max(np.abs(numeric - ana)[mask] / scale[mask])))
    return worst
