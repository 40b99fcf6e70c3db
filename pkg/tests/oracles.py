"""Slow, obviously-correct reference implementations used only by tests.

Nothing here imports the package: every routine is written from the
defining formula with explicit loops.
"""

import itertools
import math

import numpy as np


def naive_matmul(a, b):
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def jacobi_eigvals(sym, tol=1e-15, sweeps=100):
    """Eigenvalues of a symmetric matrix by classical cyclic two-sided Jacobi."""
    a = np.array(sym, dtype=np.float64)
    n = a.shape[0]
    for _ in range(sweeps):
        off = math.sqrt(sum(a[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off <= tol * max(1.0, np.abs(a).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for r in range(n):
                    arp, arq = a[r, p], a[r, q]
                    a[r, p] = c * arp - s * arq
                    a[r, q] = s * arp + c * arq
                for r in range(n):
                    apr, aqr = a[p, r], a[q, r]
                    a[p, r] = c * apr - s * aqr
                    a[q, r] = s * apr + c * aqr
    return np.sort(np.diag(a))[::-1]


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def lstm_scalar(w, b, xs, h0, c0):
    """Gate order (q, i, f, o); w[g] is (H, H + I) acting on [h, x]."""
    H = len(h0)
    h, c = list(h0), list(c0)
    hs = []
    for x in xs:
        hx = h + list(x)
        pre = [[b[g][r] + sum(w[g][r][j] * hx[j] for j in range(len(hx))) for r in range(H)]
               for g in range(4)]
        q = [math.tanh(v) for v in pre[0]]
        i = [_sig(v) for v in pre[1]]
        f = [_sig(v) for v in pre[2]]
        o = [_sig(v) for v in pre[3]]
        c = [f[r] * c[r] + i[r] * q[r] for r in range(H)]
        h = [o[r] * math.tanh(c[r]) for r in range(H)]
        hs.append(list(h))
    return np.array(hs), np.array(h), np.array(c)


def elman_scalar(w_h, b_h, w_o, b_o, xs, h0):
    H = len(h0)
    h = list(h0)
    outs = []
    for x in xs:
        hx = h + list(x)
        h = [_sig(b_h[r] + sum(w_h[r][j] * hx[j] for j in range(len(hx)))) for r in range(H)]
        outs.append([math.tanh(b_o[k] + sum(w_o[k][r] * h[r] for r in range(H))) for k in range(len(b_o))])
    return np.array(outs)


def conv_naive(x, kernels, bias, stride=1, pad=None):
    """Cross-correlation with zero padding; x (B, T, C_in), kernels (C_out, C_in, K)."""
    B, T, C = x.shape
    O, C2, K = kernels.shape
    assert C == C2
    pad = K // 2 if pad is None else pad
    t_out = (T + 2 * pad - K) // stride + 1
    out = np.zeros((B, t_out, O))
    for b in range(B):
        for t in range(t_out):
            for o in range(O):
                s = bias[o]
                for c in range(C):
                    for k in range(K):
                        src = t * stride + k - pad
                        if 0 <= src < T:
                            s += kernels[o, c, k] * x[b, src, c]
                out[b, t, o] = s
    return out


def mse_scalar(pred, target):
    p = np.ravel(pred)
    t = np.ravel(target)
    return sum((a - b) ** 2 for a, b in zip(p, t)) / len(p)


def adam_scalar(x, grad_fn, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t in range(1, steps + 1):
        g = grad_fn(x)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return x


def best_partition_inertia(points, k):
    """Minimum within-cluster sum of squares over every labelling."""
    n = len(points)
    best = math.inf
    for labels in itertools.product(range(k), repeat=n):
        if labels[0] != 0 or len(set(labels)) != k:
            continue
        total = 0.0
        for c in range(k):
            members = points[[i for i in range(n) if labels[i] == c]]
            total += float(((members - members.mean(axis=0)) ** 2).sum())
        best = min(best, total)
    return best


def nearest_scan(centroids, theta):
    best, idx = math.inf, -1
    for i, c in enumerate(centroids):
        d = sum((a - b) ** 2 for a, b in zip(np.atleast_1d(c), np.atleast_1d(theta)))
        if d < best:
            best, idx = d, i
    return idx


def dft_magnitude(x):
    n = len(x)
    return np.array([abs(sum(x[t] * complex(math.cos(2 * math.pi * f * t / n), -math.sin(2 * math.pi * f * t / n))
                             for t in range(n))) for f in range(n // 2 + 1)])


def rk4_scalar(f, x0, dt, steps):
    x = x0
    for _ in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def lstsq_slope(t, y):
    n = len(t)
    tm = sum(t) / n
    ym = sum(y) / n
    return sum((a - tm) * (b - ym) for a, b in zip(t, y)) / sum((a - tm) ** 2 for a in t)
