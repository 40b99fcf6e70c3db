"""Hot numeric loops.

Every kernel here has two implementations selected at import time by
``clstm_rom._accel.USE_NUMBA``: a numba-compiled loop version and a
pure-numpy version.  Kernels whose body is already batch-vectorized (LSTM backward, Elman,
RK4) share one source and are simply jitted or not.  Convolution, the
Jacobi sweeps and the LSTM forward pass carry separate loop (numba) and
vectorized (numpy) versions.

Shapes follow the (batch, steps, features) convention throughout.
"""

import numpy as np

from ._accel import USE_NUMBA, njit


# --------------------------------------------------------------------------
# activations


@njit
def _sigmoid(a):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * a))


# --------------------------------------------------------------------------
# LSTM, gate order (q, i, f, o); q is the tanh candidate


@njit
def _lstm_forward_vec(x, wt, b, h0, c0, linear):
    """Run the cell over every step.

    ``wt`` is the stacked weight matrix transposed, shape (H + I, 4H), acting
    on the concatenation [h_{t-1}, x_t].  Returns hidden and cell histories of
    length T + 1 (index 0 is the initial state) and post-activation gates.
    """
    B, T, I = x.shape
    H = h0.shape[1]
    hs = np.empty((B, T + 1, H))
    cs = np.empty((B, T + 1, H))
    gates = np.empty((B, T, 4 * H))
    hs[:, 0, :] = h0
    cs[:, 0, :] = c0
    z = np.empty((B, H + I))
    for t in range(T):
        z[:, :H] = hs[:, t, :]
        z[:, H:] = x[:, t, :]
        a = np.dot(z, wt) + b
        if linear:
            g = a
        else:
            g = np.empty_like(a)
            g[:, :H] = np.tanh(a[:, :H])
            g[:, H:] = _sigmoid(a[:, H:])
        gates[:, t, :] = g
        c = g[:, 2 * H:3 * H] * cs[:, t, :] + g[:, H:2 * H] * g[:, :H]
        cs[:, t + 1, :] = c
        if linear:
            hs[:, t + 1, :] = g[:, 3 * H:] * c
        else:
            hs[:, t + 1, :] = g[:, 3 * H:] * np.tanh(c)
    return hs, cs, gates


@njit(cache=True)
def _lstm_forward_nb(x, wt, b, h0, c0, linear):
    # elementwise gate math as loops: no temporaries per step
    B, T, I = x.shape
    H = h0.shape[1]
    hs = np.empty((B, T + 1, H))
    cs = np.empty((B, T + 1, H))
    gates = np.empty((B, T, 4 * H))
    hs[:, 0, :] = h0
    cs[:, 0, :] = c0
    z = np.empty((B, H + I))
    for t in range(T):
        for n in range(B):
            for j in range(H):
                z[n, j] = hs[n, t, j]
            for j in range(I):
                z[n, H + j] = x[n, t, j]
        a = np.dot(z, wt)
        for n in range(B):
            for j in range(4 * H):
                v = a[n, j] + b[j]
                if not linear:
                    v = np.tanh(v) if j < H else 0.5 * (1.0 + np.tanh(0.5 * v))
                gates[n, t, j] = v
            for j in range(H):
                c = gates[n, t, 2 * H + j] * cs[n, t, j] + gates[n, t, H + j] * gates[n, t, j]
                cs[n, t + 1, j] = c
                hs[n, t + 1, j] = gates[n, t, 3 * H + j] * (c if linear else np.tanh(c))
    return hs, cs, gates


lstm_forward_seq = _lstm_forward_nb if USE_NUMBA else _lstm_forward_vec


@njit
def lstm_backward_seq(x, wt, hs, cs, gates, dh_seq, dh_last, dc_last, linear):
    """Reverse-mode pass through :func:`lstm_forward_seq`.

    ``dh_seq`` is the upstream gradient on every emitted hidden state, and
    ``dh_last``/``dc_last`` the extra gradient on the final state.
    """
    B, T, I = x.shape
    H = hs.shape[2]
    w = np.ascontiguousarray(wt.T)
    dwt = np.zeros_like(wt)
    db = np.zeros(4 * H)
    dx = np.zeros_like(x)
    dh_next = dh_last.copy()
    dc_next = dc_last.copy()
    z = np.empty((B, H + I))
    da = np.empty((B, 4 * H))
    for t in range(T - 1, -1, -1):
        q = gates[:, t, :H]
        i = gates[:, t, H:2 * H]
        f = gates[:, t, 2 * H:3 * H]
        o = gates[:, t, 3 * H:]
        c = cs[:, t + 1, :]
        dh = dh_seq[:, t, :] + dh_next
        if linear:
            tc = c.copy()
            dc = dc_next + dh * o
        else:
            tc = np.tanh(c)
            dc = dc_next + dh * o * (1.0 - tc * tc)
        do = dh * tc
        dq = dc * i
        di = dc * q
        df = dc * cs[:, t, :]
        dc_next = dc * f
        if linear:
            da[:, :H] = dq
            da[:, H:2 * H] = di
            da[:, 2 * H:3 * H] = df
            da[:, 3 * H:] = do
        else:
            da[:, :H] = dq * (1.0 - q * q)
            da[:, H:2 * H] = di * i * (1.0 - i)
            da[:, 2 * H:3 * H] = df * f * (1.0 - f)
            da[:, 3 * H:] = do * o * (1.0 - o)
        z[:, :H] = hs[:, t, :]
        z[:, H:] = x[:, t, :]
        dwt += np.dot(z.T.copy(), da)
        db += da.sum(axis=0)
        dz = np.dot(da, w)
        dh_next = dz[:, :H].copy()
        dx[:, t, :] = dz[:, H:]
    return dwt, db, dx, dh_next, dc_next


# --------------------------------------------------------------------------
# Elman cell: h_t = sigmoid(W_h [h_{t-1}, x_t] + b_h), o_t = tanh(W_o h_t + b_o)


@njit
def elman_forward_seq(x, wht, bh, wot, bo, h0):
    B, T, I = x.shape
    H = h0.shape[1]
    O = bo.shape[0]
    hs = np.empty((B, T + 1, H))
    outs = np.empty((B, T, O))
    hs[:, 0, :] = h0
    z = np.empty((B, H + I))
    for t in range(T):
        z[:, :H] = hs[:, t, :]
        z[:, H:] = x[:, t, :]
        h = _sigmoid(np.dot(z, wht) + bh)
        hs[:, t + 1, :] = h
        outs[:, t, :] = np.tanh(np.dot(h, wot) + bo)
    return hs, outs


@njit
def elman_backward_seq(x, wht, wot, hs, outs, dout):
    B, T, I = x.shape
    H = hs.shape[2]
    wh = np.ascontiguousarray(wht.T)
    wo = np.ascontiguousarray(wot.T)
    dwht = np.zeros_like(wht)
    dbh = np.zeros(H)
    dwot = np.zeros_like(wot)
    dbo = np.zeros(wot.shape[1])
    dx = np.zeros_like(x)
    dh_next = np.zeros((B, H))
    z = np.empty((B, H + I))
    for t in range(T - 1, -1, -1):
        o = outs[:, t, :]
        h = np.ascontiguousarray(hs[:, t + 1, :])
        dao = dout[:, t, :] * (1.0 - o * o)
        dwot += np.dot(h.T.copy(), dao)
        dbo += dao.sum(axis=0)
        dh = np.dot(dao, wo) + dh_next
        dah = dh * h * (1.0 - h)
        z[:, :H] = hs[:, t, :]
        z[:, H:] = x[:, t, :]
        dwht += np.dot(z.T.copy(), dah)
        dbh += dah.sum(axis=0)
        dz = np.dot(dah, wh)
        dh_next = dz[:, :H].copy()
        dx[:, t, :] = dz[:, H:]
    return dwht, dbh, dwot, dbo, dx, dh_next


# --------------------------------------------------------------------------
# 1-D cross-correlation along the step axis; x is already zero padded


def _conv1d_forward_np(xp, kernels, bias, stride, t_out):
    K = kernels.shape[2]
    span = stride * (t_out - 1) + 1
    y = np.zeros((xp.shape[0], t_out, kernels.shape[0]))
    for j in range(K):
        y += xp[:, j:j + span:stride, :] @ kernels[:, :, j].T
    return y + bias


def _conv1d_backward_np(xp, kernels, dy, stride):
    K = kernels.shape[2]
    t_out = dy.shape[1]
    span = stride * (t_out - 1) + 1
    dk = np.empty_like(kernels)
    dxp = np.zeros_like(xp)
    B = xp.shape[0]
    dy2 = dy.reshape(B * t_out, -1)
    for j in range(K):
        xs = xp[:, j:j + span:stride, :].reshape(B * t_out, -1)
        dk[:, :, j] = dy2.T @ xs
        dxp[:, j:j + span:stride, :] += dy @ kernels[:, :, j]
    return dk, dy.sum(axis=(0, 1)), dxp


@njit(cache=True)
def _conv1d_forward_nb(xp, kernels, bias, stride, t_out):
    B = xp.shape[0]
    O, C, K = kernels.shape
    y = np.empty((B, t_out, O))
    for b in range(B):
        for t in range(t_out):
            base = t * stride
            for o in range(O):
                acc = bias[o]
                for j in range(K):
                    for c in range(C):
                        acc += kernels[o, c, j] * xp[b, base + j, c]
                y[b, t, o] = acc
    return y


@njit(cache=True)
def _conv1d_backward_nb(xp, kernels, dy, stride):
    B, t_out, O = dy.shape
    _, C, K = kernels.shape
    dk = np.zeros_like(kernels)
    db = np.zeros(O)
    dxp = np.zeros_like(xp)
    for b in range(B):
        for t in range(t_out):
            base = t * stride
            for o in range(O):
                g = dy[b, t, o]
                if g == 0.0:
                    continue
                db[o] += g
                for j in range(K):
                    for c in range(C):
                        dk[o, c, j] += g * xp[b, base + j, c]
                        dxp[b, base + j, c] += g * kernels[o, c, j]
    return dk, db, dxp


if USE_NUMBA:
    conv1d_forward_raw = _conv1d_forward_nb
    conv1d_backward_raw = _conv1d_backward_nb
else:
    conv1d_forward_raw = _conv1d_forward_np
    conv1d_backward_raw = _conv1d_backward_np


# --------------------------------------------------------------------------
# one-sided (Hestenes) Jacobi on the rows of At, i.e. the columns of A


@njit(cache=True)
def _jacobi_rows_nb(at, vt, tol, max_sweeps):
    n = at.shape[0]
    m = at.shape[1]
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for r in range(m):
                    alpha += at[i, r] * at[i, r]
                    beta += at[j, r] * at[j, r]
                    gamma += at[i, r] * at[j, r]
                if gamma == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                if zeta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for r in range(m):
                    ai = at[i, r]
                    aj = at[j, r]
                    at[i, r] = c * ai - s * aj
                    at[j, r] = s * ai + c * aj
                for r in range(n):
                    vi = vt[i, r]
                    vj = vt[j, r]
                    vt[i, r] = c * vi - s * vj
                    vt[j, r] = s * vi + c * vj
        if not rotated:
            break
    return sweeps


def _round_robin(n):
    """Pairings of a tournament schedule; each round touches every index once."""
    players = list(range(n if n % 2 == 0 else n + 1))
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        left = players[: size // 2]
        right = players[size // 2:][::-1]
        pairs = [(a, b) for a, b in zip(left, right) if a < n and b < n]
        rounds.append((np.array([min(p) for p in pairs], dtype=np.int64),
                       np.array([max(p) for p in pairs], dtype=np.int64)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _jacobi_rows_np(at, vt, tol, max_sweeps):
    n = at.shape[0]
    rounds = _round_robin(n)
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        rotated = False
        for ii, jj in rounds:
            if ii.size == 0:
                continue
            ai, aj = at[ii], at[jj]
            alpha = np.einsum("ij,ij->i", ai, ai)
            beta = np.einsum("ij,ij->i", aj, aj)
            gamma = np.einsum("ij,ij->i", ai, aj)
            active = (gamma != 0.0) & (np.abs(gamma) > tol * np.sqrt(alpha * beta))
            if not active.any():
                continue
            rotated = True
            ii, jj = ii[active], jj[active]
            alpha, beta, gamma = alpha[active], beta[active], gamma[active]
            zeta = (beta - alpha) / (2.0 * gamma)
            t = np.where(zeta == 0.0, 1.0,
                         np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta)))
            c = (1.0 / np.sqrt(1.0 + t * t))[:, None]
            s = c * t[:, None]
            ai, aj = at[ii], at[jj]
            at[ii], at[jj] = c * ai - s * aj, s * ai + c * aj
            vi, vj = vt[ii], vt[jj]
            vt[ii], vt[jj] = c * vi - s * vj, s * vi + c * vj
        if not rotated:
            break
    return sweeps


jacobi_rows = _jacobi_rows_nb if USE_NUMBA else _jacobi_rows_np


# --------------------------------------------------------------------------
# classical RK4 with a jitted right-hand side f(x, theta)


@njit
def rk4_loop(rhs, theta, x0, dt, steps):
    z = x0.shape[0]
    out = np.empty((steps + 1, z))
    out[0] = x0
    x = x0.copy()
    for n in range(steps):
        k1 = rhs(x, theta)
        k2 = rhs(x + 0.5 * dt * k1, theta)
        k3 = rhs(x + 0.5 * dt * k2, theta)
        k4 = rhs(x + dt * k3, theta)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[n + 1] = x
        if not np.all(np.isfinite(x)):
            return out, n + 1
    return out, -1
