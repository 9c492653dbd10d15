"""Compiled inner loops for the per-example SGD and batch forward passes.

Inputs arrive as CSR triplets (indptr, indices, data).  Every function here
works on one example at a time so batch and single-example results are
bit-identical.
"""

import math

import numpy as np
from numba import njit

SIGM_CLAMP = 700.0
SIGM_MAX = np.nextafter(1.0, 0.0)

OK = 0
BAD_W, BAD_B, BAD_V, BAD_C, BAD_W_DOM, BAD_D = 1, 2, 3, 4, 5, 6


@njit(cache=True)
def sigm1(a):
    if a > SIGM_CLAMP:
        a = SIGM_CLAMP
    elif a < -SIGM_CLAMP:
        a = -SIGM_CLAMP
    s = 1.0 / (1.0 + math.exp(-a))
    return s if s < SIGM_MAX else SIGM_MAX


@njit(cache=True)
def hidden_into(W, b, idx, val, out):
    l = b.shape[0]
    for k in range(l):
        acc = 0.0
        for jj in range(idx.shape[0]):
            acc += W[k, idx[jj]] * val[jj]
        out[k] = sigm1(b[k] + acc)


@njit(cache=True)
def output2(V, c, h):
    a0 = c[0]
    a1 = c[1]
    for k in range(h.shape[0]):
        a0 += V[0, k] * h[k]
        a1 += V[1, k] * h[k]
    m = a0 if a0 > a1 else a1
    e0 = math.exp(a0 - m)
    e1 = math.exp(a1 - m)
    s = e0 + e1
    return e0 / s, e1 / s


@njit(cache=True)
def domain1(w, d, h):
    acc = 0.0
    for k in range(h.shape[0]):
        acc += w[k] * h[k]
    return sigm1(d + acc)


@njit(cache=True)
def sgd_step_inplace(W, b, V, c, w, d, xs_idx, xs_val, ys, xt_idx, xt_val,
                     use_target, adversarial, lam, alpha, hs, ht, db_s, db_t):
    """One iteration of the DANN inner loop, updating parameters in place.

    ``d`` is a length-1 array.  ``use_target`` False skips the regularizer
    altogether; ``adversarial`` False keeps the regressor updates but leaves
    the hidden layer untouched by them.  Returns a BAD_* code or OK.
    """
    l = b.shape[0]
    hidden_into(W, b, xs_idx, xs_val, hs)
    f0, f1 = output2(V, c, hs)
    dc0 = f0 - (1.0 if ys == 0 else 0.0)
    dc1 = f1 - (1.0 if ys == 1 else 0.0)
    for k in range(l):
        db_s[k] = (V[0, k] * dc0 + V[1, k] * dc1) * hs[k] * (1.0 - hs[k])
        db_t[k] = 0.0

    dd = 0.0
    if use_target:
        os_ = domain1(w, d[0], hs)
        gs = lam * (1.0 - os_)
        hidden_into(W, b, xt_idx, xt_val, ht)
        ot = domain1(w, d[0], ht)
        gt = lam * ot
        dd = gs - gt
        if adversarial:
            for k in range(l):
                db_s[k] += gs * w[k] * hs[k] * (1.0 - hs[k])
                db_t[k] = -gt * w[k] * ht[k] * (1.0 - ht[k])

    # hidden layer and classifier descend
    for k in range(l):
        for jj in range(xs_idx.shape[0]):
            j = xs_idx[jj]
            W[k, j] -= alpha * (db_s[k] * xs_val[jj])
            if not math.isfinite(W[k, j]):
                return BAD_W
    if use_target and adversarial:
        for k in range(l):
            for jj in range(xt_idx.shape[0]):
                j = xt_idx[jj]
                W[k, j] -= alpha * (db_t[k] * xt_val[jj])
                if not math.isfinite(W[k, j]):
                    return BAD_W
    for k in range(l):
        V[0, k] -= alpha * (dc0 * hs[k])
        V[1, k] -= alpha * (dc1 * hs[k])
        if not (math.isfinite(V[0, k]) and math.isfinite(V[1, k])):
            return BAD_V
        b[k] -= alpha * (db_s[k] + db_t[k])
        if not math.isfinite(b[k]):
            return BAD_B
    c[0] -= alpha * dc0
    c[1] -= alpha * dc1
    if not (math.isfinite(c[0]) and math.isfinite(c[1])):
        return BAD_C

    # domain regressor ascends
    if use_target:
        for k in range(l):
            w[k] += alpha * (lam * (1.0 - os_) * hs[k] - lam * ot * ht[k])
            if not math.isfinite(w[k]):
                return BAD_W_DOM
        d[0] += alpha * dd
        if not math.isfinite(d[0]):
            return BAD_D
    return OK


@njit(cache=True, nogil=True)
def run_epoch(W, b, V, c, w, d, s_ptr, s_idx, s_val, y, order,
              t_ptr, t_idx, t_val, tdraws, use_target, adversarial, lam, alpha):
    """Sweep ``order`` once.  Returns (code, position of the failing step)."""
    l = b.shape[0]
    hs = np.empty(l)
    ht = np.empty(l)
    db_s = np.empty(l)
    db_t = np.empty(l)
    empty_i = np.empty(0, np.int64)
    empty_v = np.empty(0)
    for s in range(order.shape[0]):
        i = order[s]
        xs_i = s_idx[s_ptr[i]:s_ptr[i + 1]]
        xs_v = s_val[s_ptr[i]:s_ptr[i + 1]]
        if use_target:
            j = tdraws[s]
            xt_i = t_idx[t_ptr[j]:t_ptr[j + 1]]
            xt_v = t_val[t_ptr[j]:t_ptr[j + 1]]
        else:
            xt_i = empty_i
            xt_v = empty_v
        code = sgd_step_inplace(W, b, V, c, w, d, xs_i, xs_v, y[i], xt_i, xt_v,
                                use_target, adversarial, lam, alpha, hs, ht, db_s, db_t)
        if code != OK:
            return code, s
    return OK, -1


@njit(cache=True, nogil=True)
def forward_batch(W, b, V, c, w, d, ptr, idx, val):
    """Hidden layer, class probabilities and domain output for every CSR row."""
    n = ptr.shape[0] - 1
    l = b.shape[0]
    H = np.empty((n, l))
    F = np.empty((n, 2))
    O = np.empty(n)
    for i in range(n):
        h = H[i]
        hidden_into(W, b, idx[ptr[i]:ptr[i + 1]], val[ptr[i]:ptr[i + 1]], h)
        f0, f1 = output2(V, c, h)
        F[i, 0] = f0
        F[i, 1] = f1
        O[i] = domain1(w, d, h)
    return H, F, O


@njit(cache=True, nogil=True)
def hinge_epoch(v, scale_norm, s_ptr, s_idx, s_val, ysgn, order, lam_reg, t0, radius):
    """Pegasos epoch on ``w = scale * v`` with the bias as a trailing constant feature.

    ``scale_norm`` holds [scale, ||v||^2].  Returns the updated step counter.
    """
    nfeat = v.shape[0] - 1
    t = t0
    for s in range(order.shape[0]):
        i = order[s]
        t += 1
        eta = 1.0 / (lam_reg * t)
        scale = scale_norm[0]
        margin = v[nfeat]
        for jj in range(s_ptr[i], s_ptr[i + 1]):
            margin += v[s_idx[jj]] * s_val[jj]
        margin *= scale * ysgn[i]
        shrink = 1.0 - eta * lam_reg
        if shrink <= 0.0:
            for k in range(v.shape[0]):
                v[k] = 0.0
            scale_norm[0] = 1.0
            scale_norm[1] = 0.0
        else:
            scale_norm[0] = scale * shrink
        if margin < 1.0:
            g = eta * ysgn[i] / scale_norm[0]
            nrm = scale_norm[1]
            for jj in range(s_ptr[i], s_ptr[i + 1]):
                k = s_idx[jj]
                old = v[k]
                v[k] = old + g * s_val[jj]
                nrm += v[k] * v[k] - old * old
            old = v[nfeat]
            v[nfeat] = old + g
            nrm += v[nfeat] * v[nfeat] - old * old
            scale_norm[1] = nrm
        # projection onto the ball of radius 1/sqrt(lam_reg)
        wnorm = scale_norm[0] * math.sqrt(max(scale_norm[1], 0.0))
        if wnorm > radius:
            scale_norm[0] *= radius / wnorm
        if scale_norm[0] < 1e-100:
            for k in range(v.shape[0]):
                v[k] *= scale_norm[0]
            scale_norm[0] = 1.0
            acc = 0.0
            for k in range(v.shape[0]):
                acc += v[k] * v[k]
            scale_norm[1] = acc
    return t
