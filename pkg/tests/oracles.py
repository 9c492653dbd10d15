"""Independent reference computations used by several test modules."""

import numpy as np


def _sig(a):
    return 1.0 / (1.0 + np.exp(-a))


def label_loss(W, b, V, c, xs, ys):
    h = _sig(b + W @ xs)
    a = c + V @ h
    return -(a[ys] - np.log(np.exp(a).sum()))


def domain_term(W, b, w, d, xs, xt, lam):
    """lam * (log o(xs) + log(1 - o(xt))), the pairwise domain log-likelihood."""
    os_ = _sig(d + w @ _sig(b + W @ xs))
    ot = _sig(d + w @ _sig(b + W @ xt))
    return lam * (np.log(os_) + np.log(1.0 - ot))


def central_diff(fn, arr, eps=1e-5):
    g = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        old = arr[idx]
        arr[idx] = old + eps
        up = fn()
        arr[idx] = old - eps
        down = fn()
        arr[idx] = old
        g[idx] = (up - down) / (2 * eps)
    return g


def fd_deltas(W, b, V, c, w, d, xs, ys, xt, lam, adversarial=True):
    """Finite-difference versions of every delta of one inner-loop iteration."""
    W, b, V, c, w = (np.array(a, dtype=float) for a in (W, b, V, c, w))
    dd = np.array([float(d)])
    L = lambda: label_loss(W, b, V, c, xs, ys)
    R = lambda: domain_term(W, b, w, dd[0], xs, xt, lam)
    J = (lambda: L() + R()) if adversarial else L
    return {"c": central_diff(L, c), "V": central_diff(L, V), "b": central_diff(J, b), "W": central_diff(J, W),
            "w": central_diff(R, w), "d": float(central_diff(R, dd)[0])}


def random_instance(rng):
    n, l = int(rng.integers(1, 7)), int(rng.integers(1, 5))
    return dict(W=rng.normal(size=(l, n)), b=rng.normal(size=l), V=rng.normal(size=(2, l)), c=rng.normal(size=2),
                w=rng.normal(size=l), d=float(rng.normal()), xs=rng.normal(size=n), ys=int(rng.integers(0, 2)),
                xt=rng.normal(size=n), lam=float(rng.uniform(0.1, 2.0)))


def rel_close(a, b, rtol=1e-5, atol=1e-8):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return bool(np.all(np.abs(a - b) <= rtol * np.maximum(np.abs(a), np.abs(b)) + atol))
