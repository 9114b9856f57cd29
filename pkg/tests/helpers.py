"""Finite-difference oracles shared by the gradient tests."""

import numpy as np

H = 1e-5


def mse(net, x, y):
    r = net.forward(x) - y
    return float(np.sum(r * r) / len(x))


def fd_param_grads(net, x, y, h=H):
    out = []
    for p in net.parameters():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = mse(net, x, y)
            p[idx] = old - h
            down = mse(net, x, y)
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


def fd_input_grad(net, x, coeffs, h=H):
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (coeffs @ net.forward(x + e) - coeffs @ net.forward(x - e)) / (2 * h)
    return g


def max_rel_err(analytic, numeric, floor=1e-7):
    """Largest componentwise |a - n| / max(|a|, |n|, floor)."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a, n = np.ravel(a), np.ravel(n)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
