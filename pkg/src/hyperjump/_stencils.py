"""Finite-difference weights (Fornberg's recursion) and a few helpers."""

import numpy as np


def fd_weights(z, x, m):
    """Weights ``c`` with ``f^(m)(z) ~ sum_j c[j] f(x[j])`` on arbitrary nodes."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def fd_derivative(f, h, axis=0, m=1, width=5):
    """``m``-th derivative along ``axis`` on a uniform non-periodic grid.

    Centered ``width``-point stencils in the interior, one-sided stencils of
    the same width near both ends.
    """
    f = np.moveaxis(np.asarray(f), axis, 0)
    n = f.shape[0]
    if n < width:
        raise ValueError(f"need at least {width} points along the axis")
    half = width // 2
    out = np.empty_like(f)
    wc = fd_weights(0, np.arange(-half, half + 1), m) / h**m
    inner = sum(wc[j] * f[j:n - width + 1 + j] for j in range(width))
    out[half:n - half] = inner
    for i in range(half):
        wl = fd_weights(i, np.arange(width), m) / h**m
        out[i] = np.tensordot(wl, f[:width], axes=(0, 0))
        wr = fd_weights(width - 1 - i, np.arange(width), m) / h**m
        out[n - 1 - i] = np.tensordot(wr, f[n - width:], axes=(0, 0))
    return np.moveaxis(out, 0, axis)


def smoothstep(s):
    """C-infinity transition from 0 (s <= 0) to 1 (s >= 1)."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)
