"""Pure numpy versions of the hot kernels.

These are the reference implementations; ``_kernels.pyx`` must agree with
them to rounding.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def cauchy2d(s, t, n):
    """Truncated Cauchy product of two E-polynomial series.

    ``s`` has shape (Ns, Ds), ``t`` has shape (Nt, Dt); row i holds the
    E-coefficients of u**i.  Returns the first ``n`` rows of the product,
    shape (n, Ds + Dt - 1).
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    ds, dt = s.shape[1], t.shape[1]
    out = np.zeros((n, ds + dt - 1))
    for i in range(n):
        for j in range(i + 1):
            out[i] += np.convolve(s[j], t[i - j])
    return out


def _tmul(s, t, n):
    # out[i, e] = sum_j s[j, e] * t[i - j, e] for i < n
    m = t.shape[1]
    tp = np.concatenate([np.zeros((n - 1, m)), t[:n]], axis=0)
    win = sliding_window_view(tp, n, axis=0)
    return np.einsum("je,iej->ie", s[:n], win[:, :, ::-1])


def level_values(a0, b0, c0, d0, n_levels, normalize=True):
    """Run the coupled recurrence pointwise in E.

    Each input has shape (N + 1, m): column e holds the Taylor coefficients
    of one coefficient function at the e-th energy sample.  Returns four
    arrays of shape (n_levels + 1, m) with the value at the expansion point
    of a_n, b_n, c_n, d_n for n = 0..n_levels.  After every level the pair
    (a_n, b_n) is divided by its largest absolute Taylor coefficient, per
    energy sample, and likewise (c_n, d_n); zero pairs are left alone.
    ``normalize=False`` skips this and returns the raw values.

    The recurrence runs in ``np.longdouble``: the quantization condition
    cancels all but a few of the leading digits of these values.
    """
    a0, b0, c0, d0 = (np.ascontiguousarray(v, dtype=np.longdouble) for v in (a0, b0, c0, d0))
    size, m = a0.shape
    if n_levels > size - 1:
        raise ValueError(f"need series order >= {n_levels}, have {size - 1}")
    out = np.empty((4, n_levels + 1, m), dtype=np.longdouble)
    a, b, c, d = a0, b0, c0, d0
    out[:, 0] = a[0], b[0], c[0], d[0]
    for level in range(1, n_levels + 1):
        n = size - level
        k = np.arange(1, n + 1)[:, None]
        an = _tmul(a0, a, n) + k * a[1:n + 1] + _tmul(d0, b, n)
        bn = _tmul(b0, a, n) + k * b[1:n + 1] + _tmul(c0, b, n)
        cn = _tmul(c0, c, n) + k * c[1:n + 1] + _tmul(b0, d, n)
        dn = _tmul(d0, c, n) + k * d[1:n + 1] + _tmul(a0, d, n)
        if not normalize:
            a, b, c, d = an, bn, cn, dn
            out[:, level] = a[0], b[0], c[0], d[0]
            continue
        s1 = np.maximum(np.abs(an).max(axis=0), np.abs(bn).max(axis=0))
        s2 = np.maximum(np.abs(cn).max(axis=0), np.abs(dn).max(axis=0))
        s1[s1 == 0] = 1.0
        s2[s2 == 0] = 1.0
        a, b, c, d = an / s1, bn / s1, cn / s2, dn / s2
        out[:, level] = a[0], b[0], c[0], d[0]
    return out[0], out[1], out[2], out[3]
