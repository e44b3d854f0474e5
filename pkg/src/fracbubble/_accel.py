"""Hot kernels with a numba path and a pure-numpy fallback.

Set ``FRACBUBBLE_DISABLE_NUMBA=1`` to force the numpy implementations.  Both
paths return identical arrays up to round-off; ``benchmarks/bench_kernels.py``
times them against each other.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("FRACBUBBLE_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError("numba disabled by environment")
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag in CI
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def deco(fn):
            return fn

        return deco


def backend() -> str:
    return "numba" if HAS_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# P1 finite-element stiffness of the restricted operator on a 1-D mesh
# ---------------------------------------------------------------------------


@njit(cache=True)
def _fem_stiffness_numba(x, s, c, gx, gw, near):  # pragma: no cover - compiled
    nn = x.shape[0]
    m = nn - 2
    a = np.zeros((m, m))
    e = 3.0 - 2.0 * s
    kap = c / ((2.0 * s) * (1.0 - 2.0 * s) * (2.0 - 2.0 * s) * (3.0 - 2.0 * s))
    ng = gx.shape[0]
    for i in range(m):
        ki = i + 1
        hli = x[ki] - x[ki - 1]
        hri = x[ki + 1] - x[ki]
        for j in range(i, m):
            kj = j + 1
            hlj = x[kj] - x[kj - 1]
            hrj = x[kj + 1] - x[kj]
            gap = x[kj - 1] - x[ki + 1]
            size = max(hli + hri, hlj + hrj)
            if gap < near * size:
                pi_ = (x[ki - 1], x[ki], x[ki + 1])
                ji = (1.0 / hli, -1.0 / hli - 1.0 / hri, 1.0 / hri)
                pj = (x[kj - 1], x[kj], x[kj + 1])
                jj = (1.0 / hlj, -1.0 / hlj - 1.0 / hrj, 1.0 / hrj)
                acc = 0.0
                for u in range(3):
                    for v in range(3):
                        acc += ji[u] * jj[v] * abs(pi_[u] - pj[v]) ** e
                a[i, j] = kap * acc
            else:
                acc = 0.0
                for ei in range(2):
                    a1 = x[ki - 1 + ei]
                    b1 = x[ki + ei]
                    for ej in range(2):
                        a2 = x[kj - 1 + ej]
                        b2 = x[kj + ej]
                        for p in range(ng):
                            x1 = 0.5 * (a1 + b1) + 0.5 * (b1 - a1) * gx[p]
                            w1 = 0.5 * (b1 - a1) * gw[p]
                            if ei == 0:
                                f1 = (x1 - a1) / (b1 - a1)
                            else:
                                f1 = (b1 - x1) / (b1 - a1)
                            for q in range(ng):
                                x2 = 0.5 * (a2 + b2) + 0.5 * (b2 - a2) * gx[q]
                                w2 = 0.5 * (b2 - a2) * gw[q]
                                if ej == 0:
                                    f2 = (x2 - a2) / (b2 - a2)
                                else:
                                    f2 = (b2 - x2) / (b2 - a2)
                                acc += w1 * f1 * w2 * f2 * abs(x1 - x2) ** (-1.0 - 2.0 * s)
                a[i, j] = -c * acc
            a[j, i] = a[i, j]
    return a


def _fem_stiffness_numpy(x, s, c, gx, gw, near):
    nn = x.shape[0]
    m = nn - 2
    e = 3.0 - 2.0 * s
    kap = c / ((2.0 * s) * (1.0 - 2.0 * s) * (2.0 - 2.0 * s) * (3.0 - 2.0 * s))
    k = np.arange(1, nn - 1)
    hl = x[k] - x[k - 1]
    hr = x[k + 1] - x[k]
    pts = np.stack([x[k - 1], x[k], x[k + 1]], axis=1)
    jmp = np.stack([1.0 / hl, -1.0 / hl - 1.0 / hr, 1.0 / hr], axis=1)
    # exact formula for every pair, then overwrite far pairs with quadrature
    d = np.abs(pts[:, None, :, None] - pts[None, :, None, :]) ** e
    a = kap * np.einsum("iu,jv,ijuv->ij", jmp, jmp, d)
    size = hl + hr
    gap = x[k - 1][None, :] - x[k + 1][:, None]
    gap = np.maximum(gap, gap.T)
    far = gap >= near * np.maximum(size[:, None], size[None, :])
    if np.any(far):
        # Gauss points of both elements of every hat: shape (m, 2*ng)
        ng = gx.shape[0]
        xs = np.empty((m, 2 * ng))
        ws = np.empty((m, 2 * ng))
        for ei, (lo, hi, up) in enumerate(((x[k - 1], x[k], True), (x[k], x[k + 1], False))):
            xx = 0.5 * (lo + hi)[:, None] + 0.5 * (hi - lo)[:, None] * gx[None, :]
            ww = 0.5 * (hi - lo)[:, None] * gw[None, :]
            frac = (xx - lo[:, None]) / (hi - lo)[:, None] if up else (hi[:, None] - xx) / (hi - lo)[:, None]
            xs[:, ei * ng:(ei + 1) * ng] = xx
            ws[:, ei * ng:(ei + 1) * ng] = ww * frac
        ii, jj = np.nonzero(np.triu(far))
        chunk = 4096
        for st in range(0, ii.size, chunk):
            a_i = ii[st:st + chunk]
            a_j = jj[st:st + chunk]
            dist = np.abs(xs[a_i][:, :, None] - xs[a_j][:, None, :]) ** (-1.0 - 2.0 * s)
            val = np.einsum("pu,pv,puv->p", ws[a_i], ws[a_j], dist)
            a[a_i, a_j] = -c * val
            a[a_j, a_i] = -c * val
    return a


def fem_restricted_stiffness(x, s, c, gx, gw, near=4.0):
    """Dense stiffness of P1 hats on nodes ``x`` (end nodes carry the zero condition)."""
    x = np.ascontiguousarray(x, dtype=float)
    if HAS_NUMBA:
        return _fem_stiffness_numba(x, float(s), float(c), np.asarray(gx, float), np.asarray(gw, float), float(near))
    return _fem_stiffness_numpy(x, float(s), float(c), np.asarray(gx, float), np.asarray(gw, float), float(near))


# ---------------------------------------------------------------------------
# 2-D lattice interaction matrix  h^2 |x_i - x_j|^{-2-2s}
# ---------------------------------------------------------------------------


@njit(cache=True)
def _lattice2d_numba(px, py, h, s):  # pragma: no cover - compiled
    m = px.shape[0]
    out = np.zeros((m, m))
    ex = -1.0 - s
    for i in range(m):
        for j in range(i + 1, m):
            dx = px[i] - px[j]
            dy = py[i] - py[j]
            v = h * h * (dx * dx + dy * dy) ** ex
            out[i, j] = v
            out[j, i] = v
    return out


def _lattice2d_numpy(px, py, h, s):
    dx = px[:, None] - px[None, :]
    dy = py[:, None] - py[None, :]
    r2 = dx * dx + dy * dy
    np.fill_diagonal(r2, 1.0)
    out = h * h * r2 ** (-1.0 - s)
    np.fill_diagonal(out, 0.0)
    return out


def lattice2d_interaction(px, py, h, s):
    px = np.ascontiguousarray(px, dtype=float)
    py = np.ascontiguousarray(py, dtype=float)
    if HAS_NUMBA:
        return _lattice2d_numba(px, py, float(h), float(s))
    return _lattice2d_numpy(px, py, float(h), float(s))


# ---------------------------------------------------------------------------
# Kernel sums  out[i] = sum_k w[k] f[k] / |x_i - y_k|  (Poisson-kernel evaluation)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _cauchy_sum_numba(x, y, wf):  # pragma: no cover - compiled
    out = np.zeros(x.shape[0])
    for i in range(x.shape[0]):
        acc = 0.0
        xi = x[i]
        for k in range(y.shape[0]):
            acc += wf[k] / abs(xi - y[k])
        out[i] = acc
    return out


def _cauchy_sum_numpy(x, y, wf):
    out = np.empty(x.shape[0])
    chunk = max(1, 2_000_000 // max(1, y.shape[0]))
    for st in range(0, x.shape[0], chunk):
        xx = x[st:st + chunk]
        out[st:st + chunk] = (wf[None, :] / np.abs(xx[:, None] - y[None, :])).sum(axis=1)
    return out


def cauchy_sum(x, y, wf):
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    wf = np.ascontiguousarray(wf, dtype=float)
    if HAS_NUMBA:
        return _cauchy_sum_numba(x, y, wf)
    return _cauchy_sum_numpy(x, y, wf)

