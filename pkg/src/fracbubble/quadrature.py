"""Composite Gauss rules for peaked, slowly decaying and endpoint-singular integrands."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.special as sp


@lru_cache(maxsize=32)
def gauss_legendre(npts: int):
    x, w = np.polynomial.legendre.leggauss(npts)
    return x, w


@lru_cache(maxsize=64)
def gauss_jacobi_01(npts: int, expo: float):
    """Nodes/weights on (0,1) for the weight t**expo (expo > -1)."""
    x, w = sp.roots_jacobi(npts, 0.0, expo)
    t = 0.5 * (1.0 + x)
    return t, w * 0.5 ** (1.0 + expo)


def panel_rule(edges, npts: int = 20):
    """Gauss-Legendre on each panel [edges[k], edges[k+1]]."""
    e = np.asarray(edges, dtype=float)
    gx, gw = gauss_legendre(npts)
    lo = e[:-1]
    hi = e[1:]
    x = 0.5 * (lo + hi)[:, None] + 0.5 * (hi - lo)[:, None] * gx[None, :]
    w = 0.5 * (hi - lo)[:, None] * gw[None, :]
    return x.ravel(), w.ravel()


def geometric_edges(centers, lo: float, hi: float, h0: float, ratio: float = 1.5,
                    boundary_h0: float | None = None):
    """Panel edges on [lo, hi] refined geometrically around each center.

    Panels start at width ``h0`` next to every center and grow by ``ratio``.
    When ``boundary_h0`` is given the same grading is applied towards both
    ends of the interval, which resolves boundary layers.
    """
    pts = {float(lo), float(hi)}
    anchors = [(float(c), h0) for c in centers if lo < c < hi]
    if boundary_h0 is not None:
        anchors += [(float(lo), boundary_h0), (float(hi), boundary_h0)]
    for c, h in anchors:
        pts.add(c)
        for direction in (1.0, -1.0):
            step = h
            pos = c
            while True:
                pos = pos + direction * step
                if pos <= lo or pos >= hi:
                    break
                pts.add(pos)
                step *= ratio
    e = np.array(sorted(pts))
    keep = [e[0]]
    for v in e[1:]:
        if v - keep[-1] > 1e-12 * max(1.0, abs(v)):
            keep.append(v)
    return np.array(keep)


def graded_rule(centers, lo, hi, h0, ratio=1.5, npts=20, boundary_h0=None):
    return panel_rule(geometric_edges(centers, lo, hi, h0, ratio, boundary_h0), npts)


def half_line_rule(start: float, scale: float, singular_expo: float | None = None,
                   npts: int = 24, doublings: int = 64):
    """Rule for integrals over (start, inf) of functions decaying at least like a power.

    Panels are [start + scale*2^k, start + scale*2^(k+1)] after a first panel
    [start, start + scale]; on the first panel the weight (y-start)**singular_expo
    is integrated exactly by Gauss-Jacobi when requested (the returned weights
    then already contain that factor).
    """
    gx, gw = gauss_legendre(npts)
    if singular_expo is None:
        t0, w0 = 0.5 * (1.0 + gx), 0.5 * gw
    else:
        t0, w0 = gauss_jacobi_01(npts, singular_expo)
    ts, ws = [t0], [w0]
    a = 1.0
    for _ in range(doublings):
        b = 2.0 * a
        t = 0.5 * (a + b) + 0.5 * (b - a) * gx
        w = 0.5 * (b - a) * gw
        if singular_expo is not None:
            w = w * t ** singular_expo
        ts.append(t)
        ws.append(w)
        a = b
    t = np.concatenate(ts)
    w = np.concatenate(ws)
    expo = 0.0 if singular_expo is None else singular_expo
    return start + scale * t, w * scale ** (1.0 + expo)
