"""Discrete spectral and restricted fractional Laplacians on intervals, rectangles,
balls and truncated half-spaces.

Representations
---------------
* ``spectral``: Dirichlet eigen-series.  Intervals and rectangles use the exact
  eigenpairs sampled on the lattice (applied with DST-I); disks and domains with
  holes use the eigenpairs of the discrete Dirichlet Laplacian.  On a graded
  1-D mesh the matrix-transfer form ``M V diag(mu^s) V^T M`` is used.
* ``restricted``: the hypersingular integral of the zero extension.  In 1-D the
  principal value is split at ``|x-z| = h`` (second-order Taylor inside,
  trapezoid outside, analytic exterior tail).  In 2-D a lattice sum with an
  Epstein-zeta diagonal is used.  On graded 1-D meshes a P1 Galerkin stiffness
  with exact near-field integrals is built (see ``_accel``).
* ``whole-space``: 1-D only; the box values are continued by a power-law tail.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.integrate as si
import scipy.linalg as sl
import scipy.special as sp

from . import _accel
from .constants import FracParams, kernel_constant
from .errors import CapabilityError, ConfigurationError, NumericError
from .quadrature import gauss_legendre

KINDS = ("spectral", "restricted", "whole-space")
DOMAIN_KINDS = ("interval", "rectangle", "ball", "truncated-half-space")


# ---------------------------------------------------------------------------
# domains and grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DomainSpec:
    """Bounded domain.

    interval: ``bounds=(lo, hi)``, optional ``holes`` (closed sub-intervals removed).
    rectangle: ``bounds=(x0, x1, y0, y1)``.
    ball: ``center``, ``radius`` (n = 1 or 2).
    truncated-half-space: ``radius`` R; n = 1 gives (0, R), n = 2 gives
    (-R, R) x (0, R).  The physical boundary is the hyperplane x_n = 0.
    """

    kind: str
    n: int
    bounds: tuple = ()
    center: tuple = ()
    radius: float = 0.0
    holes: tuple = ()
    roi: float = 0.0

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ConfigurationError(f"unknown domain kind {self.kind!r}")
        if self.n not in (1, 2):
            raise CapabilityError(f"grids are supported for n <= 2, got n = {self.n}")
        if self.kind == "interval":
            lo, hi = self.bounds
            if not hi > lo:
                raise ConfigurationError("interval needs lo < hi")
            for a, b in self.holes:
                if not (lo < a < b < hi):
                    raise ConfigurationError(f"hole ({a}, {b}) must lie strictly inside ({lo}, {hi})")
        elif self.holes:
            raise CapabilityError("holes are supported for intervals only")
        if self.kind == "rectangle":
            x0, x1, y0, y1 = self.bounds
            if not (x1 > x0 and y1 > y0):
                raise ConfigurationError("rectangle needs x0 < x1 and y0 < y1")
        if self.kind in ("ball", "truncated-half-space") and not self.radius > 0:
            raise ConfigurationError("radius must be positive")
        if self.kind == "ball" and len(self.center) != self.n:
            raise ConfigurationError("ball center must have n coordinates")
        if self.kind == "truncated-half-space" and self.roi > 0 and self.radius < 10 * self.roi:
            raise ConfigurationError(
                f"truncation radius {self.radius} must be at least 10x the region of interest {self.roi}")

    # constructors -------------------------------------------------------
    @classmethod
    def interval(cls, lo=-1.0, hi=1.0, holes=()):
        return cls("interval", 1, bounds=(float(lo), float(hi)),
                   holes=tuple((float(a), float(b)) for a, b in holes))

    @classmethod
    def rectangle(cls, x0, x1, y0, y1):
        return cls("rectangle", 2, bounds=(float(x0), float(x1), float(y0), float(y1)))

    @classmethod
    def ball(cls, n=1, center=None, radius=1.0):
        c = tuple([0.0] * n) if center is None else tuple(float(v) for v in np.atleast_1d(center))
        return cls("ball", n, center=c, radius=float(radius))

    @classmethod
    def truncated_half_space(cls, n=1, radius=100.0, roi=0.0):
        return cls("truncated-half-space", n, radius=float(radius), roi=float(roi))

    # geometry -----------------------------------------------------------
    def bbox(self):
        if self.kind == "interval":
            return np.array([self.bounds[0]]), np.array([self.bounds[1]])
        if self.kind == "rectangle":
            x0, x1, y0, y1 = self.bounds
            return np.array([x0, y0]), np.array([x1, y1])
        if self.kind == "ball":
            c = np.array(self.center)
            return c - self.radius, c + self.radius
        R = self.radius
        if self.n == 1:
            return np.array([0.0]), np.array([R])
        return np.array([-R, 0.0]), np.array([R, R])

    def diam(self) -> float:
        if self.kind == "ball":
            return 2.0 * self.radius
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))

    def _pts(self, x):
        x = np.asarray(x, dtype=float)
        if self.n == 1:
            if x.ndim >= 1 and x.shape[-1:] == (1,) and x.ndim >= 2:
                x = x[..., 0]
            return x[..., None]
        return x

    def contains(self, x, margin: float = 0.0):
        """Strict interior test (points at distance > margin from the boundary)."""
        return self.dist_boundary(x) > margin

    def dist_boundary(self, x):
        """Signed distance to the boundary (positive inside)."""
        p = self._pts(x)
        if self.kind == "ball":
            c = np.array(self.center)
            return self.radius - np.linalg.norm(p - c, axis=-1)
        lo, hi = self.bbox()
        d = np.min(np.concatenate([p - lo, hi - p], axis=-1), axis=-1)
        if self.kind == "interval" and self.holes:
            t = p[..., 0]
            for a, b in self.holes:
                inside_hole = (t >= a) & (t <= b)
                dh = np.minimum(np.abs(t - a), np.abs(t - b))
                d = np.where(inside_hole, -dh, np.minimum(d, dh))
        return d

    def height(self, x):
        """Distance to the hyperplane x_n = 0 (truncated half-spaces)."""
        return self._pts(x)[..., -1]

    def to_dict(self):
        return {"kind": self.kind, "n": self.n, "bounds": list(self.bounds), "center": list(self.center),
                "radius": self.radius, "holes": [list(h) for h in self.holes], "roi": self.roi}


@dataclass(frozen=True)
class Grid:
    """Uniform lattice over the bounding box.  ``nodes`` has shape (M,) for n = 1
    and (M, 2) for n = 2; ``interior`` marks lattice nodes strictly inside."""

    nodes: np.ndarray
    h: float
    interior: np.ndarray
    shape: tuple
    spacing: tuple
    graded: bool = False

    @property
    def n(self):
        return 1 if self.nodes.ndim == 1 else self.nodes.shape[1]

    @property
    def points(self):
        return self.nodes[self.interior]


def make_grid(domain: DomainSpec, h: float | None = None, N: int | None = None) -> Grid:
    """Lattice with spacing ~h (or N cells along the longest axis) over the bounding box."""
    lo, hi = domain.bbox()
    ext = hi - lo
    if N is None:
        if h is None or not h > 0:
            raise ConfigurationError("make_grid needs h > 0 or N")
        cells = [max(2, int(round(e / h))) for e in ext]
    else:
        if N < 2:
            raise ConfigurationError("N must be at least 2")
        hh = float(np.max(ext)) / N
        cells = [max(2, int(round(e / hh))) for e in ext]
    spacing = tuple(float(e / c) for e, c in zip(ext, cells))
    axes = [lo[k] + spacing[k] * np.arange(cells[k] + 1) for k in range(len(cells))]
    if domain.n == 1:
        nodes = axes[0]
    else:
        X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
        nodes = np.stack([X.ravel(), Y.ravel()], axis=1)
    tol = 1e-9 * max(spacing)
    interior = domain.dist_boundary(nodes) > tol
    if not np.any(interior):
        raise ConfigurationError("grid has no interior nodes")
    return Grid(nodes=nodes, h=float(max(spacing)), interior=interior,
                shape=tuple(c + 1 for c in cells), spacing=spacing)


def graded_grid(domain: DomainSpec, centers=(), h0: float = 0.1, hmax: float = 1.0,
                ratio: float = 1.1, boundary_h: float | None = None) -> Grid:
    """1-D mesh refined to width h0 at each center, growing geometrically to hmax.

    With ``boundary_h`` the mesh is also refined towards both endpoints, which
    resolves the (dist)^s boundary layer of restricted solutions.
    """
    if domain.n != 1 or domain.kind not in ("interval", "ball", "truncated-half-space") or domain.holes:
        raise CapabilityError("graded meshes are available for plain 1-D domains")
    lo, hi = (float(v[0]) for v in domain.bbox())
    anchors = [(float(c), h0) for c in np.atleast_1d(centers) if lo < c < hi]
    if boundary_h is not None:
        anchors += [(lo, boundary_h), (hi, boundary_h)]
    if not anchors:
        anchors = [(0.5 * (lo + hi), h0)]

    def size(x):
        hs = [min(hmax, h + (ratio - 1.0) * abs(x - c)) for c, h in anchors]
        return min(hs)

    pts = [lo]
    while True:
        nxt = pts[-1] + size(pts[-1])
        if nxt >= hi - 0.5 * size(hi):
            break
        pts.append(nxt)
    pts.append(hi)
    x = np.array(pts)
    # smooth the last cell by a uniform stretch of the final few nodes
    interior = np.ones(x.size, dtype=bool)
    interior[0] = interior[-1] = False
    dx = np.diff(x)
    return Grid(nodes=x, h=float(dx.max()), interior=interior, shape=(x.size,),
                spacing=(float(dx.min()),), graded=True)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


@dataclass
class DiscreteOperator:
    """A realized fractional Laplacian on the unknown nodes ``mask`` of ``grid``.

    ``weights`` define the grid inner product <u,v> = sum w_i u_i v_i.  For
    ``method == 'fem'`` fields are nodal P1 coefficients and ``mass`` is the
    consistent mass matrix; ``matrix`` is then the Galerkin stiffness.
    """

    kind: str
    method: str
    domain: DomainSpec
    s: float
    grid: Grid
    mask: np.ndarray
    weights: np.ndarray
    matrix: np.ndarray | None = None
    eigvals: np.ndarray | None = None
    eigvecs: np.ndarray | None = None
    mass: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    _factor: object = field(default=None, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    @property
    def points(self):
        return self.grid.nodes[self.mask]

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    def inner(self, u, v) -> float:
        if self.method == "fem":
            return float(u @ (self.mass @ v))
        return float(np.sum(self.weights * u * v))


def _restricted_fd_1d(grid: Grid, s: float, mask: np.ndarray, whole_space: bool = False, kappa: float = 0.0):
    """Matrix of the 1-D restricted (or whole-space) stencil on lattice nodes ``mask``.

    Node i sees the lattice on both sides up to the box ends (distance J h).
    Inner part |z| < h: c h^{-2s}/(2-2s) (2u_i - u_{i-1} - u_{i+1}).
    Outer part h..Jh: trapezoid, end weights h/2, empty when J = 1.
    Beyond the box: u = 0 (restricted) or the tail u_end (L/|z|)^kappa.
    """
    c = kernel_constant(1, s)
    x = grid.nodes
    N = x.size - 1
    h = grid.spacing[0]
    ci = h ** (-2 * s) / (2 - 2 * s)
    m = np.arange(N + 1, dtype=float)
    F = np.zeros(N + 1)
    F[1:] = (m[1:] * h) ** (-1 - 2 * s)
    cum = np.cumsum(F)  # cum[J] = sum_{m=1..J} F(m)

    def side(J):
        J = np.asarray(J)
        tot = h * cum[J] - 0.5 * h * (F[np.minimum(J, N)] + F[1])
        return np.where(J >= 2, tot, 0.0)

    # Toeplitz kernel for lattice pairs that are both away from an end
    t = np.zeros(N + 1)
    t[1:] = h * F[1:]
    t[1] = 0.5 * h * F[1] + ci
    idx = np.nonzero(mask)[0]
    A = -t[np.abs(idx[:, None] - idx[None, :])]
    JL = idx  # distance (in cells) to the left end node
    JR = N - idx
    diag = 2 * ci + side(JL) + side(JR)
    if not whole_space:
        diag = diag + ((JL * h) ** (-2 * s) + (JR * h) ** (-2 * s)) / (2 * s)
        # the end-node columns do not exist (u = 0 there); nothing else to adjust
    else:
        L = 0.5 * (x[-1] - x[0])
        x0 = 0.5 * (x[-1] + x[0])
        pos = {k: i for i, k in enumerate(idx)}
        iL, iR = pos[0], pos[N]
        # end-node couplings inside the box: trapezoid weight h/2 (J >= 2); the
        # J = 1 neighbor is already in the Taylor term through t[1]
        for i, k in enumerate(idx):
            for J, jcol in ((JL[i], iL), (JR[i], iR)):
                if J >= 2:
                    A[i, jcol] = -0.5 * h * F[J]
                elif J == 1:
                    A[i, jcol] = -ci  # no trapezoid segment when the end is the neighbor
        rel = (x[idx] - x0) / L
        for i, k in enumerate(idx):
            for J, jcol, sgn in ((JR[i], iR, 1.0), (JL[i], iL, -1.0)):
                if J >= 1:
                    diag[i] += (J * h) ** (-2 * s) / (2 * s)
                    A[i, jcol] -= L ** kappa * _tail_coupling(sgn * rel[i], L, s, kappa)
        # end nodes: ghost neighbor u_end (L/(L+h))^kappa and the tail integral
        ghost = (L / (L + h)) ** kappa
        q = _end_tail_integral(L, h, s, kappa)
        for i in (iL, iR):
            diag[i] += -ci * ghost + q
    A[np.arange(idx.size), np.arange(idx.size)] = diag
    return c * A


def _tail_coupling(r, L, s, kappa):
    """int_L^inf z^{-kappa} (z - x)^{-1-2s} dz with x = r L, r < 1."""
    b = kappa + 2 * s
    return L ** (-kappa - 2 * s) / b * sp.hyp2f1(1 + 2 * s, b, b + 1, r)


def _end_tail_integral(L, h, s, kappa):
    """int_h^inf (1 - (L/(L+r))^kappa) r^{-1-2s} dr."""
    f = lambda r: (1.0 - (L / (L + r)) ** kappa) * r ** (-1 - 2 * s)
    v1 = si.quad(f, h, L, limit=200, epsrel=1e-12)[0]
    v2 = si.quad(f, L, np.inf, limit=200, epsrel=1e-12)[0]
    return v1 + v2


def _square_cell_integral(s):
    """int over [-1/2,1/2]^2 of |z|^{-2s} dz."""
    v = si.quad(lambda th: (2 * math.cos(th)) ** (-(2 - 2 * s)), 0.0, math.pi / 4, epsrel=1e-13)[0]
    return 8.0 / (2 - 2 * s) * v


def epstein_square(x):
    """sum over Z^2 minus 0 of |k|^{-2x} = 4 zeta(x) beta(x), x > 1."""
    beta = 4.0 ** (-x) * (sp.zeta(x, 0.25) - sp.zeta(x, 0.75))
    return 4.0 * sp.zeta(x) * beta


def _neighbors_2d(grid: Grid, idx):
    nx, ny = grid.shape
    ii, jj = np.unravel_index(idx, (nx, ny))
    out = []
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        a, b = ii + di, jj + dj
        ok = (a >= 0) & (a < nx) & (b >= 0) & (b < ny)
        out.append((np.where(ok, np.ravel_multi_index((np.clip(a, 0, nx - 1), np.clip(b, 0, ny - 1)), (nx, ny)), -1)))
    return np.stack(out, axis=1)


def _restricted_lattice_2d(grid: Grid, s: float, mask: np.ndarray):
    """Lattice-sum restricted operator in 2-D (square grids only)."""
    hx, hy = grid.spacing
    if abs(hx - hy) > 1e-12 * hx:
        raise CapabilityError("the 2-D restricted lattice needs equal spacing on both axes")
    h = hx
    c = kernel_constant(2, s)
    idx = np.nonzero(mask)[0]
    pts = grid.nodes[idx]
    A = -_accel.lattice2d_interaction(pts[:, 0], pts[:, 1], h, s)
    tay = h ** (-2 * s) * _square_cell_integral(s) / 4.0
    pos = -np.ones(grid.nodes.shape[0], dtype=int)
    pos[idx] = np.arange(idx.size)
    nb = _neighbors_2d(grid, idx)
    for k in range(4):
        col = np.where(nb[:, k] >= 0, pos[np.maximum(nb[:, k], 0)], -1)
        ok = col >= 0
        A[np.nonzero(ok)[0], col[ok]] -= tay
    diag = h ** (-2 * s) * epstein_square(1 + s) + 4 * tay
    A[np.arange(idx.size), np.arange(idx.size)] = diag
    return c * A


def _laplacian_dirichlet(grid: Grid, mask: np.ndarray):
    """Second-difference Dirichlet Laplacian (-Delta) on the unknown nodes."""
    idx = np.nonzero(mask)[0]
    pos = -np.ones(grid.nodes.shape[0], dtype=int)
    pos[idx] = np.arange(idx.size)
    m = idx.size
    L = np.zeros((m, m))
    if grid.n == 1:
        h = grid.spacing[0]
        for di in (-1, 1):
            nb = idx + di
            ok = (nb >= 0) & (nb < grid.nodes.size)
            col = np.where(ok, pos[np.clip(nb, 0, grid.nodes.size - 1)], -1)
            r = np.nonzero(col >= 0)[0]
            L[r, col[r]] = -1.0 / h ** 2
        L[np.arange(m), np.arange(m)] = 2.0 / h ** 2
    else:
        hx, hy = grid.spacing
        nb = _neighbors_2d(grid, idx)
        for k, hh in enumerate((hx, hx, hy, hy)):
            col = np.where(nb[:, k] >= 0, pos[np.maximum(nb[:, k], 0)], -1)
            r = np.nonzero(col >= 0)[0]
            L[r, col[r]] = -1.0 / hh ** 2
        L[np.arange(m), np.arange(m)] = 2.0 / hx ** 2 + 2.0 / hy ** 2
    return L


def _fem_mass(x):
    """Consistent P1 mass on the interior nodes of the mesh x (ends excluded)."""
    hl = np.diff(x)
    m = x.size - 2
    M = np.zeros((m, m))
    M[np.arange(m), np.arange(m)] = (hl[:-1] + hl[1:]) / 3.0
    off = hl[1:-1] / 6.0
    M[np.arange(m - 1), np.arange(1, m)] = off
    M[np.arange(1, m), np.arange(m - 1)] = off
    return M


def _fem_laplacian(x):
    hl = np.diff(x)
    m = x.size - 2
    K = np.zeros((m, m))
    K[np.arange(m), np.arange(m)] = 1.0 / hl[:-1] + 1.0 / hl[1:]
    off = -1.0 / hl[1:-1]
    K[np.arange(m - 1), np.arange(1, m)] = off
    K[np.arange(1, m), np.arange(m - 1)] = off
    return K


def _spectral_axes(domain: DomainSpec, grid: Grid):
    """Axis lengths when the exact separable spectrum applies, else None."""
    if domain.kind == "interval" and not domain.holes:
        return (domain.bounds[1] - domain.bounds[0],)
    if domain.kind == "ball" and domain.n == 1:
        return (2.0 * domain.radius,)
    if domain.kind == "rectangle":
        return (domain.bounds[1] - domain.bounds[0], domain.bounds[3] - domain.bounds[2])
    if domain.kind == "truncated-half-space":
        return (domain.radius,) if domain.n == 1 else (2.0 * domain.radius, domain.radius)
    return None


def _cache_key(domain, s, grid, kind, method):
    payload = json.dumps({"domain": domain.to_dict(), "s": float(s), "h": float(grid.h),
                          "spacing": list(grid.spacing), "nodes": int(grid.nodes.shape[0]),
                          "graded": bool(grid.graded),
                          "grid_sha": hashlib.sha256(np.ascontiguousarray(grid.nodes).tobytes()).hexdigest(),
                          "kind": kind, "method": method}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def cache_dir():
    return os.environ.get("FRACBUBBLE_CACHE_DIR") or None


def save_operator(op: DiscreteOperator, path: str):
    arrays = {k: getattr(op, k) for k in ("matrix", "eigvals", "eigvecs", "mass") if getattr(op, k) is not None}
    np.savez(path, mask=op.mask, weights=op.weights, meta=json.dumps(op.meta, sort_keys=True), **arrays)


def load_operator(path: str, kind, method, domain, s, grid) -> DiscreteOperator:
    with np.load(path, allow_pickle=False) as z:
        kw = {k: z[k] for k in ("matrix", "eigvals", "eigvecs", "mass") if k in z.files}
        return DiscreteOperator(kind=kind, method=method, domain=domain, s=s, grid=grid, mask=z["mask"],
                                weights=z["weights"], meta=json.loads(str(z["meta"])), **kw)


def build_operator(domain: DomainSpec, params: FracParams | float, grid: Grid, kind: str,
                   use_cache: bool | None = None, tail_exponent: float | None = None) -> DiscreteOperator:
    """Realize the operator of ``kind`` on ``grid``.

    Results are stored in the binary cache when FRACBUBBLE_CACHE_DIR is set
    (or ``use_cache`` is True and the variable is set).
    """
    s = params.s if isinstance(params, FracParams) else float(params)
    n = domain.n
    if kind not in KINDS:
        raise CapabilityError(f"unknown operator kind {kind!r}")
    if isinstance(params, FracParams) and params.n != n:
        raise ConfigurationError(f"params.n = {params.n} does not match the domain dimension {n}")
    method = _choose_method(domain, grid, kind)
    cdir = cache_dir() if use_cache in (None, True) else None
    path = None
    if cdir is not None:
        key = _cache_key(domain, s, grid, kind, method)
        path = os.path.join(cdir, f"op_{key}.npz")
        if os.path.exists(path):
            op = load_operator(path, kind, method, domain, s, grid)
            op.meta["cache"] = "hit"
            return op
    op = _build(domain, s, grid, kind, method, tail_exponent)
    if path is not None:
        os.makedirs(cdir, exist_ok=True)
        save_operator(op, path)
        op.meta["cache"] = "stored"
    return op


def _choose_method(domain, grid, kind):
    n = domain.n
    if kind == "whole-space":
        if n != 1 or domain.kind != "interval" or domain.holes or grid.graded:
            raise CapabilityError("the whole-space operator is available on plain 1-D lattices")
        return "fd"
    if grid.graded:
        if n != 1:
            raise CapabilityError("graded meshes are 1-D only")
        return "fem"
    if kind == "spectral":
        return "dst" if _spectral_axes(domain, grid) is not None else "eig"
    return "fd" if n == 1 else "lattice2d"


def _build(domain, s, grid, kind, method, tail_exponent):
    n = domain.n
    meta = {"backend": _accel.backend()}
    if method == "fem":
        x = grid.nodes
        mask = grid.interior.copy()
        M = _fem_mass(x)
        w = M.sum(axis=1)
        if kind == "restricted":
            gx, gw = gauss_legendre(8)
            A = _accel.fem_restricted_stiffness(x, s, kernel_constant(1, s), gx, gw)
            return DiscreteOperator(kind, method, domain, s, grid, mask, w, matrix=A, mass=M, meta=meta)
        K = _fem_laplacian(x)
        mu, V = sl.eigh(K, M)
        A = M @ (V * mu ** s) @ V.T @ M
        A = 0.5 * (A + A.T)
        meta["modes"] = int(mu.size)
        return DiscreteOperator(kind, method, domain, s, grid, mask, w, matrix=A, eigvals=mu, eigvecs=V,
                                mass=M, meta=meta)
    cell = float(np.prod(grid.spacing))
    if kind == "whole-space":
        mask = np.ones(grid.nodes.size, dtype=bool)
        kap = (1 - 2 * s) if tail_exponent is None else float(tail_exponent)
        A = _restricted_fd_1d(grid, s, mask, whole_space=True, kappa=kap)
        w = np.full(mask.sum(), cell)
        meta["tail_exponent"] = kap
        return DiscreteOperator(kind, method, domain, s, grid, mask, w, matrix=A, meta=meta)
    mask = grid.interior.copy()
    w = np.full(int(mask.sum()), cell)
    if kind == "restricted":
        A = _restricted_fd_1d(grid, s, mask) if n == 1 else _restricted_lattice_2d(grid, s, mask)
        return DiscreteOperator(kind, method, domain, s, grid, mask, w, matrix=A, meta=meta)
    if method == "dst":
        axes = _spectral_axes(domain, grid)
        ks = [np.arange(1, m - 1 + 1) for m in (np.array(grid.shape) - 1)]
        lam = [(k * math.pi / ell) ** 2 for k, ell in zip(ks, axes)]
        ev = lam[0] if n == 1 else lam[0][:, None] + lam[1][None, :]
        meta["modes"] = int(ev.size)
        return DiscreteOperator(kind, method, domain, s, grid, mask, w, eigvals=ev, meta=meta)
    L = _laplacian_dirichlet(grid, mask)
    mu, V = np.linalg.eigh(L)
    V = V / math.sqrt(cell)  # orthonormal in the grid inner product
    meta["modes"] = int(mu.size)
    return DiscreteOperator(kind, method, domain, s, grid, mask, w, eigvals=mu, eigvecs=V, meta=meta)


# ---------------------------------------------------------------------------
# apply / solve
# ---------------------------------------------------------------------------


def _restrict(op: DiscreteOperator, u):
    u = np.asarray(u, dtype=float)
    if u.shape == (op.size,):
        return u
    if u.shape == (op.grid.nodes.shape[0],):
        return u[op.mask]
    raise ConfigurationError(f"field of shape {u.shape} does not match the operator grid "
                             f"({op.size} unknowns, {op.grid.nodes.shape[0]} nodes)")


def _dst_apply(op, u, power):
    n = op.domain.n
    if n == 1:
        c = sfft.dst(u, type=1, norm="ortho")
        return sfft.dst(c * op.eigvals ** power, type=1, norm="ortho")
    nx, ny = (np.array(op.grid.shape) - 2)
    U = u.reshape(nx, ny)
    C = sfft.dstn(U, type=1, norm="ortho")
    return sfft.idstn(C * op.eigvals ** power, type=1, norm="ortho").ravel()


def apply(op: DiscreteOperator, u) -> np.ndarray:
    """A_s u on the unknown nodes (u given on unknowns or on all grid nodes)."""
    u = _restrict(op, u)
    if op.kind == "spectral" and op.method == "dst":
        return _dst_apply(op, u, op.s)
    if op.kind == "spectral" and op.method == "eig":
        V, w = op.eigvecs, op.weights
        return V @ (op.eigvals ** op.s * (V.T @ (w * u)))
    if op.method == "fem":
        return sl.cho_solve(_mass_factor(op), op.matrix @ u)
    return op.matrix @ u


def _mass_factor(op):
    with op._lock:
        f = op.meta.get("_mass_cho")
        if f is None:
            f = sl.cho_factor(op.mass)
            op.meta["_mass_cho"] = f
        return f


def _factor(op):
    with op._lock:
        if op._factor is None:
            try:
                op._factor = ("cho", sl.cho_factor(op.matrix))
            except (np.linalg.LinAlgError, sl.LinAlgError):
                op._factor = ("lu", sl.lu_factor(op.matrix))
        return op._factor


def solve(op: DiscreteOperator, f, tol: float = 1e-8) -> np.ndarray:
    """u with A_s u = f and zero data on the complement; raises NumericError when the
    relative residual exceeds ``tol``."""
    f = _restrict(op, f)
    if op.kind == "spectral" and op.method == "dst":
        return _dst_apply(op, f, -op.s)
    if op.kind == "spectral" and op.method == "eig":
        V, w = op.eigvecs, op.weights
        return V @ (op.eigvals ** (-op.s) * (V.T @ (w * f)))
    rhs = op.mass @ f if op.method == "fem" else f
    return solve_system(op, rhs, tol)


def solve_system(op: DiscreteOperator, rhs, tol: float = 1e-8) -> np.ndarray:
    """Solve matrix @ u = rhs directly (for FEM this takes a Galerkin load vector)."""
    kind, fac = _factor(op)
    u = sl.cho_solve(fac, rhs) if kind == "cho" else sl.lu_solve(fac, rhs)
    nr = np.linalg.norm(rhs)
    if nr > 0:
        res = np.linalg.norm(op.matrix @ u - rhs) / nr
        if not res <= tol:
            raise NumericError(f"linear solve residual {res:.3e} exceeds {tol:.1e}", residual=res)
    return u


def dense_matrix(op: DiscreteOperator) -> np.ndarray:
    """Matrix of ``apply`` on the unknowns."""
    if op.matrix is not None and op.method != "fem":
        return op.matrix
    if op.method == "fem":
        return sl.cho_solve(_mass_factor(op), op.matrix)
    if op.method == "eig":
        V = op.eigvecs
        return (V * op.eigvals ** op.s) @ (V.T * op.weights)
    I = np.eye(op.size)
    return np.stack([apply(op, I[:, k]) for k in range(op.size)], axis=1)


def eigenpairs(op: DiscreteOperator, count: int | None = None):
    """Eigenvalues (ascending) of A_s and eigenfields orthonormal in the grid inner product."""
    if op.kind == "spectral" and op.method == "dst":
        n = op.domain.n
        if n == 1:
            ev = op.eigvals
            k = op.size
            S = sfft.dst(np.eye(k), type=1, norm="ortho", axis=0)
            V = S / math.sqrt(op.weights[0])
        else:
            nx, ny = np.array(op.grid.shape) - 2
            ev = op.eigvals.ravel()
            Sx = sfft.dst(np.eye(nx), type=1, norm="ortho", axis=0)
            Sy = sfft.dst(np.eye(ny), type=1, norm="ortho", axis=0)
            V = np.kron(Sx, Sy) / math.sqrt(op.weights[0])
        order = np.argsort(ev, kind="stable")
        ev, V = ev[order] ** op.s, V[:, order]
    elif op.kind == "spectral" and op.method == "eig":
        ev, V = op.eigvals ** op.s, op.eigvecs
    elif op.method == "fem":
        ev, V = sl.eigh(op.matrix, op.mass)
    else:
        # uniform weights: A is symmetric in l2, rescale eigenvectors to the grid norm
        ev, V = np.linalg.eigh(0.5 * (op.matrix + op.matrix.T))
        V = V / np.sqrt(op.weights)[:, None]
    if count is not None:
        ev, V = ev[:count], V[:, :count]
    return ev, V


def spectral_truncation(op: DiscreteOperator, u, tol: float = 1e-10) -> int:
    """Smallest K with relative tail sum_{k>K} lambda_k^{2s} u_k^2 below tol."""
    if op.kind != "spectral":
        raise CapabilityError("spectral_truncation needs a spectral operator")
    ev, V = eigenpairs(op)
    coef = V.T @ (op.weights * _restrict(op, u))
    e = ev ** 2 * coef ** 2
    tot = e.sum()
    if tot == 0:
        return 0
    tail = tot - np.cumsum(e)
    return int(np.argmax(tail <= tol * tot) + 1)


# ---------------------------------------------------------------------------
# maximum principle with exterior / boundary data
# ---------------------------------------------------------------------------


def max_principle_check(op: DiscreteOperator, g, gl_points: int = 64) -> dict:
    """Solve A_s u = 0 inside with u = g on the complement (restricted) or on the
    boundary (spectral, through the extension), and report sup|u| / sup|g|."""
    if op.kind == "whole-space":
        raise CapabilityError("the maximum principle check needs a bounded domain")
    if op.kind == "spectral":
        u, gs = _spectral_harmonic_extension(op, g)
    elif op.domain.n == 1 and op.method == "fd":
        u, gs = _restricted_exterior_1d(op, g, gl_points)
    elif op.method == "lattice2d":
        u, gs = _restricted_exterior_2d(op, g)
    else:
        raise CapabilityError(f"max_principle_check is not available for method {op.method!r}")
    gmax = float(np.max(np.abs(gs))) if gs.size else 0.0
    umax = float(np.max(np.abs(u))) if u.size else 0.0
    ratio = umax / gmax if gmax > 0 else (0.0 if umax == 0 else math.inf)
    h = op.grid.h
    return {"sup_u": umax, "sup_g": gmax, "ratio": ratio, "h": h, "passed": bool(ratio <= 1.0 + 1e-10),
            "solution": u}


def _spectral_harmonic_extension(op, g):
    """For the spectral operator the extension problem with lateral data g has a
    y-independent solution: the discrete harmonic extension of g."""
    grid = op.grid
    ext = ~op.mask
    gx = np.asarray(g(grid.nodes) if callable(g) else g, dtype=float)
    if gx.shape != (grid.nodes.shape[0],):
        raise ConfigurationError("boundary data must be a callable or a field on all grid nodes")
    gb = gx[ext]
    L = _laplacian_dirichlet(grid, op.mask)
    full = np.zeros(grid.nodes.shape[0])
    full[ext] = gb
    # rhs = -(coupling to boundary nodes) = (L_full applied to the boundary data) with sign flipped
    idx = np.nonzero(op.mask)[0]
    rhs = np.zeros(idx.size)
    if grid.n == 1:
        h = grid.spacing[0]
        for di in (-1, 1):
            nb = np.clip(idx + di, 0, grid.nodes.size - 1)
            rhs += np.where(~op.mask[nb], full[nb], 0.0) / h ** 2
    else:
        nb = _neighbors_2d(grid, idx)
        for k, hh in enumerate(grid.spacing[:1] * 2 + grid.spacing[1:] * 2):
            ok = nb[:, k] >= 0
            j = np.maximum(nb[:, k], 0)
            rhs += np.where(ok & ~op.mask[j], full[j], 0.0) / hh ** 2
    u = np.linalg.solve(L, rhs)
    # only boundary-adjacent exterior values matter for the extension
    return u, gb


def _restricted_exterior_1d(op, g, gl_points):
    grid = op.grid
    s = op.s
    c = kernel_constant(1, s)
    x = grid.nodes
    N = x.size - 1
    h = grid.spacing[0]
    ci = h ** (-2 * s) / (2 - 2 * s)
    if not callable(g):
        raise ConfigurationError("exterior data for the restricted check must be a callable g(x)")
    gx = np.asarray(g(x), dtype=float)
    idx = np.nonzero(op.mask)[0]
    ext = np.nonzero(~op.mask)[0]
    rhs = np.zeros(idx.size)
    m = np.abs(idx[:, None] - ext[None, :])
    wgt = h * (m * h) ** (-1.0 - 2 * s)
    wgt = np.where(m == 1, 0.5 * h * (1.0 * h) ** (-1.0 - 2 * s) + ci, wgt)
    at_end = (ext == 0) | (ext == N)
    JL = idx[:, None]
    JR = (N - idx)[:, None]
    J = np.where(ext[None, :] == 0, JL, JR)
    endw = np.where(J >= 2, 0.5 * h * (np.maximum(J, 1) * h) ** (-1.0 - 2 * s), ci)
    wgt = np.where(at_end[None, :], endw, wgt)
    rhs += wgt @ gx[ext]
    # beyond the box: (D^{-2s}/2s) int_0^1 g(x +- D v^{-1/(2s)}) dv
    t, wv = gauss_legendre(gl_points)
    v = 0.5 * (1 + t)
    wv = 0.5 * wv
    lo, hi = x[0], x[-1]
    for sgn, edge in ((1.0, hi), (-1.0, lo)):
        D = np.abs(edge - x[idx])
        z = x[idx][:, None] + sgn * D[:, None] * v[None, :] ** (-1.0 / (2 * s))
        rhs += D ** (-2 * s) / (2 * s) * (np.asarray(g(z.ravel()), dtype=float).reshape(z.shape) @ wv)
    u = solve_system(op, c * rhs)
    return u, np.concatenate([gx[ext], np.asarray(g(np.array([lo - 1e3, hi + 1e3])), dtype=float)])


def _restricted_exterior_2d(op, g, halo: int = 8):
    """Exterior lattice points within ``halo`` cells of the box carry g explicitly;
    the remaining far mass of the Epstein sum is assigned the mean of g on the
    outermost halo ring."""
    grid = op.grid
    s = op.s
    c = kernel_constant(2, s)
    h = grid.spacing[0]
    lo = grid.nodes.min(axis=0) - halo * h
    nx, ny = (np.array(grid.shape) + 2 * halo)
    X, Y = np.meshgrid(lo[0] + h * np.arange(nx), lo[1] + h * np.arange(ny), indexing="ij")
    allp = np.stack([X.ravel(), Y.ravel()], axis=1)
    pts = op.points
    inside = np.zeros(allp.shape[0], dtype=bool)
    key = lambda p: np.round((p - lo) / h).astype(int)
    ki = key(pts)
    inside[np.ravel_multi_index((ki[:, 0], ki[:, 1]), (nx, ny))] = True
    extp = allp[~inside]
    if not callable(g):
        raise ConfigurationError("exterior data for the restricted check must be a callable g(x)")
    gext = np.asarray(g(extp), dtype=float)
    kx = key(extp)
    ring = (kx[:, 0] == 0) | (kx[:, 0] == nx - 1) | (kx[:, 1] == 0) | (kx[:, 1] == ny - 1)
    gfar = float(np.mean(gext[ring]))
    tay = h ** (-2 * s) * _square_cell_integral(s) / 4.0
    total = h ** (-2 * s) * epstein_square(1 + s)
    rhs = np.zeros(pts.shape[0])
    for st in range(0, pts.shape[0], 256):
        P = pts[st:st + 256]
        d2 = ((P[:, None, :] - extp[None, :, :]) ** 2).sum(-1)
        W = h * h * d2 ** (-1.0 - s)
        near = np.abs(d2 - h * h) < 1e-9 * h * h
        rhs[st:st + 256] = W @ gext + (near * tay) @ gext
        # far mass: full lattice sum minus everything in the haloed box
        dall = ((P[:, None, :] - allp[None, :, :]) ** 2).sum(-1)
        with np.errstate(divide="ignore"):
            inbox = np.where(dall > 0, h * h * dall ** (-1.0 - s), 0.0).sum(axis=1)
        rhs[st:st + 256] += (total - inbox) * gfar
    u = solve_system(op, c * rhs)
    return u, gext
