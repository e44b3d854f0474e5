"""Green functions, regular parts and Robin functions.

Numeric tables come from a DiscreteOperator; closed forms cover the whole
space, the half-space and the ball of the restricted operator (through the
kernel K(r,t)), and the image form of the spectral half-space.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.integrate as si
import scipy.linalg as sl
import scipy.special as sp
from scipy.interpolate import RectBivariateSpline

from .constants import ConstantSet, kernel_constant
from .errors import CapabilityError, ConfigurationError, DomainError, NumericError, ResolutionError
from .operators import DiscreteOperator, DomainSpec, solve

# ---------------------------------------------------------------------------
# the kernel K(r, t)
# ---------------------------------------------------------------------------


def _I_quad(q, n, s, weight_power=0, tol=1e-13):
    """int_0^1 (1-b)^{(n-2)/2} b^{-s} b^w / (1+qb)^{1+w} db  (w = 0 or 1)."""
    g = (n - 2) / 2
    f = (lambda b: 1.0 / (1.0 + q * b)) if weight_power == 0 else (lambda b: b / (1.0 + q * b) ** 2)
    val, err = si.quad(f, 0.0, 1.0, weight="alg", wvar=(-s, g), epsabs=0.0, epsrel=tol, limit=200)
    return val


def _I_hyp(q, n, s):
    g = (n - 2) / 2
    return sp.beta(1 - s, g + 1) * sp.hyp2f1(1.0, 1.0 - s, 2.0 - s + g, -np.asarray(q, dtype=float))


def _dI_hyp(q, n, s):
    """d/dq of _I_hyp."""
    g = (n - 2) / 2
    c = sp.beta(1 - s, g + 1) * (1.0 - s) / (2.0 - s + g)
    return -c * sp.hyp2f1(2.0, 2.0 - s, 3.0 - s + g, -np.asarray(q, dtype=float))


def kernel_K(r, t, n, s, method: str = "quad"):
    """K(r,t) = r^{(n-2s)/2} t^{s-1} (r+t)^{-(n-2)/2} int_0^1 (1-b)^{(n-2)/2} / (b^s (1 + b r/t)) db.

    The substituted form is integrable for every n >= 1.  ``method='hyp'``
    evaluates the integral as a Gauss hypergeometric function (vectorized).
    """
    if np.any(np.asarray(r) < 0) or np.any(np.asarray(t) <= 0):
        raise ConfigurationError("kernel_K needs r >= 0 and t > 0")
    g = (n - 2) / 2
    if method == "hyp":
        r = np.asarray(r, dtype=float)
        t = np.asarray(t, dtype=float)
        return r ** ((n - 2 * s) / 2) * t ** (s - 1) * (r + t) ** (-g) * _I_hyp(r / t, n, s)
    r = float(r)
    t = float(t)
    return r ** ((n - 2 * s) / 2) * t ** (s - 1) * (r + t) ** (-g) * _I_quad(r / t, n, s)


def kernel_K_and_partials(r, t, n, s, method: str = "quad"):
    """(K, dK/dr, dK/dt) by differentiating the substituted form.

    K = r^k t^{s-1} (r+t)^{-g} I(r/t) with k = (n-2s)/2, g = (n-2)/2 and
    I'(q) = -int (1-b)^g b^{1-s} / (1+qb)^2 db.
    """
    k = (n - 2 * s) / 2
    g = (n - 2) / 2
    if method == "hyp":
        r = np.asarray(r, dtype=float)
        t = np.asarray(t, dtype=float)
        q = r / t
        I = _I_hyp(q, n, s)
        dI = _dI_hyp(q, n, s)
    else:
        r = float(r)
        t = float(t)
        q = r / t
        I = _I_quad(q, n, s)
        dI = -_I_quad(q, n, s, weight_power=1)
    pref = r ** k * t ** (s - 1) * (r + t) ** (-g)
    K = pref * I
    with np.errstate(divide="ignore", invalid="ignore"):
        Kr = K * (k / r - g / (r + t)) + pref * dI / t
    Kt = K * ((s - 1) / t - g / (r + t)) - pref * dI * r / t ** 2
    return K, Kr, Kt


def kernel_K_partials_closed(r, t, n, s):
    """The closed-form partials (n-2)t/(2(r+t)^{n/2}) J and -(n-2)r/(2(r+t)^{n/2}) J with
    J = int_0^{r/t} (r-tb)^{(n-4)/2} b^{-s} db.  J converges only for n >= 3."""
    if n < 3:
        raise CapabilityError("the closed-form K partials need n >= 3 (the b = r/t endpoint is not integrable)")
    J = r ** ((n - 4) / 2) * (r / t) ** (1 - s) * sp.beta(1 - s, (n - 2) / 2)
    base = (n - 2) / (2 * (r + t) ** (n / 2)) * J
    return base * t, -base * r


def K_theta(theta, n, s):
    """K along (r,t) = ((theta-1)^2, 4 theta) and its derivative in theta."""
    r = (theta - 1.0) ** 2
    t = 4.0 * theta
    K, Kr, Kt = kernel_K_and_partials(r, t, n, s)
    return K, Kr * 2.0 * (theta - 1.0) + Kt * 4.0


def K_theta_closed_derivative(theta, n, s):
    """2(n-2)(theta-1)/(theta+1)^{n-1} int_0^{(theta-1)^2/(4theta)} [(theta-1)^2 - 4 theta b]^{(n-4)/2} b^{-s} db."""
    r = (theta - 1.0) ** 2
    t = 4.0 * theta
    if n < 3:
        raise CapabilityError("closed-form K'(theta) needs n >= 3")
    J = r ** ((n - 4) / 2) * (r / t) ** (1 - s) * sp.beta(1 - s, (n - 2) / 2)
    return 2 * (n - 2) * (theta - 1) / (theta + 1) ** (n - 1) * J


def d_half_from_limit(n, s, r: float = 1.0, tol: float = 1e-12):
    """d such that d K(r, t) -> 1 as t -> 0 at fixed r.

    K(r,t) -> int_0^inf u^{-s}/(1+u) du (u = b r/t), independent of r; the value
    at r = 4 is returned as a cross-check (K is homogeneous of degree 0).
    """
    from .constants import half_space_limit_integral

    lim, _ = half_space_limit_integral(s, tol)
    d1 = 1.0 / lim
    # cross-check through K itself at a tiny t, corrected by its leading t^s term
    def ext(rr):
        ts = rr * np.geomspace(1e-4, 1e-8, 7)
        ks = np.array([kernel_K(rr, tt, n, s) for tt in ts])
        tau = ts / rr
        basis = np.stack([np.ones_like(tau), tau ** s, tau, tau ** (1 + s)], axis=1)
        coef = np.linalg.lstsq(basis, ks, rcond=None)[0]
        return 1.0 / coef[0]

    return d1, ext(r), ext(4.0 * r)


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def _norm(x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(np.sqrt(np.sum(x * x)))


def gamma_fundamental(constants: ConstantSet, x, xi):
    """a |x - xi|^{2s-n}."""
    d = _norm(np.asarray(x, dtype=float) - np.asarray(xi, dtype=float))
    if d == 0.0:
        raise DomainError("gamma_fundamental is singular at x = xi")
    return constants.a * d ** (2 * constants.s - constants.n)


def _H_form(constants, r, t):
    """a d t^{s-1} (r+t)^{-(n-2)/2} I(r/t) and its (r, t) partials."""
    n, s = constants.n, constants.s
    g = (n - 2) / 2
    q = r / t
    I = _I_hyp(q, n, s)
    dI = _dI_hyp(q, n, s)
    ad = constants.a * constants.d_half
    F = ad * t ** (s - 1) * (r + t) ** (-g) * I
    Fr = -g / (r + t) * F + ad * t ** (s - 1) * (r + t) ** (-g) * dI / t
    Ft = ((s - 1) / t - g / (r + t)) * F - ad * t ** (s - 1) * (r + t) ** (-g) * dI * r / t ** 2
    return F, Fr, Ft


def half_space_green(constants: ConstantSet, xi1, xi2):
    """G_+ = a r^{-(n-2s)/2} [1 - d K(r,t)], r = |xi1 - xi2|^2, t = 4 xi1^n xi2^n."""
    x1 = np.atleast_1d(np.asarray(xi1, dtype=float))
    x2 = np.atleast_1d(np.asarray(xi2, dtype=float))
    if x1[-1] <= 0 or x2[-1] <= 0:
        raise DomainError("half_space_green needs positive heights")
    r = float(np.sum((x1 - x2) ** 2))
    if r == 0:
        raise DomainError("half_space_green is singular at xi1 = xi2")
    t = 4.0 * x1[-1] * x2[-1]
    n, s = constants.n, constants.s
    return constants.a * r ** (-(n - 2 * s) / 2) * (1.0 - constants.d_half * kernel_K(r, t, n, s))


def half_space_regular(constants: ConstantSet, xi1, xi2):
    x1 = np.atleast_1d(np.asarray(xi1, dtype=float))
    x2 = np.atleast_1d(np.asarray(xi2, dtype=float))
    r = float(np.sum((x1 - x2) ** 2))
    t = 4.0 * x1[-1] * x2[-1]
    return float(_H_form(constants, r, t)[0])


def half_space_robin(constants: ConstantSet, height):
    """R_+ = a d iota / (2^{n-2s} height^{n-2s})."""
    if not np.all(np.asarray(height) > 0):
        raise DomainError("half_space_robin needs a positive height")
    n, s = constants.n, constants.s
    return constants.a * constants.d_half * constants.iota / (2.0 ** (n - 2 * s) * np.asarray(height) ** (n - 2 * s))


def spectral_half_space_green(constants: ConstantSet, Z, Y):
    """Method of images: Gamma(Z - Y) - Gamma(Z - Ybar)."""
    Z = np.atleast_1d(np.asarray(Z, dtype=float))
    Y = np.atleast_1d(np.asarray(Y, dtype=float))
    if Y[-1] <= 0 or Z[-1] < 0:
        raise DomainError("points must lie in the closed upper half-space (Y strictly inside)")
    Yb = Y.copy()
    Yb[-1] = -Yb[-1]
    if np.array_equal(Z, Y):
        raise DomainError("spectral_half_space_green is singular at Z = Y")
    return gamma_fundamental(constants, Z, Y) - gamma_fundamental(constants, Z, Yb)


def ball_green(constants: ConstantSet, xi1, xi2, center=None, radius: float = 1.0):
    """G_B for the restricted operator on a ball (t = (1-|xi1|^2)(1-|xi2|^2) after scaling)."""
    n, s = constants.n, constants.s
    c = np.zeros(n) if center is None else np.atleast_1d(np.asarray(center, dtype=float))
    y1 = (np.atleast_1d(np.asarray(xi1, dtype=float)) - c) / radius
    y2 = (np.atleast_1d(np.asarray(xi2, dtype=float)) - c) / radius
    r = float(np.sum((y1 - y2) ** 2))
    if r == 0:
        raise DomainError("ball_green is singular at xi1 = xi2")
    t = (1 - y1 @ y1) * (1 - y2 @ y2)
    if t <= 0:
        raise DomainError("ball_green needs interior points")
    return radius ** (2 * s - n) * constants.a * r ** (-(n - 2 * s) / 2) * (1 - constants.d_half * kernel_K(r, t, n, s))


def ball_robin_closed(constants: ConstantSet, xi, center=None, radius: float = 1.0):
    """R_B(xi) = a d iota (1 - |y|^2)^{2s-n} rho^{2s-n}, y = (xi - c)/rho."""
    n, s = constants.n, constants.s
    c = np.zeros(n) if center is None else np.atleast_1d(np.asarray(center, dtype=float))
    y = (np.atleast_1d(np.asarray(xi, dtype=float)) - c) / radius
    return radius ** (2 * s - n) * constants.a * constants.d_half * constants.iota * (1 - y @ y) ** (2 * s - n)


def kelvin_point(xi):
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    r2 = float(xi @ xi)
    if r2 == 0:
        raise DomainError("the Kelvin transform is undefined at the origin")
    return xi / r2


def kelvin_transform(u, xi, n: int, s: float):
    """u*(xi) = |xi|^{2s-n} u(xi / |xi|^2)."""
    xs = kelvin_point(xi)
    nrm = _norm(xi)
    return nrm ** (2 * s - n) * u(xs if xs.size > 1 else float(xs[0]))


def kelvin_robin_lower_bound(constants: ConstantSet, xi):
    """Lower bound a d iota (|xi|^2 - 1)^{2s-n} for the Robin function of a domain
    lying outside the unit ball (restricted operator, Kelvin image of G_B)."""
    r2 = float(np.sum(np.atleast_1d(xi) ** 2))
    if r2 <= 1:
        raise DomainError("the Kelvin lower bound needs |xi| > 1")
    n, s = constants.n, constants.s
    return constants.a * constants.d_half * constants.iota * (r2 - 1.0) ** (2 * s - n)


# ---------------------------------------------------------------------------
# lattice fundamental solutions (1-D)
# ---------------------------------------------------------------------------


def _lattice_symbol(s, theta):
    """Symbol of the 1-D restricted stencil on Z (h = 1), without the c_{1,s} factor."""
    ks = np.arange(2, 80, 2)
    zc = sp.zeta(1 + 2 * s - ks) * (-1.0) ** (ks // 2) / sp.factorial(ks)
    th = np.asarray(theta, dtype=float)
    S = -2 * sp.gamma(-2 * s) * math.cos(math.pi * s) * th ** (2 * s)
    S = S - 2 * sum(z * th ** k for z, k in zip(zc, ks))
    return (2 - 2 * np.cos(th)) * (1 / (2 - 2 * s) - 0.5) + S


def _gamma_j(j, s, symbol):
    c = kernel_constant(1, s)
    a = sp.gamma(0.5 - s) / (4 ** s * math.sqrt(math.pi) * sp.gamma(s))
    if symbol == "spectral":
        inv = lambda t: t ** (-2 * s)
    else:
        inv = lambda t: 1.0 / (c * _lattice_symbol(s, t))
    if j == 0:
        return si.quad(inv, 0, math.pi, limit=400, epsrel=1e-11)[0] / math.pi
    diff = lambda t: (inv(t) - t ** (-2 * s)) if t > 0 else 0.0
    I1 = 0.0 if symbol == "spectral" else si.quad(diff, 0, math.pi, weight="cos", wvar=j, limit=400)[0]
    I2 = si.quad(lambda t: t ** (-2 * s), math.pi, np.inf, weight="cos", wvar=j, limlst=200)[0]
    return a * j ** (2 * s - 1) + (I1 - I2) / math.pi


def lattice_gammas(s: float, symbol: str = "restricted", jmax: int = 200):
    """gamma_j, j = 0..jmax, of the infinite-lattice fundamental solution (h = 1).

    Cached in memory and, when FRACBUBBLE_CACHE_DIR is set, on disk.
    """
    return _lattice_gammas(float(s), str(symbol), int(jmax))


@lru_cache(maxsize=16)
def _lattice_gammas(s, symbol, jmax):
    cdir = os.environ.get("FRACBUBBLE_CACHE_DIR")
    path = None
    if cdir:
        key = hashlib.sha256(json.dumps([float(s), symbol, jmax]).encode()).hexdigest()[:24]
        path = os.path.join(cdir, f"lattice_gamma_{key}.npy")
        if os.path.exists(path):
            return np.load(path)
    g = np.array([_gamma_j(j, s, symbol) for j in range(jmax + 1)])
    if path:
        os.makedirs(cdir, exist_ok=True)
        np.save(path, g)
    return g


def lattice_fundamental(s: float, h: float, m, symbol: str = "restricted"):
    """Gamma_h(m h) = h^{2s-1} gamma_m with the continuum a m^{2s-1} beyond the table."""
    g = lattice_gammas(float(s), symbol)
    m = np.abs(np.asarray(m, dtype=int))
    a = sp.gamma(0.5 - s) / (4 ** s * math.sqrt(math.pi) * sp.gamma(s))
    far = a * np.maximum(m, 1).astype(float) ** (2 * s - 1)
    return h ** (2 * s - 1) * np.where(m < g.size, g[np.minimum(m, g.size - 1)], far)


# ---------------------------------------------------------------------------
# numeric Green functions
# ---------------------------------------------------------------------------


def mollified_delta(op: DiscreteOperator, xi):
    """Grid stand-in for delta_xi: hat interpolation weights of mass 1, width 2h."""
    pts = op.points
    if op.domain.n == 1:
        xi = float(np.atleast_1d(xi)[0])
        if op.method == "fem":
            # Galerkin load of delta_xi is the hat value; return a nodal density
            x = op.grid.nodes
            k = np.searchsorted(x, xi) - 1
            lam = (xi - x[k]) / (x[k + 1] - x[k])
            load = np.zeros(x.size)
            load[k] += 1 - lam
            load[k + 1] += lam
            return load[op.mask]
        h = op.grid.spacing[0]
        w = np.maximum(0.0, 1.0 - np.abs(pts - xi) / h) / h
        return w
    hx, hy = op.grid.spacing
    xi = np.asarray(xi, dtype=float)
    w = np.maximum(0.0, 1 - np.abs(pts[:, 0] - xi[0]) / hx) * np.maximum(0.0, 1 - np.abs(pts[:, 1] - xi[1]) / hy)
    return w / (hx * hy)


def green_numeric(op: DiscreteOperator, xi):
    """Solve A_s G = delta_xi (mollified); raises ResolutionError when dist(xi, boundary) < 4h."""
    if op.kind == "whole-space":
        raise CapabilityError("green_numeric needs a bounded-domain operator")
    d = float(op.domain.dist_boundary(np.atleast_1d(xi) if op.domain.n > 1 else float(np.atleast_1d(xi)[0])))
    h = op.grid.h if op.method != "fem" else float(np.max(np.diff(op.grid.nodes)))
    if d < 4 * h and op.method != "fem":
        raise ResolutionError(f"xi at distance {d:.3g} from the boundary is closer than 4h = {4 * h:.3g}")
    f = mollified_delta(op, xi)
    if op.method == "fem":
        from .operators import solve_system

        return solve_system(op, f)
    return solve(op, f)


def _gamma_field(constants, op, xi):
    pts = op.points
    n, s = constants.n, constants.s
    if n == 1:
        d = np.abs(pts - float(np.atleast_1d(xi)[0]))
    else:
        d = np.linalg.norm(pts - np.asarray(xi, dtype=float), axis=1)
    with np.errstate(divide="ignore"):
        return constants.a * d ** (2 * s - n), d


def _lattice_symbol_name(op):
    return "spectral" if op.kind == "spectral" else "restricted"


def regular_part(op: DiscreteOperator, xi, constants: ConstantSet, lattice: bool | None = None):
    """H(., xi) = Gamma(., xi) - G(., xi).

    On 1-D lattices with xi at a node the lattice fundamental solution of the
    same stencil replaces Gamma, so the subtraction is exact at the pole;
    otherwise the continuum Gamma is used and H(xi, xi) is left undefined (nan).
    """
    G = green_numeric(op, xi)
    pts = op.points
    use_lattice = (op.domain.n == 1 and op.method in ("fd", "dst", "eig")) if lattice is None else lattice
    if use_lattice:
        h = op.grid.spacing[0]
        x0 = float(np.atleast_1d(xi)[0])
        j = np.rint((pts - x0) / h)
        if np.max(np.abs(pts - x0 - j * h)) > 1e-9 * h or not np.any(j == 0):
            use_lattice = False
        else:
            return lattice_fundamental(op.s, h, j.astype(int), _lattice_symbol_name(op)) - G
    Gam, d = _gamma_field(constants, op, xi)
    H = Gam - G
    H[d == 0] = np.nan
    return H


def robin(op: DiscreteOperator, xi, constants: ConstantSet, radii=(2, 4, 6)):
    """R(xi) = H(xi, xi).

    1-D lattices: the lattice-consistent regular part at the node.  Otherwise
    H is averaged on rings at radii 2h, 4h, 6h and extrapolated to 0 by a
    quadratic fit.
    """
    H = regular_part(op, xi, constants)
    pts = op.points
    if op.domain.n == 1:
        x0 = float(np.atleast_1d(xi)[0])
        k = int(np.argmin(np.abs(pts - x0)))
        if np.isfinite(H[k]) and abs(pts[k] - x0) < 1e-9 * op.grid.h:
            return float(H[k])
        d = np.abs(pts - x0)
    else:
        d = np.linalg.norm(pts - np.asarray(xi, dtype=float), axis=1)
    h = op.grid.h
    rho, val = [], []
    for m in radii:
        sel = np.abs(d - m * h) <= 0.5 * h
        if not np.any(sel):
            raise ResolutionError(f"no nodes on the ring of radius {m}h")
        rho.append(float(np.mean(d[sel])))
        val.append(float(np.mean(H[sel])))
    coef = np.polyfit(rho, val, len(rho) - 1)
    return float(coef[-1])


def robin_profile(op: DiscreteOperator, constants: ConstantSet, xis):
    return np.array([robin(op, x, constants) for x in xis])


def fit_blowup_slope(d, R):
    """Least-squares slope of log R against log d."""
    return float(np.polyfit(np.log(np.asarray(d)), np.log(np.asarray(R)), 1)[0])


def spectral_green_series(domain: DomainSpec, s: float, x, xi, K: int = 20000):
    """Eigen-series sum_k lambda_k^{-s} phi_k(x) phi_k(xi) on an interval, with the
    remainder beyond K approximated by its integral."""
    if domain.kind not in ("interval", "ball") or domain.n != 1 or domain.holes:
        raise CapabilityError("the eigen-series oracle is implemented for plain intervals")
    lo, hi = domain.bbox()
    lo, ell = float(lo[0]), float(hi[0] - lo[0])
    k = np.arange(1, K + 1)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ph_x = np.sqrt(2 / ell) * np.sin(np.outer(x - lo, k) * math.pi / ell)
    ph_xi = np.sqrt(2 / ell) * np.sin(k * math.pi * (float(xi) - lo) / ell)
    return ph_x @ ((k * math.pi / ell) ** (-2 * s) * ph_xi)


# ---------------------------------------------------------------------------
# Green tables used by the reduced energy
# ---------------------------------------------------------------------------


class GreenTable:
    """Interface: H(x1, x2) with gradients, G = Gamma - H, R(x) = H(x, x).

    Points are 1-D floats (n = 1) or length-n arrays.  ``H_and_grad`` returns
    (H, dH/dx1, dH/dx2) with gradients as arrays of shape (n,).
    """

    n: int = 1
    s: float = 0.3
    kind: str = "restricted"
    domain: DomainSpec | None = None
    constants: ConstantSet | None = None

    def H_and_grad(self, x1, x2):  # pragma: no cover - interface
        raise NotImplementedError

    def gamma_and_grad(self, x1, x2):
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        d = x1 - x2
        r = float(np.sqrt(d @ d))
        if r == 0:
            raise DomainError("G is singular at coincident points")
        a = self.constants.a
        e = 2 * self.s - self.n
        val = a * r ** e
        g1 = a * e * r ** (e - 2) * d
        return val, g1, -g1

    def H(self, x1, x2):
        return float(self.H_and_grad(x1, x2)[0])

    def G_and_grad(self, x1, x2):
        gv, g1, g2 = self.gamma_and_grad(x1, x2)
        hv, h1, h2 = self.H_and_grad(x1, x2)
        return gv - hv, g1 - h1, g2 - h2

    def G(self, x1, x2):
        return float(self.G_and_grad(x1, x2)[0])

    def R(self, x):
        return self.H(x, x)

    def R_and_grad(self, x):
        v, g1, g2 = self.H_and_grad(x, x)
        return v, g1 + g2

    def contains(self, x, margin=0.0):
        if self.domain is None:
            return True
        xx = np.atleast_1d(np.asarray(x, dtype=float))
        return bool(self.domain.dist_boundary(xx if self.n > 1 else float(xx[0])) > margin)

    def dist_boundary(self, x):
        xx = np.atleast_1d(np.asarray(x, dtype=float))
        return float(self.domain.dist_boundary(xx if self.n > 1 else float(xx[0])))

    def scale(self):
        return self.domain.diam() if self.domain is not None else 1.0

    def describe(self) -> dict:
        return {"table": type(self).__name__, "n": self.n, "s": self.s, "kind": self.kind,
                "domain": None if self.domain is None else self.domain.to_dict()}


class BallTable(GreenTable):
    """Closed-form restricted Green function of a ball."""

    def __init__(self, constants: ConstantSet, center=None, radius: float = 1.0):
        self.constants = constants
        self.n, self.s = constants.n, constants.s
        self.center = np.zeros(self.n) if center is None else np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)
        self.domain = DomainSpec.ball(self.n, self.center, self.radius) if self.n <= 2 else None

    def H_and_grad(self, x1, x2):
        rho = self.radius
        y1 = (np.atleast_1d(np.asarray(x1, dtype=float)) - self.center) / rho
        y2 = (np.atleast_1d(np.asarray(x2, dtype=float)) - self.center) / rho
        q1 = 1 - y1 @ y1
        q2 = 1 - y2 @ y2
        if q1 <= 0 or q2 <= 0:
            raise DomainError("BallTable points must lie inside the ball")
        r = float(np.sum((y1 - y2) ** 2))
        t = q1 * q2
        F, Fr, Ft = _H_form(self.constants, r, t)
        sc = rho ** (2 * self.s - self.n)
        g1 = (Fr * 2 * (y1 - y2) + Ft * (-2 * y1) * q2) * sc / rho
        g2 = (Fr * 2 * (y2 - y1) + Ft * (-2 * y2) * q1) * sc / rho
        return float(F) * sc, g1, g2

    def contains(self, x, margin=0.0):
        y = np.atleast_1d(np.asarray(x, dtype=float)) - self.center
        return bool(self.radius - math.sqrt(y @ y) > margin)

    def dist_boundary(self, x):
        y = np.atleast_1d(np.asarray(x, dtype=float)) - self.center
        return self.radius - math.sqrt(y @ y)

    def scale(self):
        return 2 * self.radius


class HalfSpaceTable(GreenTable):
    """Closed-form restricted Green function of the half-space {x_n > 0}."""

    def __init__(self, constants: ConstantSet):
        self.constants = constants
        self.n, self.s = constants.n, constants.s
        self.domain = None

    def H_and_grad(self, x1, x2):
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        if x1[-1] <= 0 or x2[-1] <= 0:
            raise DomainError("HalfSpaceTable points need positive heights")
        r = float(np.sum((x1 - x2) ** 2))
        t = 4 * x1[-1] * x2[-1]
        F, Fr, Ft = _H_form(self.constants, r, t)
        e = np.zeros(self.n)
        e[-1] = 1.0
        g1 = Fr * 2 * (x1 - x2) + Ft * 4 * x2[-1] * e
        g2 = Fr * 2 * (x2 - x1) + Ft * 4 * x1[-1] * e
        return float(F), g1, g2

    def contains(self, x, margin=0.0):
        return bool(np.atleast_1d(x)[-1] > margin)

    def dist_boundary(self, x):
        return float(np.atleast_1d(x)[-1])

    def scale(self):
        return 1.0


class SpectralHalfSpaceTable(GreenTable):
    """Image form H(x1,x2) = Gamma(x1 - x2bar) for the spectral half-space."""

    kind = "spectral"

    def __init__(self, constants: ConstantSet):
        self.constants = constants
        self.n, self.s = constants.n, constants.s
        self.domain = None

    def H_and_grad(self, x1, x2):
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        x2b = np.atleast_1d(np.asarray(x2, dtype=float)).copy()
        if x1[-1] <= 0 or x2b[-1] <= 0:
            raise DomainError("points need positive heights")
        x2b[-1] = -x2b[-1]
        v, g1, g2b = self.gamma_and_grad(x1, x2b)
        g2 = g2b.copy()
        g2[-1] = -g2[-1]
        return v, g1, g2

    def contains(self, x, margin=0.0):
        return bool(np.atleast_1d(x)[-1] > margin)

    def dist_boundary(self, x):
        return float(np.atleast_1d(x)[-1])

    def scale(self):
        return 1.0


class FunctionTable(GreenTable):
    """Manufactured table from user callables (tests and toy landscapes).

    ``H(x1, x2)`` and ``G(x1, x2)`` may be constants.  Gradients are taken by
    central differences unless ``H_grad`` / ``G_grad`` are supplied.
    """

    def __init__(self, H, G=None, n: int = 1, s: float = 0.3, domain: DomainSpec | None = None,
                 H_grad=None, G_grad=None, fd_step: float = 1e-6):
        self._H = (lambda x1, x2, c=float(H): c) if np.isscalar(H) else H
        self._G = None if G is None else ((lambda x1, x2, c=float(G): c) if np.isscalar(G) else G)
        self._Hg = H_grad
        self._Gg = G_grad
        self._const = np.isscalar(H) and (G is None or np.isscalar(G))
        self.n, self.s, self.domain = n, s, domain
        self.fd = fd_step
        self.constants = None

    def _grad(self, f, x1, x2):
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        g1 = np.zeros(self.n)
        g2 = np.zeros(self.n)
        if self._const:
            return g1, g2
        e = self.fd
        for k in range(self.n):
            d = np.zeros(self.n)
            d[k] = e
            g1[k] = (f(x1 + d, x2) - f(x1 - d, x2)) / (2 * e)
            g2[k] = (f(x1, x2 + d) - f(x1, x2 - d)) / (2 * e)
        return g1, g2

    def _fmt(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return float(x[0]) if self.n == 1 else x

    def H_and_grad(self, x1, x2):
        f = lambda a, b: float(self._H(self._fmt(a), self._fmt(b)))
        g1, g2 = (self._Hg(x1, x2) if self._Hg else self._grad(f, x1, x2))
        return f(x1, x2), np.atleast_1d(g1), np.atleast_1d(g2)

    def G_and_grad(self, x1, x2):
        if self._G is None:
            return super().G_and_grad(x1, x2)
        f = lambda a, b: float(self._G(self._fmt(a), self._fmt(b)))
        g1, g2 = (self._Gg(x1, x2) if self._Gg else self._grad(f, x1, x2))
        return f(x1, x2), np.atleast_1d(g1), np.atleast_1d(g2)

    def contains(self, x, margin=0.0):
        return True if self.domain is None else super().contains(x, margin)

    def dist_boundary(self, x):
        return math.inf if self.domain is None else super().dist_boundary(x)

    def scale(self):
        return 1.0 if self.domain is None else self.domain.diam()


@dataclass
class NumericTable(GreenTable):
    """Green table sampled from a 1-D DiscreteOperator.

    G on all unknown nodes comes from one dense inverse; H = Gamma_h - G with the
    lattice-consistent Gamma_h, so R = diag(H) directly.  Off-grid values use
    bicubic splines of H on each pair of connected components (subsampled to at
    most ``max_nodes`` per axis); G = Gamma - H.
    """

    op: DiscreteOperator
    constants: ConstantSet
    max_nodes: int = 400
    xs: np.ndarray = field(init=False)
    Gm: np.ndarray = field(init=False, repr=False)
    Hm: np.ndarray = field(init=False, repr=False)
    Rv: np.ndarray = field(init=False)

    def __post_init__(self):
        op = self.op
        if op.domain.n != 1 or op.method not in ("fd", "dst", "eig"):
            raise CapabilityError("NumericTable supports 1-D lattice operators")
        self.n, self.s, self.kind, self.domain = 1, op.s, op.kind, op.domain
        h = op.grid.spacing[0]
        xs = op.points
        if op.method == "fd":
            kind, fac = ("cho", sl.cho_factor(op.matrix))
            Ginv = sl.cho_solve(fac, np.eye(op.size))
        else:
            from .operators import dense_matrix

            Ginv = np.linalg.inv(dense_matrix(op))
        Gm = 0.5 * (Ginv + Ginv.T) / h
        idx = np.rint((xs - xs[0]) / h).astype(int)
        Gam = lattice_fundamental(op.s, h, idx[:, None] - idx[None, :], _lattice_symbol_name(op))
        self.xs, self.Gm, self.Hm = xs, Gm, Gam - Gm
        self.Rv = np.diag(self.Hm).copy()
        # connected components of the unknown set
        breaks = np.nonzero(np.diff(idx) > 1)[0]
        starts = np.r_[0, breaks + 1]
        stops = np.r_[breaks + 1, idx.size]
        self.components = [(a, b) for a, b in zip(starts, stops)]
        self._splines = {}
        for ci, (a1, b1) in enumerate(self.components):
            for cj, (a2, b2) in enumerate(self.components):
                s1 = self._sub(a1, b1)
                s2 = self._sub(a2, b2)
                self._splines[ci, cj] = RectBivariateSpline(xs[s1], xs[s2], self.Hm[np.ix_(s1, s2)], kx=3, ky=3)

    def _sub(self, a, b):
        m = b - a
        step = max(1, int(math.ceil(m / self.max_nodes)))
        sel = np.arange(a, b, step)
        if sel[-1] != b - 1:
            sel = np.r_[sel, b - 1]
        return sel

    def _comp(self, x):
        for ci, (a, b) in enumerate(self.components):
            if self.xs[a] <= x <= self.xs[b - 1]:
                return ci
        raise DomainError(f"point {x} lies outside the sampled nodes (too close to the boundary)")

    def H_and_grad(self, x1, x2):
        a = float(np.atleast_1d(x1)[0])
        b = float(np.atleast_1d(x2)[0])
        sp_ = self._splines[self._comp(a), self._comp(b)]
        v = float(sp_.ev(a, b))
        return v, np.array([float(sp_.ev(a, b, dx=1))]), np.array([float(sp_.ev(a, b, dy=1))])

    def R_nodes(self):
        return self.xs.copy(), self.Rv.copy()

    def export(self, out_dir: str, sample_xi=None, stem: str = "green"):
        """Write ``stem.csv`` (xi, x, G, H) and ``stem.json`` (header)."""
        os.makedirs(out_dir, exist_ok=True)
        xs = self.xs
        cols = range(xs.size) if sample_xi is None else [int(np.argmin(np.abs(xs - v))) for v in sample_xi]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["xi", "x", "G", "H"])
        for j in cols:
            for i in range(xs.size):
                w.writerow([f"{xs[j]:.17g}", f"{xs[i]:.17g}", f"{self.Gm[i, j]:.17g}", f"{self.Hm[i, j]:.17g}"])
        with open(os.path.join(out_dir, f"{stem}.csv"), "w") as fh:
            fh.write(buf.getvalue())
        header = {"domain": self.domain.to_dict(), "s": self.s, "h": self.op.grid.spacing[0], "kind": self.kind,
                  "method": self.op.method, "constants": self.constants.values()}
        with open(os.path.join(out_dir, f"{stem}.json"), "w") as fh:
            json.dump(header, fh, indent=2, sort_keys=True)
        return header
