"""Reduced energy Psi(xi, Lambda), interaction function phi, critical Lambda(xi),
truncation, critical-point search, stability and the min-max estimate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import SUBCRITICAL, SUPERCRITICAL, ConstantSet
from .errors import ConfigurationError, DomainError
from .green import GreenTable, K_theta

_SIGN = {SUBCRITICAL: -1.0, SUPERCRITICAL: 1.0}


def _sign(sign):
    if sign not in _SIGN:
        raise ConfigurationError(f"sign must be {SUBCRITICAL!r} or {SUPERCRITICAL!r}")
    return _SIGN[sign]


@dataclass
class PsiPoint:
    xi: np.ndarray          # (m, n)
    Lambda: np.ndarray      # (m,)
    value: float
    gradient: np.ndarray    # (m*n + m,): xi block first, then Lambda
    sign: str = SUBCRITICAL

    @property
    def grad_xi(self):
        return self.gradient[: self.xi.size].reshape(self.xi.shape)

    @property
    def grad_Lambda(self):
        return self.gradient[self.xi.size:]


@dataclass(frozen=True)
class TruncationParams:
    M: float
    rho: float
    rho0: float = 0.0
    sigma0: float = 0.1

    def __post_init__(self):
        for k in ("M", "rho", "sigma0"):
            if not getattr(self, k) > 0:
                raise ConfigurationError(f"truncation parameter {k} must be positive")
        if self.rho0 < 0:
            raise ConfigurationError("rho0 must be nonnegative")


@dataclass
class CriticalPoint:
    xi: np.ndarray
    Lambda: np.ndarray
    value: float
    grad_norm: float
    signature: tuple        # (#positive, #negative, #zero)
    hessian_eigs: np.ndarray
    converged: bool
    seed_index: int = -1
    stable: bool | None = None

    def to_record(self):
        return {"xi": self.xi.tolist(), "Lambda": self.Lambda.tolist(), "value": self.value,
                "grad_norm": self.grad_norm, "signature": list(self.signature),
                "hessian_eigs": self.hessian_eigs.tolist(), "converged": self.converged, "stable": self.stable}


def _xi_array(table, xi):
    a = np.asarray(xi, dtype=float)
    if table.n == 1:
        return a.reshape(-1, 1)
    return a.reshape(-1, table.n)


def default_delta(table: GreenTable) -> float:
    return 0.1 * table.scale()


def check_admissible(table: GreenTable, xi, Lambda, delta: float | None):
    """Separation, boundary distance and Lambda window; raises DomainError naming the bound."""
    if delta is None:
        return
    X = _xi_array(table, xi)
    L = np.asarray(Lambda, dtype=float)
    for i in range(X.shape[0]):
        d = table.dist_boundary(X[i])
        if not d >= delta:
            raise DomainError(f"dist(xi_{i + 1}, boundary) = {d:.4g} < delta = {delta:.4g}")
        for j in range(i + 1, X.shape[0]):
            sep = float(np.linalg.norm(X[i] - X[j]))
            if not sep >= delta:
                raise DomainError(f"|xi_{i + 1} - xi_{j + 1}| = {sep:.4g} < delta = {delta:.4g}")
    for i, lam in enumerate(L):
        if not (delta < lam < 1.0 / delta):
            raise DomainError(f"Lambda_{i + 1} = {lam:.4g} outside (delta, 1/delta) = ({delta:.4g}, {1 / delta:.4g})")


def _psi_core(table, X, L, sgn, M=None):
    m, n = X.shape
    val = 0.0
    gx = np.zeros((m, n))
    gl = np.zeros(m)
    for i in range(m):
        R, dR = table.R_and_grad(X[i] if n > 1 else X[i, 0])
        val += 0.5 * R * L[i] ** 2 + sgn * math.log(L[i])
        gx[i] += 0.5 * dR * L[i] ** 2
        gl[i] += R * L[i] + sgn / L[i]
    for i in range(m):
        for j in range(i + 1, m):
            a = X[i] if n > 1 else X[i, 0]
            b = X[j] if n > 1 else X[j, 0]
            if M is not None and np.array_equal(np.atleast_1d(a), np.atleast_1d(b)):
                G, d1, d2 = M, np.zeros(n), np.zeros(n)
            else:
                G, d1, d2 = table.G_and_grad(a, b)
                if M is not None and G > M:
                    G, d1, d2 = M, np.zeros(n), np.zeros(n)
            val -= G * L[i] * L[j]
            gx[i] -= d1 * L[i] * L[j]
            gx[j] -= d2 * L[i] * L[j]
            gl[i] -= G * L[j]
            gl[j] -= G * L[i]
    return val, np.concatenate([gx.ravel(), gl])


def psi_eval(table: GreenTable, xi, Lambda, sign: str = SUBCRITICAL, delta: float | None = None) -> PsiPoint:
    """Psi = 1/2 {sum H(xi_i,xi_i) Lambda_i^2 - 2 sum_{i<j} G Lambda_i Lambda_j} +- log(prod Lambda).

    ``delta`` activates the admissibility check (None skips it).
    """
    sgn = _sign(sign)
    X = _xi_array(table, xi)
    L = np.atleast_1d(np.asarray(Lambda, dtype=float))
    if L.shape != (X.shape[0],):
        raise ConfigurationError("xi and Lambda must describe the same number of bubbles")
    if np.any(L <= 0):
        raise DomainError("Lambda must be positive")
    check_admissible(table, X, L, delta)
    val, g = _psi_core(table, X, L, sgn)
    return PsiPoint(X, L, float(val), g, sign)


def psi_truncated(table: GreenTable, tp: TruncationParams, xi, Lambda, sign: str = SUPERCRITICAL):
    """Psi with G replaced by G_M = min(G, M) in the interaction; returns (value, gradient)."""
    sgn = _sign(sign)
    X = _xi_array(table, xi)
    L = np.atleast_1d(np.asarray(Lambda, dtype=float))
    if np.any(L <= 0):
        raise DomainError("Lambda must be positive")
    val, g = _psi_core(table, X, L, sgn, M=tp.M)
    return float(val), g


def varphi(table: GreenTable, xi1, xi2, M: float | None = None):
    """phi = H(xi1,xi1)^{1/2} H(xi2,xi2)^{1/2} - G(xi1,xi2) (G_M when M is given)."""
    a = np.atleast_1d(np.asarray(xi1, dtype=float))
    b = np.atleast_1d(np.asarray(xi2, dtype=float))
    if np.array_equal(a, b):
        if M is None:
            raise DomainError("varphi is undefined at coincident points")
        G = M
    else:
        G = table.G(xi1, xi2)
        if M is not None:
            G = min(G, M)
    return math.sqrt(table.R(xi1) * table.R(xi2)) - G


def varphi_and_grad(table: GreenTable, xi1, xi2):
    R1, dR1 = table.R_and_grad(xi1)
    R2, dR2 = table.R_and_grad(xi2)
    G, g1, g2 = table.G_and_grad(xi1, xi2)
    r1, r2 = math.sqrt(R1), math.sqrt(R2)
    return r1 * r2 - G, 0.5 * dR1 * r2 / r1 - g1, 0.5 * dR2 * r1 / r2 - g2


def lambda_critical(table: GreenTable, xi1, xi2, M: float | None = None):
    """Lambda(xi) making grad_Lambda Psi = 0 (supercritical, m = 2).

    Returns (Lambda1, Lambda2, Q) with Q = H1 L1^2 + H2 L2^2 - 2 G L1 L2.
    """
    H1, H2 = table.R(xi1), table.R(xi2)
    phi = varphi(table, xi1, xi2, M)
    if not phi < 0:
        raise DomainError(f"phi(xi1, xi2) = {phi:.4g} >= 0: no negative direction")
    G = math.sqrt(H1 * H2) - phi
    L1 = math.sqrt(-math.sqrt(H2) / (math.sqrt(H1) * phi))
    L2 = math.sqrt(-math.sqrt(H1) / (math.sqrt(H2) * phi))
    Q = H1 * L1 ** 2 + H2 * L2 ** 2 - 2 * G * L1 * L2
    return L1, L2, Q


def critical_level(phi: float) -> float:
    """Psi(xi, Lambda(xi)) = -1 + log(1/|phi|)."""
    return -1.0 + math.log(1.0 / abs(phi))


def psi_scan(table: GreenTable, points, sign: str = SUBCRITICAL, delta: float | None = None):
    """Rows (xi coords..., Lambda..., Psi, |grad Psi|) for a list of (xi, Lambda) pairs."""
    rows = []
    for xi, lam in points:
        p = psi_eval(table, xi, lam, sign, delta)
        rows.append(list(p.xi.ravel()) + list(p.Lambda) + [p.value, float(np.linalg.norm(p.gradient))])
    return np.array(rows)


# ---------------------------------------------------------------------------
# critical points
# ---------------------------------------------------------------------------


def _pack(X, L):
    return np.concatenate([np.asarray(X, dtype=float).ravel(), np.asarray(L, dtype=float)])


def _unpack(z, m, n):
    return z[: m * n].reshape(m, n), z[m * n:]


def _steps(table, z, m, n, rel=1e-4):
    sc = table.scale()
    return np.concatenate([np.full(m * n, rel * sc), rel * np.maximum(1.0, np.abs(z[m * n:]))])


def fd_hessian(grad, z, steps):
    k = z.size
    Hm = np.zeros((k, k))
    for i in range(k):
        e = np.zeros(k)
        e[i] = steps[i]
        Hm[:, i] = (grad(z + e) - grad(z - e)) / (2 * steps[i])
    return 0.5 * (Hm + Hm.T)


def signature(eigs, rel=1e-6):
    nrm = float(np.max(np.abs(eigs))) if eigs.size else 0.0
    thr = rel * nrm
    return (int(np.sum(eigs > thr)), int(np.sum(eigs < -thr)), int(np.sum(np.abs(eigs) <= thr)))


def _admissible_z(table, z, m, n, margin):
    X, L = _unpack(z, m, n)
    if np.any(L <= 0):
        return False
    return all(table.contains(X[i] if n > 1 else X[i, 0], margin) for i in range(m))


def newton_critical(grad, z0, admissible, steps, tol=1e-10, max_iter=200, max_step=None):
    """Damped Newton on grad = 0 with backtracking on |grad|; falls back to a
    gradient step when the Newton direction does not reduce the residual."""
    z = np.array(z0, dtype=float)
    g = grad(z)
    nrm = float(np.linalg.norm(g))
    for it in range(max_iter):
        if nrm < tol:
            return z, nrm, True, it
        Hm = fd_hessian(grad, z, steps)
        try:
            d = -np.linalg.solve(Hm, g)
        except np.linalg.LinAlgError:
            d = -g
        if max_step is not None:
            dn = np.linalg.norm(d)
            if dn > max_step:
                d *= max_step / dn
        accepted = False
        for direction in (d, -g):
            t = 1.0
            for _ in range(40):
                zn = z + t * direction
                if admissible(zn):
                    gn = grad(zn)
                    nn = float(np.linalg.norm(gn))
                    if nn < (1 - 1e-4 * t) * nrm:
                        z, g, nrm = zn, gn, nn
                        accepted = True
                        break
                t *= 0.5
            if accepted:
                break
        if not accepted:
            return z, nrm, nrm < tol, it
    return z, nrm, nrm < tol, max_iter


def find_critical(table: GreenTable, seeds, sign: str = SUBCRITICAL, tol: float = 1e-10,
                  max_iter: int = 200, perturbation=None, margin: float = 0.0, dedup: float | None = None):
    """Damped Newton from each seed (xi, Lambda); results deduplicated within 10 tol.

    ``perturbation(z) -> (value, gradient)`` is added to Psi when given.
    """
    sgn = _sign(sign)
    out = []
    radius = 10 * tol if dedup is None else dedup
    for k, seed in enumerate(seeds):
        xi, lam = (seed.xi, seed.Lambda) if isinstance(seed, PsiPoint) else seed
        X = _xi_array(table, xi)
        L = np.atleast_1d(np.asarray(lam, dtype=float))
        m, n = X.shape

        def grad(z, m=m, n=n):
            Xz, Lz = _unpack(z, m, n)
            g = _psi_core(table, Xz, Lz, sgn)[1]
            if perturbation is not None:
                g = g + perturbation(z)[1]
            return g

        def value(z, m=m, n=n):
            Xz, Lz = _unpack(z, m, n)
            v = _psi_core(table, Xz, Lz, sgn)[0]
            return v + (perturbation(z)[0] if perturbation is not None else 0.0)

        z0 = _pack(X, L)
        steps = _steps(table, z0, m, n)
        adm = lambda z, m=m, n=n: _admissible_z(table, z, m, n, margin)
        try:
            z, nrm, ok, _ = newton_critical(grad, z0, adm, steps, tol=tol, max_iter=max_iter,
                                            max_step=0.25 * table.scale())
        except DomainError:
            z, nrm, ok = z0, math.inf, False
        Hm = fd_hessian(grad, z, _steps(table, z, m, n))
        eigs = np.linalg.eigvalsh(Hm)
        Xz, Lz = _unpack(z, m, n)
        cp = CriticalPoint(Xz.copy(), Lz.copy(), float(value(z)), nrm, signature(eigs), eigs, bool(ok), k)
        dup = False
        if ok:
            for other in out:
                if other.converged and np.linalg.norm(_pack(other.xi, other.Lambda) - z) < radius:
                    dup = True
                    break
        if not dup:
            out.append(cp)
    return out


def grid_scan_minimum(table: GreenTable, xs, lams, sign: str = SUBCRITICAL):
    """Exhaustive scan oracle for m = 1: (xi, Lambda, value) of the smallest Psi on the grid."""
    best = (None, None, math.inf)
    for x in xs:
        for lam in lams:
            v = psi_eval(table, [x], [lam], sign).value
            if v < best[2]:
                best = (x, lam, v)
    return best


class SmoothPerturbation:
    """Random smooth function with |P| + |grad P| <= magnitude on R^d.

    P(z) = A sum_k a_k sin(w_k . z + p_k), scaled by the bound
    sum_k |a_k| (1 + |w_k|).
    """

    def __init__(self, dim: int, magnitude: float, rng: np.random.Generator, modes: int = 4,
                 wavelength: float = 1.0):
        self.w = rng.normal(size=(modes, dim)) * (2 * math.pi / wavelength)
        self.p = rng.uniform(0, 2 * math.pi, size=modes)
        a = rng.normal(size=modes)
        bound = float(np.sum(np.abs(a) * (1.0 + np.linalg.norm(self.w, axis=1))))
        self.a = a * magnitude / bound

    def __call__(self, z):
        ph = self.w @ z + self.p
        return float(self.a @ np.sin(ph)), (self.a * np.cos(ph)) @ self.w


def classify_stability(table: GreenTable, cp: CriticalPoint, mu: float = 1e-3, sign: str = SUBCRITICAL,
                       trials: int = 50, seed: int = 0, tol: float = 1e-11):
    """Re-locate the critical point of Psi + P for random C^1-small P.

    The C^1 size of P is mu * min(1, lambda_min)/2 with lambda_min the smallest
    |Hessian eigenvalue| (a floor of 1e-3 mu for degenerate points): a
    nondegenerate critical point then moves by at most about mu/2.  Stable iff
    every run converges within mu of ``cp``.
    """
    rng = np.random.default_rng(seed)
    z0 = _pack(cp.xi, cp.Lambda)
    lam_min = float(np.min(np.abs(cp.hessian_eigs))) if cp.hessian_eigs.size else 0.0
    mag = mu * max(1e-3, min(1.0, lam_min)) / 2.0
    moves = []
    ok_all = True
    for _ in range(trials):
        P = SmoothPerturbation(z0.size, mag, rng, wavelength=max(10 * mu, 0.05 * table.scale()))
        res = find_critical(table, [(cp.xi, cp.Lambda)], sign, tol=tol, perturbation=P)[0]
        dist = float(np.linalg.norm(_pack(res.xi, res.Lambda) - z0))
        moves.append(dist)
        if not (res.converged and dist <= mu):
            ok_all = False
    nondeg = cp.signature[2] == 0
    return {"stable": ok_all, "nondegenerate": nondeg, "max_move": float(np.max(moves)),
            "moves": moves, "perturbation_c1": mag, "mu": mu, "trials": trials}


# ---------------------------------------------------------------------------
# min-max
# ---------------------------------------------------------------------------


@dataclass
class MinMaxResult:
    value: float
    initial_sup: float
    observed_inf: float
    saddle_xi: np.ndarray
    saddle_Lambda: np.ndarray
    saddle_phi: float
    predicted_level: float
    history: list = field(default_factory=list)
    rejected_steps: int = 0
    all_in_D: bool = True
    lower_bound_K: float | None = None
    dropped_below_K: bool = False

    def to_record(self):
        return {"value": self.value, "initial_sup": self.initial_sup, "observed_inf": self.observed_inf,
                "saddle_xi": self.saddle_xi.tolist(), "saddle_Lambda": self.saddle_Lambda.tolist(),
                "saddle_phi": self.saddle_phi, "predicted_level": self.predicted_level,
                "rejected_steps": self.rejected_steps, "all_in_D": self.all_in_D,
                "lower_bound_K": self.lower_bound_K, "dropped_below_K": self.dropped_below_K}


def rho0_default(table: GreenTable, tp: TruncationParams, seed_pairs, sigmas):
    """rho0 = min{ exp(-2 C0 - 1)/2, -max phi / 2 } with C0 = sup Psi over the initial family."""
    C0 = -math.inf
    phis = []
    for a, b in seed_pairs:
        phi = varphi(table, a, b, tp.M)
        phis.append(phi)
        L1, L2, _ = lambda_critical(table, a, b, tp.M)
        for sg in sigmas:
            C0 = max(C0, psi_truncated(table, tp, [a, b], [sg * L1, sg * L2])[0])
    return min(0.5 * math.exp(-2 * C0 - 1), -0.5 * max(phis)), C0


def _gate(v, c, alpha):
    if v <= c - 2 * alpha:
        return 0.0
    if v >= c - alpha:
        return 1.0
    return (v - (c - 2 * alpha)) / alpha


def minmax_estimate(table: GreenTable, tp: TruncationParams, seed_set, flow_steps: int = 2000,
                    n_sigma: int = 21, dt: float | None = None, alpha: float = 0.05,
                    lower_bound_K: float | None = None, reparametrize: bool = True,
                    reparam_every: int = 5, refine: int = 16, stop_tol: float = 1e-8):
    """Gradient-flow approximation of c = inf sup Psi_M(zeta(xi, sigma, 1)).

    seed_set: list of points of the set M (points of Omega); every ordered pair
    of distinct points, plus coincident pairs through G_M, forms xi.  Each xi
    carries a string sigma -> (xi, sigma Lambda(xi)) on I = (sigma0, 1/sigma0)
    (log-spaced, endpoints pinned).  Interior string nodes follow explicit Euler
    steps of -h(Psi) grad Psi_M, where h is 0 below c - 2 alpha and 1 above
    c - alpha, with c the current sup.  Each step moves a node by at most rho/2;
    steps leaving D = {xi in Omega_rho^2, phi_M(xi) < -rho0} are rejected and
    halved.  The returned value is the largest Psi_M along the final strings,
    sampled ``refine`` times per segment, since nodes drift off the crest.
    """
    pts = [np.atleast_1d(np.asarray(p, dtype=float)) for p in seed_set]
    n = table.n
    pairs = [(a, b) for a in pts for b in pts]
    sig = np.exp(np.linspace(math.log(tp.sigma0), -math.log(tp.sigma0), n_sigma))
    fmt = (lambda v: float(v[0])) if n == 1 else (lambda v: v)
    rho0 = tp.rho0
    if rho0 == 0.0:
        rho0, _ = rho0_default(table, tp, [(fmt(a), fmt(b)) for a, b in pairs], sig)
    strings = []
    for a, b in pairs:
        L1, L2, _ = lambda_critical(table, fmt(a), fmt(b), tp.M)
        S = np.array([np.concatenate([a, b, [sg * L1, sg * L2]]) for sg in sig])
        strings.append(S)

    def ev(z):
        X = z[: 2 * n].reshape(2, n)
        return psi_truncated(table, tp, X if n > 1 else X[:, 0], z[2 * n:])

    def in_D(z):
        X = z[: 2 * n].reshape(2, n)
        if np.any(z[2 * n:] <= 0):
            return False
        for i in range(2):
            if not table.contains(fmt(X[i]), tp.rho):
                return False
        try:
            return varphi(table, fmt(X[0]), fmt(X[1]), tp.M) < -rho0
        except DomainError:
            return False

    cache = [[ev(z) for z in S] for S in strings]
    vals = [np.array([v for v, _ in C]) for C in cache]
    sup0 = max(float(v.max()) for v in vals)
    observed_inf = min(float(v.min()) for v in vals)
    if dt is None:
        dt = 0.02 * table.scale() ** 2
    max_disp = 0.5 * tp.rho
    history = [sup0]
    rejected = 0
    all_in = all(in_D(z) for S in strings for z in S)
    for step in range(flow_steps):
        c = max(float(v.max()) for v in vals)
        for si_, S in enumerate(strings):
            if vals[si_].max() <= c - 2 * alpha:
                continue  # gate vanishes on the whole string
            for k in range(1, n_sigma - 1):
                v, g = cache[si_][k]
                h = _gate(v, c, alpha)
                if h == 0.0:
                    continue
                gn = float(np.linalg.norm(g)) * h
                tau = dt if gn == 0 else min(dt, max_disp / gn)
                for _ in range(30):
                    zn = S[k] - tau * h * g
                    if in_D(zn):
                        break
                    tau *= 0.5
                    rejected += 1
                else:
                    continue
                S[k] = zn
                cache[si_][k] = ev(zn)
            if reparametrize and step % reparam_every == 0:
                S2 = _reparametrize(S, 2 * n)
                if all(in_D(z) for z in S2[1:-1]):
                    strings[si_] = S2
                    cache[si_] = [ev(z) for z in S2]
            vals[si_] = np.array([v for v, _ in cache[si_]])
        cur = max(float(v.max()) for v in vals)
        observed_inf = min(observed_inf, min(float(v.min()) for v in vals))
        history.append(cur)
        if step > 50 and abs(history[-50] - cur) < stop_tol * max(1.0, abs(cur)):
            break
    all_in = all_in and all(in_D(z) for S in strings for z in S)
    # sup of each final string along its piecewise-linear path
    c = max(float(v.max()) for v in vals)
    best, top = -math.inf, None
    for si_, S in enumerate(strings):
        if vals[si_].max() <= c - 2 * alpha:
            continue
        tt = np.linspace(0.0, 1.0, refine + 1)[:-1]
        for k in range(n_sigma - 1):
            for t_ in tt:
                z = (1 - t_) * S[k] + t_ * S[k + 1]
                v = ev(z)[0]
                if v > best:
                    best, top = v, z
    X = top[: 2 * n].reshape(2, n)
    phi = varphi(table, fmt(X[0]), fmt(X[1]), tp.M)
    res = MinMaxResult(value=float(best), initial_sup=float(sup0), observed_inf=float(observed_inf),
                       saddle_xi=X.copy(), saddle_Lambda=top[2 * n:].copy(), saddle_phi=float(phi),
                       predicted_level=critical_level(phi), history=history, rejected_steps=rejected,
                       all_in_D=bool(all_in), lower_bound_K=lower_bound_K)
    if lower_bound_K is not None:
        res.dropped_below_K = bool(min(history) < -lower_bound_K)
    return res


def _reparametrize(S, n_xi):
    """Equal-arclength redistribution with pinned endpoints, measured in
    (xi, log Lambda) so that nodes stay evenly spread over the sigma range."""
    Y = S.copy()
    Y[:, n_xi:] = np.log(Y[:, n_xi:])
    seg = np.linalg.norm(np.diff(Y, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return S
    target = np.linspace(0, s[-1], S.shape[0])
    out = np.empty_like(Y)
    for j in range(S.shape[1]):
        out[:, j] = np.interp(target, s, Y[:, j])
    out[:, n_xi:] = np.exp(out[:, n_xi:])
    out[0], out[-1] = S[0], S[-1]
    return out


# ---------------------------------------------------------------------------
# half-space interaction phi_+ along the normal axis
# ---------------------------------------------------------------------------


def halfspace_phi_plus(constants: ConstantSet, theta: float, kind: str = "spectral"):
    """phi_+ at xi1 = (0, 1), xi2 = (0, theta) and its theta-derivative.

    spectral: a [2^{-(n-2s)} theta^{-(n-2s)/2} - (theta-1)^{-(n-2s)} + (theta+1)^{-(n-2s)}];
    restricted: a d iota 2^{-(n-2s)} theta^{-(n-2s)/2} - a (theta-1)^{-(n-2s)} + a d K(theta) (theta-1)^{-(n-2s)}.
    """
    if not theta > 1:
        raise DomainError("halfspace_phi_plus needs theta > 1")
    n, s, a = constants.n, constants.s, constants.a
    k = n - 2 * s
    if kind == "spectral":
        v = 2.0 ** (-k) * theta ** (-k / 2) - (theta - 1) ** (-k) + (theta + 1) ** (-k)
        dv = -(k / 2) * 2.0 ** (-k) * theta ** (-k / 2 - 1) + k * (theta - 1) ** (-k - 1) - k * (theta + 1) ** (-k - 1)
        return a * v, a * dv
    if kind == "restricted":
        d, iota = constants.d_half, constants.iota
        K, dK = K_theta(theta, n, s)
        v = d * iota * 2.0 ** (-k) * theta ** (-k / 2) - (theta - 1) ** (-k) + d * K * (theta - 1) ** (-k)
        dv = (-(k / 2) * d * iota * 2.0 ** (-k) * theta ** (-k / 2 - 1) + k * (theta - 1) ** (-k - 1)
              - k * d * K * (theta - 1) ** (-k - 1) + d * dK * (theta - 1) ** (-k))
        return a * v, a * dv
    raise ConfigurationError(f"unknown kind {kind!r}")


def halfspace_phi_root(constants: ConstantSet, kind: str = "spectral", lo: float = 1.0 + 1e-9,
                       hi: float = 100.0, tol: float = 1e-12):
    """Bisection for the sign change of phi_+ on (lo, hi); also counts sign changes on a fine grid."""
    f = lambda t: halfspace_phi_plus(constants, t, kind)[0]
    grid = np.concatenate([1 + np.geomspace(1e-6, hi - 1, 400)])
    vals = np.array([f(t) for t in grid])
    changes = int(np.sum(np.sign(vals[1:]) != np.sign(vals[:-1])))
    a, b = lo, hi
    fa = f(a)
    if np.sign(fa) == np.sign(f(b)):
        raise DomainError("phi_+ has no sign change on the bracket")
    while b - a > tol * max(1.0, a):
        mid = 0.5 * (a + b)
        fm = f(mid)
        if np.sign(fm) == np.sign(fa):
            a, fa = mid, fm
        else:
            b = mid
    root = 0.5 * (a + b)
    return root, halfspace_phi_plus(constants, root, kind)[1], changes
