"""Acceptance criteria 1-9 as callable runners returning structured reports."""

from __future__ import annotations

import math
import time

import numpy as np

from .constants import SUBCRITICAL, SUPERCRITICAL, FracParams, resolve_constants
from .green import (BallTable, K_theta, NumericTable, ball_robin_closed, fit_blowup_slope, half_space_robin,
                    kernel_K, kernel_K_and_partials, robin)
from .landscape import (TruncationParams, classify_stability, find_critical, halfspace_phi_root,
                        lambda_critical, minmax_estimate, psi_eval, varphi)
from .operators import DomainSpec, apply, build_operator, make_grid, solve
from .reduction import (AnsatzConfig, ProjectedSystem, WeightedNorm, ansatz_operator, build_ansatz,
                        energy_expansion_check, nondegeneracy_check, solve_nonlinear_projected,
                        solve_projected_linear)

DESK = FracParams(1, 0.3)


def _report(number, name, passed, metrics, t0, limit):
    rt = time.time() - t0
    return {"criterion": number, "name": name, "passed": bool(passed), "metrics": metrics,
            "runtime": rt, "runtime_limit": limit, "within_runtime": rt < limit}


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def criterion_1(params=DESK):
    t0 = time.time()
    m = {}
    dom = DomainSpec.interval(-1.0, 1.0)
    grid = make_grid(dom, N=256)
    op = build_operator(dom, params, grid, "spectral")
    x = op.points
    errs = []
    for k in range(1, 6):
        u = np.sin(k * math.pi * (x + 1) / 2)
        lam = (k * math.pi / 2) ** (2 * params.s)
        errs.append(float(np.max(np.abs(apply(op, u) - lam * u)) / lam))
    m["spectral_eigen_rel_err"] = max(errs)
    grid = make_grid(dom, N=400)
    op = build_operator(dom, params, grid, "restricted")
    x = op.points
    u = (1 - x ** 2) * np.exp(np.sin(3 * x))
    m["restricted_roundtrip_rel_err"] = float(np.max(np.abs(solve(op, apply(op, u)) - u)) / np.max(np.abs(u)))
    c = resolve_constants(params)
    from .constants import BubbleParams, bubble_value
    bp = BubbleParams(1.0, (0.0,))
    res = []
    for N in (1000, 2000, 4000):
        d = DomainSpec.interval(-100.0, 100.0)
        o = build_operator(d, params, make_grid(d, N=N), "whole-space")
        w = bubble_value(params, bp, o.points, c)
        res.append(float(np.max(np.abs(apply(o, w) - w ** params.p_star)) / np.max(w ** params.p_star)))
    m["whole_space_residuals"] = res
    passed = (m["spectral_eigen_rel_err"] < 1e-10 and m["restricted_roundtrip_rel_err"] < 1e-8
              and res[-1] < 5e-2 and res[0] > res[1] > res[2])
    return _report(1, "operator correctness", passed, m, t0, 60)


def _slope(op, c, ends, ds):
    R = []
    for end, sgn in ends:
        R.append([robin(op, end - sgn * d, c) for d in ds])
    return [fit_blowup_slope(ds, r) for r in R]


def criterion_2(params=DESK):
    t0 = time.time()
    c = resolve_constants(params)
    m = {}
    hs = DomainSpec.truncated_half_space(1, 40.0, roi=1.0)
    op = build_operator(hs, params, make_grid(hs, N=2000), "restricted")
    Rn, Rc = robin(op, 1.0, c), half_space_robin(c, 1.0)
    m["half_space_R"] = {"numeric": Rn, "closed": Rc, "rel_err": _rel(Rn, Rc)}
    target = 2 * params.s - params.n
    slopes = {}
    ok = m["half_space_R"]["rel_err"] < 0.05
    for label, dom in (("interval", DomainSpec.interval(0.0, 2.0)), ("ball", DomainSpec.ball(1, radius=1.0))):
        lo, hi = (float(v[0]) for v in dom.bbox())
        N = 1000
        h = (hi - lo) / N
        ds = np.maximum(np.round(np.geomspace(0.01, 0.1, 8) / h), 4) * h
        for kind in ("restricted", "spectral"):
            o = build_operator(dom, params, make_grid(dom, N=N), kind)
            sl_ = _slope(o, c, ((hi, 1.0), (lo, -1.0)), ds)
            slopes[f"{label}/{kind}"] = [v / target for v in sl_]
            ok = ok and all(abs(v / target - 1) < 0.10 for v in sl_)
    m["slope_ratio_to_2s_minus_n"] = slopes
    m["ball_closed_form_check"] = _rel(robin(build_operator(DomainSpec.ball(1), params, make_grid(DomainSpec.ball(1), N=400),
                                                           "restricted"), 0.0, c), ball_robin_closed(c, 0.0))
    return _report(2, "Green/Robin oracles", ok, m, t0, 300)


def criterion_3(params=DESK):
    t0 = time.time()
    n, s = params.n, params.s
    worst = 0.0
    signs = True
    for r in np.geomspace(0.1, 10, 10):
        for t in np.geomspace(0.1, 10, 10):
            K, Kr, Kt = kernel_K_and_partials(r, t, n, s)
            er, et = 1e-5 * r, 1e-5 * t
            fr = (kernel_K(r + er, t, n, s) - kernel_K(r - er, t, n, s)) / (2 * er)
            ft = (kernel_K(r, t + et, n, s) - kernel_K(r, t - et, n, s)) / (2 * et)
            worst = max(worst, _rel(Kr, fr), _rel(Kt, ft))
            signs = signs and Kr > 0 and Kt < 0
    thetas = 1 + np.geomspace(1e-3, 100, 60)
    kprime_pos = all(K_theta(th, n, s)[1] > 0 for th in thetas)
    c = resolve_constants(params)
    root, dphi, changes = halfspace_phi_root(c, "spectral")
    m = {"partials_max_rel_err": worst, "signs_Kr_pos_Kt_neg": signs, "K_theta_prime_positive": kprime_pos,
         "spectral_root": root, "spectral_phi_prime_at_root": dphi, "sign_changes": changes}
    passed = worst < 1e-6 and signs and kprime_pos and dphi > 0
    return _report(3, "kernel analysis", passed, m, t0, 10)


def criterion_4(params=DESK, seed=0):
    t0 = time.time()
    c = resolve_constants(params)
    B = BallTable(c)
    rng = np.random.default_rng(seed)
    worst = 0.0
    count = 0
    while count < 20:
        xi = np.sort(rng.uniform(-0.8, 0.8, 2))
        if xi[1] - xi[0] < 0.2:
            continue
        L = rng.uniform(0.5, 2.0, 2)
        sign = SUPERCRITICAL if count % 2 else SUBCRITICAL
        p = psi_eval(B, xi, L, sign, delta=0.1)
        z = np.r_[xi, L]
        fd = np.zeros(4)
        for k in range(4):
            e = np.zeros(4)
            e[k] = 1e-6
            fd[k] = (psi_eval(B, (z + e)[:2], (z + e)[2:], sign).value
                     - psi_eval(B, (z - e)[:2], (z - e)[2:], sign).value) / 2e-6
        worst = max(worst, float(np.max(np.abs(fd - p.gradient)) / np.max(np.abs(p.gradient))))
        count += 1
    # Lambda(xi) for pairs with phi < 0
    lam_res, q_err, checked = 0.0, 0.0, 0
    for xi in ((0.0, 0.05), (-0.3, -0.2), (0.5, 0.6), (-0.7, -0.65)):
        if varphi(B, *xi) >= 0:
            continue
        checked += 1
        L1, L2, Q = lambda_critical(B, *xi)
        g = psi_eval(B, list(xi), [L1, L2], SUPERCRITICAL).grad_Lambda
        lam_res = max(lam_res, float(np.max(np.abs(g))))
        q_err = max(q_err, abs(Q + 2))
    cps = find_critical(B, [([0.3], [1.0])], SUBCRITICAL)
    cp = cps[0]
    lam_target = B.R(float(cp.xi[0, 0])) ** -0.5
    dom = DomainSpec.interval(-1, 1)
    grid = make_grid(dom, N=400)
    T = NumericTable(build_operator(dom, params, grid, "restricted"), c)
    cpn = find_critical(T, [([0.2], [1.5])], SUBCRITICAL, tol=1e-9)[0]
    m = {"grad_max_rel_err": worst, "lambda_grad_residual": lam_res, "Q_plus_2": q_err, "lambda_pairs": checked,
         "ball_critical_xi": float(cp.xi[0, 0]), "ball_critical_Lambda": float(cp.Lambda[0]),
         "ball_Lambda_error": abs(cp.Lambda[0] - ball_robin_closed(c, 0.0) ** -0.5),
         "numeric_critical_xi": float(cpn.xi[0, 0]), "grid_cell": grid.h,
         "numeric_Lambda_error": abs(cpn.Lambda[0] - T.R(float(cpn.xi[0, 0])) ** -0.5)}
    passed = (worst < 1e-6 and checked > 0 and lam_res < 1e-12 and q_err < 1e-10 and abs(cp.xi[0, 0]) <= grid.h
              and m["ball_Lambda_error"] < 1e-6 and abs(cpn.xi[0, 0]) <= grid.h and m["numeric_Lambda_error"] < 1e-6
              and abs(lam_target - cp.Lambda[0]) < 1e-6)
    return _report(4, "reduced landscape", passed, m, t0, 60)


def criterion_5(params=DESK):
    t0 = time.time()
    c = resolve_constants(params)
    B = BallTable(c)
    dom = DomainSpec.interval(-1.0, 1.0)
    r1 = energy_expansion_check(AnsatzConfig(params.with_sign(SUBCRITICAL), dom, [0.0], [1.0], 0.04, c), B,
                                gradient=False)
    r1g = energy_expansion_check(AnsatzConfig(params.with_sign(SUBCRITICAL), dom, [0.3], [1.2], 0.04, c), B)
    r2 = energy_expansion_check(AnsatzConfig(params.with_sign(SUPERCRITICAL), dom, [-0.4, 0.4], [1.0, 1.0], 0.04, c), B)
    m = {"m1_center": {k: r1[k] for k in ("predicted", "extrapolated", "rel_error", "monotone")},
         "m1_offcenter": {k: r1g[k] for k in ("predicted", "extrapolated", "rel_error", "grad_predicted",
                                               "grad_extrapolated", "grad_rel_error")},
         "m2": {k: r2[k] for k in ("predicted", "extrapolated", "rel_error", "grad_predicted",
                                   "grad_extrapolated", "grad_rel_error")}}
    passed = r1["passed"] and r1g["passed"] and r2["passed"] and r1g["grad_passed"] and r2["grad_passed"]
    return _report(5, "expansion verification", passed, m, t0, 600)


def criterion_6(params=DESK):
    t0 = time.time()
    c = resolve_constants(params)
    B = BallTable(c)
    dom = DomainSpec.interval(-1.0, 1.0)
    lam_star = B.R(0.0) ** -0.5
    eps_list = (0.04, 0.02, 0.01, 0.005)

    def setup(eps, xi, Lam):
        cfg = AnsatzConfig(params, dom, [xi], [Lam], eps, c)
        op = ansatz_operator(cfg)
        ans = build_ansatz(op, cfg)
        return cfg, op, ans, WeightedNorm(0.9, cfg.xi_scaled)

    # dense oracle on a ~400-node mesh
    cfg, op, ans, wn = setup(0.005, 0.0, lam_star)
    system = ProjectedSystem(ans)
    hfun = lambda x: np.cos(0.1 * x) / (1 + np.abs(x)) ** 0.9
    a = solve_projected_linear(ans, hfun, wn, system)
    b = solve_projected_linear(ans, hfun, wn, system, method="dense")
    dense_err = float(max(np.max(np.abs(a.phi - b.phi)) / np.max(np.abs(b.phi)), np.max(np.abs(a.c - b.c))))
    rows = []
    for e in eps_list:
        cfg, op, ans, wn = setup(e, 0.0, lam_star)
        sol = solve_nonlinear_projected(ans, wn)
        _, _, ansg, wng = setup(e, 0.3, 1.2)
        gen = solve_nonlinear_projected(ansg, wng)
        rows.append({"eps": e, "nodes": op.size, "contraction": sol.contraction,
                     "phi_tilde": sol.norms["phi_tilde_alpha_minus_2s"], "c_critical": float(np.max(np.abs(sol.c))),
                     "c_generic": float(np.max(np.abs(gen.c))), "orthogonality": sol.orthogonality})
    slope = float(np.polyfit(np.log([r["eps"] for r in rows]), np.log([r["phi_tilde"] for r in rows]), 1)[0])
    target = min(params.p_star, 2.0) - 0.3
    drop = [r["c_generic"] / r["c_critical"] for r in rows]
    m = {"dense_oracle_err": dense_err, "oracle_nodes": int(op.size), "rows": rows, "phi_tilde_slope": slope,
         "slope_target": target, "multiplier_drop": drop}
    passed = (dense_err < 1e-8 and all(r["contraction"] < 0.5 for r in rows) and slope >= target
              and min(drop) >= 10)
    return _report(6, "linear/nonlinear reduction", passed, m, t0, 900)


def criterion_7(params=DESK):
    t0 = time.time()
    c = resolve_constants(params)
    r = nondegeneracy_check(params, c)
    return _report(7, "non-degeneracy", r["passed"], r, t0, 120)


def criterion_8(params=DESK, N: int = 2000):
    t0 = time.time()
    c = resolve_constants(params)
    dom = DomainSpec.interval(-1.0, 1.0, holes=[(-0.002, 0.002)])
    T = NumericTable(build_operator(dom, params, make_grid(dom, N=N), "restricted"), c)
    tp = TruncationParams(M=50.0, rho=0.005, sigma0=0.1)
    res = minmax_estimate(T, tp, [-0.06, -0.05, 0.05, 0.06])
    rel = _rel(res.value, res.predicted_level)
    m = res.to_record()
    m["rel_error"] = rel
    passed = math.isfinite(res.value) and rel < 0.05 and res.all_in_D
    return _report(8, "min-max", passed, m, t0, 600)


def criterion_9(params=DESK, seed=0):
    t0 = time.time()
    c = resolve_constants(params)
    B = BallTable(c)
    cp = find_critical(B, [([0.2], [1.0])], SUBCRITICAL)[0]
    st = classify_stability(B, cp, mu=1e-3, sign=SUBCRITICAL, trials=50, seed=seed)
    m = {k: st[k] for k in ("stable", "nondegenerate", "max_move", "perturbation_c1", "mu", "trials")}
    m["critical_xi"] = float(cp.xi[0, 0])
    m["critical_Lambda"] = float(cp.Lambda[0])
    return _report(9, "stability", st["stable"], m, t0, 600)


RUNNERS = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
           6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9}


def format_line(rep) -> str:
    status = "PASS" if rep["passed"] else "FAIL"
    return f"criterion {rep['criterion']}: {status} - {rep['name']} ({rep['runtime']:.1f}s)"


def run_all(selected=None, echo=print):
    reports = []
    for k in sorted(selected or RUNNERS):
        rep = RUNNERS[k]()
        reports.append(rep)
        if echo is not None:
            echo(format_line(rep))
    return reports
