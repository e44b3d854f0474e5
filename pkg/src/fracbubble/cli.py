"""Command-line front end: ``fracbubble <command> [--config FILE] [flags]``.

Exit codes: 0 ok, 2 configuration error, 3 numeric failure, 4 acceptance failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import AcceptanceFailure, ConfigurationError, FracBubbleError, NumericError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 2, 3, 4
HASH_COLUMN = "config_hash"


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


class Writer:
    """Serializes every artifact of one run; each file carries the config hash."""

    def __init__(self, cfg: ExperimentConfig, command: str):
        self.cfg = cfg
        self.hash = cfg.config_hash()
        self.command = command
        self.out = cfg.out
        self.files = []
        self.timings = {}
        os.makedirs(self.out, exist_ok=True)

    def _path(self, name):
        return os.path.join(self.out, name)

    def csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(header) + [HASH_COLUMN])
        for r in rows:
            w.writerow([fmt(v) for v in r] + [self.hash])
        self._write(name, buf.getvalue())

    def json(self, name, payload):
        body = dict(payload)
        body[HASH_COLUMN] = self.hash
        self._write(name, json.dumps(body, indent=2, sort_keys=True, default=_json_default) + "\n")

    def _write(self, name, text):
        with open(self._path(name), "w") as fh:
            fh.write(text)
        self.files.append(name)

    def manifest(self, status, error=None):
        payload = {"command": self.command, "status": status, "error": error, "files": self.files,
                   "config": self.cfg.to_dict(), "config_source": self.cfg.source, "timings": self.timings,
                   "versions": versions()}
        self.json(f"manifest_{self.command}.json", payload)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def versions() -> dict:
    import scipy

    from . import _accel

    v = {"fracbubble": __version__, "python": platform.python_version(), "numpy": np.__version__,
         "scipy": scipy.__version__, "backend": _accel.backend()}
    try:
        import numba

        v["numba"] = numba.__version__
    except ImportError:  # pragma: no cover
        v["numba"] = None
    return v


def read_hashes(out_dir: str) -> dict:
    """config hash of every artifact in ``out_dir`` (file name -> hash)."""
    found = {}
    if not os.path.isdir(out_dir):
        return found
    for name in sorted(os.listdir(out_dir)):
        path = os.path.join(out_dir, name)
        if name.endswith(".json"):
            try:
                with open(path) as fh:
                    h = json.load(fh).get(HASH_COLUMN)
            except (OSError, ValueError, AttributeError):
                h = None
        elif name.endswith(".csv"):
            with open(path) as fh:
                r = csv.reader(fh)
                head = next(r, [])
                row = next(r, None)
            h = row[head.index(HASH_COLUMN)] if row and HASH_COLUMN in head else None
        else:
            continue
        found[name] = h
    return found


# ---------------------------------------------------------------------------
# shared builders
# ---------------------------------------------------------------------------

def _constants(cfg):
    from .constants import resolve_constants

    return resolve_constants(cfg.params(), tol=max(cfg.tol, 1e-12))


def _operator(cfg):
    from .operators import build_operator, make_grid

    dom = cfg.domain_spec()
    return build_operator(dom, cfg.params(), make_grid(dom, N=cfg.N), cfg.kind)


def _table(cfg, c):
    from .green import BallTable, HalfSpaceTable, NumericTable

    if cfg.table == "ball":
        center = list(cfg.center) or None
        if cfg.domain == "interval" and not cfg.center:
            center = [0.5 * (cfg.lo + cfg.hi)]
            return BallTable(c, center=center, radius=0.5 * (cfg.hi - cfg.lo))
        return BallTable(c, center=center, radius=cfg.radius)
    if cfg.table == "half-space":
        return HalfSpaceTable(c)
    return NumericTable(_operator(cfg), c)


def _pmap(cfg, fn, items):
    items = list(items)
    if cfg.threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(cfg.threads) as ex:
        return list(ex.map(fn, items))


def _points(cfg, flat):
    """Split a flat coordinate list into m points of dimension n."""
    a = np.asarray(flat, dtype=float)
    return a.reshape(-1, cfg.n) if cfg.n > 1 else a


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_constants(cfg, w: Writer):
    c = _constants(cfg)
    bad = {k: v for k, v in c.residuals.items() if not v < cfg.tol and k != "d_half_boundary"}
    payload = json.loads(c.to_json())
    payload["residuals_below_tol"] = not bad
    w.json("constants.json", payload)
    if bad:
        raise NumericError(f"constant residuals above tol={cfg.tol}: {bad}")


def cmd_green(cfg, w: Writer):
    from .green import NumericTable

    c = _constants(cfg)
    T = NumericTable(_operator(cfg), c)
    xs = T.xs
    rows = []
    for v in cfg.xi_samples:
        j = int(np.argmin(np.abs(xs - v)))
        for i in range(xs.size):
            rows.append((xs[j], xs[i], T.Gm[i, j], T.Hm[i, j]))
    w.csv("green.csv", ("xi", "x", "G", "H"), rows)
    w.json("green.json", {"domain": T.domain.to_dict(), "s": T.s, "kind": T.kind, "h": T.op.grid.spacing[0],
                          "method": T.op.method, "samples": list(cfg.xi_samples)})


def cmd_robin(cfg, w: Writer):
    from .green import ball_robin_closed, robin

    c = _constants(cfg)
    op = _operator(cfg)
    dom = op.domain
    pts = _points(cfg, cfg.robin_points)
    # closed form: restricted kind on a ball (a hole-free interval is the 1-D ball)
    center = radius = None
    if cfg.kind == "restricted" and dom.kind == "ball":
        center, radius = dom.center, dom.radius
    elif cfg.kind == "restricted" and dom.kind == "interval" and not cfg.holes:
        center, radius = [0.5 * (cfg.lo + cfg.hi)], 0.5 * (cfg.hi - cfg.lo)

    def row(x):
        x = np.atleast_1d(x)
        r = robin(op, x if cfg.n > 1 else float(x[0]), c)
        ref = float("nan") if radius is None else float(ball_robin_closed(c, x, center=center, radius=radius))
        return list(x) + [float(np.ravel(dom.dist_boundary(x))[0]), r, ref]

    rows = _pmap(cfg, row, pts)
    head = [f"x{k}" for k in range(cfg.n)] + ["dist", "R", "R_closed"]
    w.csv("robin.csv", head, rows)


def _scan_points(cfg):
    xs = np.linspace(*cfg.xi_range, cfg.xi_count)
    ls = np.geomspace(*cfg.Lambda_range, cfg.Lambda_count)
    if cfg.n != 1:
        raise ConfigurationError("psi-scan grids are implemented for n = 1")
    for combo in itertools.product(*([xs] * cfg.m), ls):
        yield np.array(combo[:-1]), np.full(cfg.m, combo[-1])


def cmd_psi_scan(cfg, w: Writer):
    from .landscape import psi_eval

    c = _constants(cfg)
    T = _table(cfg, c)

    def row(pt):
        xi, lam = pt
        try:
            p = psi_eval(T, xi, lam, cfg.sign, cfg.delta)
            return list(xi) + list(lam) + [1, p.value, float(np.linalg.norm(p.gradient))]
        except ConfigurationError:
            return list(xi) + list(lam) + [0, float("nan"), float("nan")]

    rows = _pmap(cfg, row, _scan_points(cfg))
    head = [f"xi{i + 1}" for i in range(cfg.m)] + [f"Lambda{i + 1}" for i in range(cfg.m)] + \
        ["admissible", "Psi", "grad_norm"]
    w.csv("psi_scan.csv", head, rows)


def cmd_find_critical(cfg, w: Writer):
    from .landscape import classify_stability, find_critical

    c = _constants(cfg)
    T = _table(cfg, c)
    X = np.asarray(cfg.xi_seeds, dtype=float).reshape(-1, cfg.m * cfg.n)
    L = np.asarray(cfg.Lambda_seeds, dtype=float)
    seeds = [(x.reshape(cfg.m, cfg.n) if cfg.n > 1 else x, np.resize(L, cfg.m)) for x in X]
    cps = find_critical(T, seeds, cfg.sign, tol=min(cfg.tol, 1e-8))
    records = []
    for k, cp in enumerate(cps):
        rec = cp.to_record()
        if cp.converged and cfg.trials > 0:
            st = classify_stability(T, cp, mu=cfg.mu, sign=cfg.sign, trials=cfg.trials, seed=cfg.seed + k)
            rec["stability"] = {key: v for key, v in st.items() if key != "moves"}
            rec["stable"] = bool(st["stable"])
        records.append(rec)
    w.json("critical_points.json", {"table": T.describe(), "sign": cfg.sign, "points": records})
    if not any(cp.converged for cp in cps):
        raise NumericError("no seed converged to a critical point")


def cmd_ansatz(cfg, w: Writer):
    from .green import BallTable
    from .reduction import (AnsatzConfig, WeightedNorm, ansatz_operator, back_transform, build_ansatz, energy,
                            solve_nonlinear_projected)

    c = _constants(cfg)
    if cfg.domain != "interval":
        raise ConfigurationError("the ansatz is implemented on intervals")
    dom = cfg.domain_spec()
    lam = np.asarray(cfg.ansatz_Lambda, dtype=float)
    if lam.size == 0:
        if len(cfg.ansatz_xi) != 1 or cfg.holes:
            raise ConfigurationError("bubble_machine.Lambda is required unless m = 1 on a plain interval")
        B = BallTable(c, center=[0.5 * (cfg.lo + cfg.hi)], radius=0.5 * (cfg.hi - cfg.lo))
        lam = np.array([B.R(cfg.ansatz_xi[0]) ** -0.5])
    rows = []
    for e in cfg.eps_list:
        t0 = time.time()
        acfg = AnsatzConfig(cfg.params(), dom, list(cfg.ansatz_xi), lam, e, c, delta=cfg.delta)
        op = ansatz_operator(acfg, cfg.kind)
        ans = build_ansatz(op, acfg)
        sol = solve_nonlinear_projected(ans, WeightedNorm(cfg.alpha, acfg.xi_scaled))
        J = energy(ans, acfg)
        rows.append((e, op.size, sol.iterations, sol.contraction, sol.orthogonality,
                     sol.norms.get("phi_tilde_alpha_minus_2s", float("nan")), float(np.max(np.abs(sol.c))), J))
        y = op.points
        u, scale = back_transform(acfg, ans.vbar + sol.phi)
        w.csv(f"ansatz_field_eps{e:g}.csv", ("y", "vbar", "phi", "x", "u"),
              zip(y, ans.vbar, sol.phi, y / scale, u))
        w.timings[f"eps={e:g}"] = time.time() - t0
    w.csv("ansatz_summary.csv", ("eps", "nodes", "iterations", "contraction", "orthogonality",
                                 "phi_tilde_norm", "max_abs_c", "energy"), rows)


def cmd_verify(cfg, w: Writer, criteria=None):
    from .acceptance import RUNNERS, format_line

    hashes = {k: v for k, v in read_hashes(cfg.out).items() if not k.startswith("manifest_verify")}
    seen = set(hashes.values()) | {w.hash}
    if len(seen) > 1:
        mixed = sorted(f"{k}={v}" for k, v in hashes.items() if v != w.hash)
        raise ConfigurationError(f"refusing mixed-hash inputs in {cfg.out!r}: {', '.join(mixed)}")
    params = cfg.params()
    selected = sorted(criteria) if criteria else sorted(RUNNERS)
    unknown = [k for k in selected if k not in RUNNERS]
    if unknown:
        raise ConfigurationError(f"unknown criteria {unknown}")
    reports = []
    for k in selected:
        try:
            rep = RUNNERS[k](params)
        except FracBubbleError as exc:
            rep = {"criterion": k, "name": "error", "passed": False, "metrics": {"error": str(exc)},
                   "runtime": 0.0, "runtime_limit": None, "within_runtime": False}
        reports.append(rep)
        print(format_line(rep), flush=True)
        w.timings[f"criterion_{k}"] = rep["runtime"]
        w.json("acceptance.json", {"reports": reports})
    failed = [r["criterion"] for r in reports if not r["passed"]]
    if failed:
        raise AcceptanceFailure(f"criteria failed: {failed}")


COMMANDS = {"constants": cmd_constants, "green": cmd_green, "robin": cmd_robin, "psi-scan": cmd_psi_scan,
            "find-critical": cmd_find_critical, "ansatz": cmd_ansatz, "verify": cmd_verify}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="fracbubble", description="Fractional bubble reduction toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file with one section per module")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="worker threads for independent evaluations")
        p.add_argument("--tol", type=float, help="numerical tolerance")
        p.add_argument("--seed", type=int, help="random seed")
        if name == "verify":
            p.add_argument("--criteria", type=int, nargs="+", help="subset of acceptance criteria")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    w = None
    try:
        cfg = load_config(args.config, {"out": args.out, "threads": args.threads, "tol": args.tol,
                                        "seed": args.seed})
        w = Writer(cfg, args.command)
        t0 = time.time()
        fn = COMMANDS[args.command]
        if args.command == "verify":
            fn(cfg, w, args.criteria)
        else:
            fn(cfg, w)
        w.timings["total"] = time.time() - t0
        w.manifest("ok")
        return EXIT_OK
    except ConfigurationError as exc:
        code, status, err = EXIT_CONFIG, "config-error", exc
    except NumericError as exc:
        code, status, err = EXIT_NUMERIC, "numeric-error", exc
    except AcceptanceFailure as exc:
        code, status, err = EXIT_ACCEPTANCE, "acceptance-failure", exc
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        code, status, err = EXIT_NUMERIC, "numeric-error", exc
    print(f"fracbubble {args.command}: {status}: {err}", file=sys.stderr)
    if w is not None:
        w.manifest(status, str(err))
    return code


def main_exit():  # console-script entry point
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_exit()
