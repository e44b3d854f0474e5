"""Experiment configuration: INI file with one flat section per module."""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

from .constants import _SIGNS, FracParams
from .errors import ConfigurationError
from .operators import DOMAIN_KINDS, KINDS, DomainSpec

TABLES = ("ball", "half-space", "numeric")

_FLOAT = float
_INT = int


def _floats(text):
    text = text.strip()
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip()) if text else ()


def _holes(text):
    """``lo:hi, lo:hi`` -> ((lo, hi), ...)."""
    text = text.strip()
    if not text:
        return ()
    pairs = []
    for tok in text.split(","):
        a, sep, b = tok.partition(":")
        if not sep:
            raise ValueError(f"hole {tok.strip()!r} must be written lo:hi")
        pairs.append((float(a), float(b)))
    return tuple(pairs)


def _str(text):
    return text.strip()


# section -> {key: (attribute, parser)}
_SCHEMA = {
    "constants_profiles": {"n": ("n", _INT), "s": ("s", _FLOAT), "sign": ("sign", _str), "tol": ("tol", _FLOAT)},
    "discrete_operators": {"kind": ("kind", _str), "domain": ("domain", _str), "lo": ("lo", _FLOAT),
                           "hi": ("hi", _FLOAT), "holes": ("holes", _holes), "radius": ("radius", _FLOAT),
                           "center": ("center", _floats), "roi": ("roi", _FLOAT), "N": ("N", _INT)},
    "green_functions": {"xi_samples": ("xi_samples", _floats), "robin_points": ("robin_points", _floats)},
    "reduced_energy": {"table": ("table", _str), "m": ("m", _INT), "xi_seeds": ("xi_seeds", _floats),
                       "Lambda_seeds": ("Lambda_seeds", _floats), "xi_range": ("xi_range", _floats),
                       "xi_count": ("xi_count", _INT), "Lambda_range": ("Lambda_range", _floats),
                       "Lambda_count": ("Lambda_count", _INT), "delta": ("delta", _FLOAT),
                       "mu": ("mu", _FLOAT), "trials": ("trials", _INT)},
    "bubble_machine": {"eps_list": ("eps_list", _floats), "xi": ("ansatz_xi", _floats),
                       "Lambda": ("ansatz_Lambda", _floats), "alpha": ("alpha", _FLOAT)},
    "cli_io": {"out": ("out", _str), "threads": ("threads", _INT), "seed": ("seed", _INT)},
}

# keys that do not change any numerical output
_UNHASHED = {"out", "threads"}


@dataclass
class ExperimentConfig:
    n: int = 1
    s: float = 0.3
    sign: str = "subcritical"
    tol: float = 1e-10
    kind: str = "restricted"
    domain: str = "interval"
    lo: float = -1.0
    hi: float = 1.0
    holes: tuple = ()
    radius: float = 1.0
    center: tuple = ()
    roi: float = 1.0
    N: int = 1000
    xi_samples: tuple = (0.0, 0.5)
    robin_points: tuple = (0.0, 0.2, 0.4, 0.6, 0.8, 0.9)
    table: str = "ball"
    m: int = 1
    xi_seeds: tuple = (0.1,)
    Lambda_seeds: tuple = (1.0,)
    xi_range: tuple = (-0.8, 0.8)
    xi_count: int = 9
    Lambda_range: tuple = (0.5, 3.0)
    Lambda_count: int = 6
    delta: float = 0.05
    mu: float = 1e-3
    trials: int = 20
    eps_list: tuple = (0.04, 0.02)
    ansatz_xi: tuple = (0.0,)
    ansatz_Lambda: tuple = ()
    alpha: float = 0.9
    out: str = "out"
    threads: int = 1
    seed: int = 0
    source: str = field(default="<defaults>", compare=False)

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------------
    def validate(self):
        self.params()
        if self.kind not in KINDS:
            raise ConfigurationError(f"discrete_operators.kind must be one of {KINDS}, got {self.kind!r}")
        if self.domain not in DOMAIN_KINDS:
            raise ConfigurationError(f"discrete_operators.domain must be one of {DOMAIN_KINDS}, got {self.domain!r}")
        if self.table not in TABLES:
            raise ConfigurationError(f"reduced_energy.table must be one of {TABLES}, got {self.table!r}")
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if self.N < 8:
            raise ConfigurationError("grid resolution N must be at least 8")
        if self.m < 1:
            raise ConfigurationError("m must be a positive integer")
        if self.threads < 1:
            raise ConfigurationError("threads must be at least 1")
        for name in ("xi_range", "Lambda_range"):
            r = getattr(self, name)
            if len(r) != 2 or not r[0] < r[1]:
                raise ConfigurationError(f"reduced_energy.{name} must be two increasing numbers")
        if self.Lambda_range[0] <= 0:
            raise ConfigurationError("Lambda_range must be positive")
        if min(self.xi_count, self.Lambda_count) < 1:
            raise ConfigurationError("scan counts must be positive")
        if any(not 0 < e < 1 for e in self.eps_list):
            raise ConfigurationError("every entry of eps_list must lie in (0,1)")
        if self.ansatz_Lambda and len(self.ansatz_Lambda) != len(self.ansatz_xi):
            raise ConfigurationError("bubble_machine.xi and bubble_machine.Lambda differ in length")
        if len(self.Lambda_seeds) not in (1, self.m) or len(self.xi_seeds) % (self.m * self.n):
            raise ConfigurationError("reduced_energy seeds do not match m and n")
        self.domain_spec()

    def params(self) -> FracParams:
        if self.sign not in _SIGNS:
            raise ConfigurationError(f"sign must be one of {sorted(_SIGNS)}, got {self.sign!r}")
        return FracParams(self.n, self.s, self.sign)

    def domain_spec(self) -> DomainSpec:
        if self.domain == "interval":
            return DomainSpec.interval(self.lo, self.hi, holes=list(self.holes))
        if self.domain == "ball":
            return DomainSpec.ball(self.n, center=list(self.center) or None, radius=self.radius)
        if self.domain == "truncated-half-space":
            return DomainSpec.truncated_half_space(self.n, self.radius, roi=self.roi)
        return DomainSpec.rectangle(self.lo, self.hi, self.lo, self.hi)

    # ------------------------------------------------------------------
    def hashed_fields(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in _UNHASHED | {"source"}}
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def config_hash(self) -> str:
        blob = json.dumps(self.hashed_fields(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("source")
        return d


def _attr_map():
    return {attr: (sec, key, fn) for sec, keys in _SCHEMA.items() for key, (attr, fn) in keys.items()}


def load_config(path: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Parse ``path`` (may be None) and apply ``overrides`` (attribute -> value)."""
    values = {}
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except FileNotFoundError:
            raise ConfigurationError(f"config file {path!r} not found") from None
        except configparser.Error as exc:
            raise ConfigurationError(f"cannot parse {path!r}: {exc}") from None
        for sec in cp.sections():
            if sec not in _SCHEMA:
                raise ConfigurationError(f"unknown section [{sec}]; expected one of {sorted(_SCHEMA)}")
            for key, raw in cp.items(sec):
                if key not in _SCHEMA[sec]:
                    raise ConfigurationError(f"unknown key {sec}.{key}; expected one of {sorted(_SCHEMA[sec])}")
                attr, fn = _SCHEMA[sec][key]
                try:
                    values[attr] = fn(raw)
                except ValueError as exc:
                    raise ConfigurationError(f"bad value for {sec}.{key}: {exc}") from None
    for k, v in (overrides or {}).items():
        if v is not None:
            if k not in _attr_map():
                raise ConfigurationError(f"unknown override {k!r}")
            values[k] = v
    return ExperimentConfig(**values, source=path or "<defaults>")
