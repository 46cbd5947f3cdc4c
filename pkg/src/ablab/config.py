"""Experiment configuration: nested frozen dataclasses with a JSON round trip."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .errors import ConfigInvalid
from .numberfield import AlgebraicNumber, real_root


def _frac(v):
    return Fraction(v) if isinstance(v, (int, str)) else Fraction(str(v))


@dataclass(frozen=True)
class LambdaSpec:
    """Coupling given as a float or as (minimal polynomial, isolating interval).

    Polynomial coefficients are listed from the constant term upwards;
    interval endpoints may be numbers or rational strings such as ``"1/5"``.
    """

    value: float | None = None
    min_poly: tuple | None = None
    interval: tuple | None = None

    def algebraic(self) -> AlgebraicNumber:
        if self.min_poly is not None:
            return real_root(list(self.min_poly), tuple(_frac(v) for v in self.interval))
        x = _frac(self.value)
        return real_root([-x.numerator, x.denominator], (x - 1, x + 1))

    def __float__(self):
        if self.min_poly is not None:
            return self.algebraic().float_value
        return float(self.value)


@dataclass(frozen=True)
class GridSpec:
    lo: float = -1.5
    hi: float = 1.5
    count: int = 31


@dataclass(frozen=True)
class OperatorSpec:
    E: float = 0.5
    n_max: int = 256
    M: int | None = 4096
    K_list: tuple = (2, 4, 8, 16, 32, 64)
    frame: str = "tilde"
    variant: str = "plain"
    expander_K: int = 8
    expander_n_max: int = 64


@dataclass(frozen=True)
class MCSpec:
    steps: int = 1_000_000
    samples: int = 100
    sites: int = 4000
    burn_in: int = 1000
    ell: int = 40
    op_n_max: int = 128
    window_step: float = 0.005


@dataclass(frozen=True)
class CertSpec:
    ell_max: int = 6
    mu_mode: str = "entry_two_lambda"


@dataclass(frozen=True)
class SmoothingSpec:
    ks: tuple = (3, 4, 5)
    m_max: int = 60
    ell: int = 20
    deviation_ell: int = 40
    n_max: int = 256
    derivative_n_max: int = 128


@dataclass(frozen=True)
class MeasureSpec:
    n_max: int = 256
    n_samples: int = 1_000_000
    compare_n: int = 32
    frame: str = "raw"
    r: int = 1


@dataclass(frozen=True)
class BernoulliSpec:
    lambdas: tuple = (0.5, 0.6180339887498949)
    k_max: int = 20
    n_max: int = 256


@dataclass(frozen=True)
class ExperimentConfig:
    lambda_spec: LambdaSpec = field(default_factory=lambda: LambdaSpec(None, (-1, 4, 1), ("1/5", "3/10")))
    C: float = 3.0
    tau: float = 0.25
    delta: float = 0.1
    grid: GridSpec = field(default_factory=GridSpec)
    operator: OperatorSpec = field(default_factory=OperatorSpec)
    mc: MCSpec = field(default_factory=MCSpec)
    cert: CertSpec = field(default_factory=CertSpec)
    smoothing: SmoothingSpec = field(default_factory=SmoothingSpec)
    measure: MeasureSpec = field(default_factory=MeasureSpec)
    bernoulli: BernoulliSpec = field(default_factory=BernoulliSpec)
    seed: int = 0
    threads: int = 1
    outdir: str = "out"

    @property
    def lam(self) -> float:
        return float(self.lambda_spec)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return _to_jsonable(dataclasses.asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        errors: dict = {}
        cfg = _build(cls, d, "", errors)
        try:
            for k, v in cfg.problems().items():
                errors.setdefault(k, v)
        except (TypeError, ValueError):
            pass  # type errors already recorded field by field
        if errors:
            raise ConfigInvalid("invalid config", errors)
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid("config is not valid JSON", {"<root>": str(exc)}) from None
        if not isinstance(d, dict):
            raise ConfigInvalid("config must be a JSON object", {"<root>": type(d).__name__})
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())

    # -- validation ---------------------------------------------------------

    def problems(self) -> dict:
        p = {}
        ls = self.lambda_spec
        if (ls.value is None) == (ls.min_poly is None):
            p["lambda_spec"] = "give exactly one of value or min_poly"
        elif ls.min_poly is not None:
            if ls.interval is None or len(ls.interval) != 2:
                p["lambda_spec.interval"] = "isolating interval (lo, hi) required with min_poly"
            else:
                try:
                    lam = ls.algebraic().float_value
                    if not 0 <= lam < 1:
                        p["lambda_spec"] = f"lambda = {lam} outside [0, 1)"
                except Exception as exc:  # any numberfield error is a config error here
                    p["lambda_spec"] = str(exc)
        elif not 0 <= ls.value < 1:
            p["lambda_spec.value"] = "lambda must lie in [0, 1)"
        if not 0 < self.tau < 0.5:
            p["tau"] = "tau must lie in (0, 1/2)"
        if not self.delta > 0:
            p["delta"] = "delta must be positive"
        if not self.C > 0:
            p["C"] = "C must be positive"
        g = self.grid
        lim = 2 - self.delta
        if g.count < 1:
            p["grid.count"] = "count must be >= 1"
        if g.lo > g.hi or (g.count > 1 and g.lo == g.hi):
            p["grid"] = "need lo < hi"
        if g.lo < -lim or g.hi > lim:
            p["grid"] = f"grid must lie within [-{lim}, {lim}]"
        if self.operator.frame not in ("raw", "tilde"):
            p["operator.frame"] = "frame must be raw or tilde"
        if self.operator.variant not in ("plain", "unitary"):
            p["operator.variant"] = "variant must be plain or unitary"
        if self.measure.frame not in ("raw", "tilde"):
            p["measure.frame"] = "frame must be raw or tilde"
        if self.mc.steps < 1000:
            p["mc.steps"] = "steps must be >= 1000"
        if self.mc.sites < 100:
            p["mc.sites"] = "sites must be >= 100"
        if self.mc.samples < 2:
            p["mc.samples"] = "samples must be >= 2"
        if self.cert.mu_mode not in ("entry_lambda", "entry_two_lambda"):
            p["cert.mu_mode"] = "mu_mode must be entry_lambda or entry_two_lambda"
        if not 1 <= self.cert.ell_max <= 12:
            p["cert.ell_max"] = "ell_max must lie in 1..12"
        if any(not 0 < x < 1 for x in self.bernoulli.lambdas):
            p["bernoulli.lambdas"] = "each lambda must lie in (0, 1)"
        if self.threads < 1:
            p["threads"] = "threads must be >= 1"
        if self.seed < 0 or self.seed >= 2**64:
            p["seed"] = "seed must be an unsigned 64-bit integer"
        return p


def _to_jsonable(x):
    if isinstance(x, dict):
        return {k: _to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_to_jsonable(v) for v in x]
    return x


def _tuplify(x):
    return tuple(_tuplify(v) for v in x) if isinstance(x, list) else x


def _build(cls, d, path, errors):
    if not isinstance(d, dict):
        errors[path or "<root>"] = f"expected an object, got {type(d).__name__}"
        return cls()
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, val in d.items():
        where = f"{path}.{key}" if path else key
        if key not in known:
            errors[where] = "unknown field"
            continue
        f = known[key]
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if dataclasses.is_dataclass(default) or (key == "lambda_spec"):
            sub = type(default) if dataclasses.is_dataclass(default) else LambdaSpec
            kwargs[key] = _build(sub, val, where, errors)
            continue
        before = len(errors)
        value = _coerce(val, default, where, errors)
        if len(errors) == before:
            kwargs[key] = value  # badly typed fields keep defaults so other checks still run
    return cls(**kwargs)


def _coerce(val, default, where, errors):
    if val is None:
        return None
    if isinstance(default, bool):
        if not isinstance(val, bool):
            errors[where] = "expected a boolean"
        return val
    if isinstance(default, int) and default is not None:
        if isinstance(val, bool) or not isinstance(val, int):
            errors[where] = "expected an integer"
        return val
    if isinstance(default, float):
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            errors[where] = "expected a number"
            return val
        return float(val)
    if isinstance(default, str):
        if not isinstance(val, str):
            errors[where] = "expected a string"
        return val
    return _tuplify(val)
