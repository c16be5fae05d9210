"""Count distributions used as the Poisson null and as alternatives.

Every family is described by an immutable :class:`DistSpec`.  Evaluation
(pmf, cdf, mean, pgf and its derivative) and inversion sampling are plain
functions of the spec, so they are safe to call from any thread.

Parametrizations
~~~~~~~~~~~~~~~~
``negbinomial(k, p)``
    failures before the k-th success, success probability ``p``.
``genhermite(a, b, m)``
    ``N1 + m * N2`` with ``N1 ~ Poisson(a)``, ``N2 ~ Poisson(b)``; pgf
    ``exp(a(t-1) + b(t^m - 1))``.
``discreteweibull(q, beta)``
    survival form ``P(X >= x) = q ** (x ** beta)``.
``logseries(theta)``
    support ``{1, 2, ...}``; ``logseriesshifted`` is the same minus one.
``genpoisson(mu1, mu2)``
    Consul-Jain, ``mu1 (mu1 + mu2 x)^(x-1) exp(-mu1 - mu2 x) / x!``.
``mixpoisson(mu1, mu2)``
    equal-weight mixture of two Poisson laws.
``zeroinflated(<inner>)``
    the last parameter is the extra zero mass ``w``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property, lru_cache

import numpy as np
from scipy import special, stats

__all__ = [
    "CountSample",
    "DistSpec",
    "Family",
    "ParameterError",
    "SpecParseError",
    "cdf",
    "inverse_cdf",
    "mean",
    "parse_spec",
    "pgf",
    "pgf_closed",
    "pgf_deriv",
    "pgf_deriv_closed",
    "pgf_deriv_series",
    "pgf_series",
    "pmf",
    "sample",
    "support_table",
]

TAIL_MASS = 1e-12


class ParameterError(ValueError):
    """A distribution parameter lies outside its domain."""


class SpecParseError(ValueError):
    """A distribution spec string could not be parsed."""


class Family(str, Enum):
    POISSON = "poisson"
    BINOMIAL = "binomial"
    NEGBINOMIAL = "negbinomial"
    GENHERMITE = "genhermite"
    DISCRETEUNIFORM = "discreteuniform"
    DISCRETEWEIBULL = "discreteweibull"
    LOGSERIES = "logseries"
    LOGSERIESSHIFTED = "logseriesshifted"
    GENPOISSON = "genpoisson"
    MIXPOISSON = "mixpoisson"
    ZEROINFLATED = "zeroinflated"


_PARAM_NAMES: dict[Family, tuple[str, ...]] = {
    Family.POISSON: ("mu",),
    Family.BINOMIAL: ("k", "p"),
    Family.NEGBINOMIAL: ("k", "p"),
    Family.GENHERMITE: ("a", "b", "m"),
    Family.DISCRETEUNIFORM: ("nu",),
    Family.DISCRETEWEIBULL: ("q", "beta"),
    Family.LOGSERIES: ("theta",),
    Family.LOGSERIESSHIFTED: ("theta",),
    Family.GENPOISSON: ("mu1", "mu2"),
    Family.MIXPOISSON: ("mu1", "mu2"),
    Family.ZEROINFLATED: ("w",),
}

_SHORT: dict[Family, str] = {
    Family.POISSON: "P",
    Family.BINOMIAL: "B",
    Family.NEGBINOMIAL: "NB",
    Family.GENHERMITE: "GH",
    Family.DISCRETEUNIFORM: "DU",
    Family.DISCRETEWEIBULL: "DW",
    Family.LOGSERIES: "LS",
    Family.LOGSERIESSHIFTED: "LS-",
    Family.GENPOISSON: "GP",
    Family.MIXPOISSON: "MP",
}

_ALIASES: dict[str, Family] = {f.value: f for f in Family if f is not Family.ZEROINFLATED}
_ALIASES.update({s.lower(): f for f, s in _SHORT.items()})
_ALIASES["pi"] = Family.POISSON


def _fmt_num(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2**53 else repr(x)


@dataclass(frozen=True)
class DistSpec:
    """A count distribution family together with its parameters.

    ``params`` are stored as floats; integer-valued parameters (binomial
    size, hermite order, uniform bound) are checked for integrality.  For
    ``Family.ZEROINFLATED`` the inner law lives in ``inner`` and
    ``params == (w,)``.
    """

    family: Family
    params: tuple[float, ...]
    inner: DistSpec | None = field(default=None)

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        _validate(self)

    # -- constructors -------------------------------------------------
    @classmethod
    def poisson(cls, mu: float) -> DistSpec:
        return cls(Family.POISSON, (mu,))

    @classmethod
    def binomial(cls, k: int, p: float) -> DistSpec:
        return cls(Family.BINOMIAL, (k, p))

    @classmethod
    def negbinomial(cls, k: float, p: float) -> DistSpec:
        return cls(Family.NEGBINOMIAL, (k, p))

    @classmethod
    def genhermite(cls, a: float, b: float, m: int) -> DistSpec:
        return cls(Family.GENHERMITE, (a, b, m))

    @classmethod
    def discreteuniform(cls, nu: int) -> DistSpec:
        return cls(Family.DISCRETEUNIFORM, (nu,))

    @classmethod
    def discreteweibull(cls, q: float, beta: float) -> DistSpec:
        return cls(Family.DISCRETEWEIBULL, (q, beta))

    @classmethod
    def logseries(cls, theta: float) -> DistSpec:
        return cls(Family.LOGSERIES, (theta,))

    @classmethod
    def logseriesshifted(cls, theta: float) -> DistSpec:
        return cls(Family.LOGSERIESSHIFTED, (theta,))

    @classmethod
    def genpoisson(cls, mu1: float, mu2: float) -> DistSpec:
        return cls(Family.GENPOISSON, (mu1, mu2))

    @classmethod
    def mixpoisson(cls, mu1: float, mu2: float) -> DistSpec:
        return cls(Family.MIXPOISSON, (mu1, mu2))

    @classmethod
    def zeroinflated(cls, inner: DistSpec, w: float) -> DistSpec:
        return cls(Family.ZEROINFLATED, (w,), inner)

    # -- presentation ---------------------------------------------------
    @property
    def all_params(self) -> tuple[float, ...]:
        """Parameters in display order (inner parameters first, then ``w``)."""
        if self.inner is not None:
            return self.inner.all_params + self.params
        return self.params

    @property
    def family_name(self) -> str:
        if self.inner is not None:
            return f"zeroinflated({self.inner.family_name})"
        return self.family.value

    @property
    def params_str(self) -> str:
        return ",".join(_fmt_num(p) for p in self.all_params)

    @property
    def label(self) -> str:
        """Short display label, e.g. ``NB(1,0.5)`` or ``ZP(1,0.2)``."""
        return f"{self._short}({self.params_str})"

    @property
    def _short(self) -> str:
        if self.inner is not None:
            return "Z" + self.inner._short
        return _SHORT[self.family]

    def __str__(self) -> str:
        return f"{self.family_name}:{self.params_str}"

    @property
    def integer_support_max(self) -> int | None:
        """Largest support point for finite-support laws, else ``None``."""
        if self.family is Family.BINOMIAL:
            return int(self.params[0])
        if self.family is Family.DISCRETEUNIFORM:
            return int(self.params[0])
        if self.inner is not None:
            return self.inner.integer_support_max
        return None


def _validate(spec: DistSpec) -> None:
    fam = spec.family
    names = _PARAM_NAMES[fam]
    if len(spec.params) != len(names):
        raise ParameterError(
            f"{fam.value} takes {len(names)} parameter(s) {names}, got {len(spec.params)}"
        )
    if any(not math.isfinite(p) for p in spec.params):
        raise ParameterError(f"{fam.value}: parameters must be finite")
    if (fam is Family.ZEROINFLATED) != (spec.inner is not None):
        raise ParameterError("inner distribution is required exactly for zeroinflated")
    val = dict(zip(names, spec.params))

    def positive(*keys: str) -> None:
        for key in keys:
            if not val[key] > 0:
                raise ParameterError(f"{fam.value}: {key} must be > 0, got {val[key]}")

    def unit(*keys: str) -> None:
        for key in keys:
            if not 0 < val[key] < 1:
                raise ParameterError(f"{fam.value}: {key} must lie in (0,1), got {val[key]}")

    def integer(key: str, low: int) -> None:
        if not (val[key].is_integer() and val[key] >= low):
            raise ParameterError(f"{fam.value}: {key} must be an integer >= {low}, got {val[key]}")

    if fam is Family.POISSON:
        positive("mu")
    elif fam is Family.BINOMIAL:
        integer("k", 1)
        unit("p")
    elif fam is Family.NEGBINOMIAL:
        positive("k")
        unit("p")
    elif fam is Family.GENHERMITE:
        positive("a", "b")
        integer("m", 1)
    elif fam is Family.DISCRETEUNIFORM:
        integer("nu", 1)
    elif fam is Family.DISCRETEWEIBULL:
        unit("q")
        positive("beta")
    elif fam in (Family.LOGSERIES, Family.LOGSERIESSHIFTED):
        unit("theta")
    elif fam is Family.GENPOISSON:
        positive("mu1")
        if not 0 <= val["mu2"] < 1:
            raise ParameterError(f"genpoisson: mu2 must lie in [0,1), got {val['mu2']}")
    elif fam is Family.MIXPOISSON:
        positive("mu1", "mu2")
    elif fam is Family.ZEROINFLATED:
        unit("w")
        if spec.inner.family is Family.ZEROINFLATED:
            raise ParameterError("nested zero inflation is not supported")


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_COLON_RE = re.compile(r"^\s*([A-Za-z][\w\-()]*)\s*:\s*(.*?)\s*$")
_LABEL_RE = re.compile(r"^\s*([A-Za-z][\w\-]*)\s*\(\s*(.*?)\s*\)\s*$")
_ZI_RE = re.compile(r"^zeroinflated\((.+)\)$")


def _resolve_family(token: str) -> tuple[Family, Family | None]:
    """Return ``(family, inner_family)`` for a family token."""
    name = token.strip().lower()
    m = _ZI_RE.match(name)
    if m:
        inner = _ALIASES.get(m.group(1))
        if inner is None:
            raise SpecParseError(f"unknown family {m.group(1)!r}")
        return Family.ZEROINFLATED, inner
    if name in _ALIASES:
        return _ALIASES[name], None
    if name.startswith("z") and name[1:] in _ALIASES:
        return Family.ZEROINFLATED, _ALIASES[name[1:]]
    raise SpecParseError(f"unknown family {token.strip()!r}")


def parse_spec(text: str) -> DistSpec:
    """Parse ``family:p1,p2,...`` (or a label such as ``NB(1,0.5)``).

    Family names are case-insensitive and accept the short labels as
    aliases.  Zero-inflated laws are written ``zeroinflated(binomial):5,0.9,0.2``
    or ``zb:5,0.9,0.2``; the last number is the zero weight.
    """
    m = _COLON_RE.match(text) or _LABEL_RE.match(text)
    if not m:
        raise SpecParseError(f"malformed distribution spec {text!r}; expected family:p1,p2,...")
    family, inner = _resolve_family(m.group(1))
    raw = m.group(2)
    tokens = [tok.strip() for tok in raw.split(",")] if raw.strip() else []
    values = []
    for tok in tokens:
        try:
            values.append(float(tok))
        except ValueError:
            raise SpecParseError(f"bad parameter {tok!r} in {text!r}") from None
    try:
        if inner is None:
            return DistSpec(family, tuple(values))
        if not values:
            raise SpecParseError(f"zero-inflated spec {text!r} needs a weight")
        return DistSpec.zeroinflated(DistSpec(inner, tuple(values[:-1])), values[-1])
    except ParameterError as exc:
        raise SpecParseError(f"{text!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# pmf / cdf / mean
# ---------------------------------------------------------------------------


def _poisson_pmf(x: np.ndarray, mu: float) -> np.ndarray:
    return stats.poisson.pmf(x, mu)


def _pmf_array(spec: DistSpec, x: np.ndarray) -> np.ndarray:
    fam, par = spec.family, spec.params
    out = np.zeros(x.shape, dtype=float)
    ok = x >= 0
    xs = x[ok]
    if fam is Family.POISSON:
        vals = _poisson_pmf(xs, par[0])
    elif fam is Family.BINOMIAL:
        vals = stats.binom.pmf(xs, int(par[0]), par[1])
    elif fam is Family.NEGBINOMIAL:
        vals = stats.nbinom.pmf(xs, par[0], par[1])
    elif fam is Family.GENHERMITE:
        a, b, m = par[0], par[1], int(par[2])
        vals = np.zeros(xs.shape)
        top = int(xs.max()) // m if xs.size else -1
        for j in range(top + 1):
            rest = xs - m * j
            vals += np.where(rest >= 0, _poisson_pmf(np.maximum(rest, 0), a), 0.0) * _poisson_pmf(j, b)
    elif fam is Family.DISCRETEUNIFORM:
        nu = int(par[0])
        vals = np.where(xs <= nu, 1.0 / (nu + 1), 0.0)
    elif fam is Family.DISCRETEWEIBULL:
        q, beta = par
        xf = xs.astype(float)
        vals = q ** (xf**beta) - q ** ((xf + 1) ** beta)
    elif fam is Family.LOGSERIES:
        vals = stats.logser.pmf(xs, par[0])
    elif fam is Family.LOGSERIESSHIFTED:
        vals = stats.logser.pmf(xs + 1, par[0])
    elif fam is Family.GENPOISSON:
        mu1, mu2 = par
        xf = xs.astype(float)
        with np.errstate(divide="ignore"):
            logp = (
                math.log(mu1)
                + (xf - 1) * np.log(mu1 + mu2 * xf)
                - mu1
                - mu2 * xf
                - special.gammaln(xf + 1)
            )
        vals = np.exp(logp)
    elif fam is Family.MIXPOISSON:
        vals = 0.5 * _poisson_pmf(xs, par[0]) + 0.5 * _poisson_pmf(xs, par[1])
    else:
        w = par[0]
        vals = (1 - w) * _pmf_array(spec.inner, xs) + np.where(xs == 0, w, 0.0)
    out[ok] = vals
    return out


def _as_int_array(x) -> np.ndarray:
    arr = np.asarray(x)
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr) & (arr == np.floor(arr))):
            raise ValueError("support points must be integers")
        arr = arr.astype(np.int64)
    elif arr.dtype.kind not in "iu":
        raise TypeError(f"expected integer support points, got dtype {arr.dtype}")
    return arr.astype(np.int64)


def pmf(spec: DistSpec, x):
    """``P(X = x)``; accepts an integer or an integer array."""
    arr = _as_int_array(x)
    out = _pmf_array(spec, np.atleast_1d(arr))
    return float(out[0]) if arr.ndim == 0 else out


@lru_cache(maxsize=512)
def _table(spec: DistSpec) -> tuple[np.ndarray, np.ndarray]:
    top = spec.integer_support_max
    if top is not None:
        probs = _pmf_array(spec, np.arange(top + 1))
        cum = np.minimum(np.cumsum(probs), 1.0)
        cum[-1] = 1.0
        return probs, cum
    size = 64
    while True:
        probs = _pmf_array(spec, np.arange(size))
        cum = np.cumsum(probs)
        hit = np.nonzero(cum >= 1.0 - TAIL_MASS)[0]
        if hit.size:
            stop = int(hit[0]) + 1
            probs, cum = probs[:stop], np.minimum(cum[:stop], 1.0)
            probs.setflags(write=False)
            cum.setflags(write=False)
            return probs, cum
        if size > 1 << 24:
            raise ParameterError(f"{spec}: tail mass does not fall below {TAIL_MASS}")
        size *= 4


def support_table(spec: DistSpec) -> tuple[np.ndarray, np.ndarray]:
    """pmf and cdf on ``0..H`` where the mass beyond ``H`` is below 1e-12.

    Finite-support laws cover their full support and end with cdf exactly 1.
    The arrays are shared and read-only.
    """
    return _table(spec)


def cdf(spec: DistSpec, k) -> float:
    """``P(X <= k)`` by direct summation of the pmf."""
    k = int(k)
    if k < 0:
        return 0.0
    top = spec.integer_support_max
    if top is not None and k >= top:
        return 1.0
    probs, cum = _table(spec)
    if k < cum.size:
        return float(cum[k])
    return float(min(1.0, cum[-1] + np.sum(_pmf_array(spec, np.arange(cum.size, k + 1)))))


def _lsmean(theta: float) -> float:
    return -theta / ((1 - theta) * math.log1p(-theta))


def mean(spec: DistSpec) -> float:
    """Mean of the distribution, closed form where one exists."""
    fam, par = spec.family, spec.params
    if fam is Family.POISSON:
        return par[0]
    if fam is Family.BINOMIAL:
        return par[0] * par[1]
    if fam is Family.NEGBINOMIAL:
        return par[0] * (1 - par[1]) / par[1]
    if fam is Family.GENHERMITE:
        return par[0] + par[2] * par[1]
    if fam is Family.DISCRETEUNIFORM:
        return par[0] / 2
    if fam is Family.LOGSERIES:
        return _lsmean(par[0])
    if fam is Family.LOGSERIESSHIFTED:
        return _lsmean(par[0]) - 1
    if fam is Family.GENPOISSON:
        return par[0] / (1 - par[1])
    if fam is Family.MIXPOISSON:
        return (par[0] + par[1]) / 2
    if fam is Family.ZEROINFLATED:
        return (1 - par[0]) * mean(spec.inner)
    probs, _ = _table(spec)
    return float(np.dot(np.arange(probs.size), probs))


# ---------------------------------------------------------------------------
# probability generating function
# ---------------------------------------------------------------------------


def pgf_series(spec: DistSpec, t):
    """``sum_x pmf(x) t^x`` over the truncation horizon."""
    probs, _ = _table(spec)
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    powers = tt[:, None] ** np.arange(probs.size)[None, :]
    out = powers @ probs
    return float(out[0]) if np.ndim(t) == 0 else out


def pgf_deriv_series(spec: DistSpec, t):
    """``sum_x x pmf(x) t^(x-1)`` over the truncation horizon."""
    probs, _ = _table(spec)
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    x = np.arange(1, probs.size)
    powers = tt[:, None] ** (x - 1)[None, :]
    out = powers @ (x * probs[1:])
    return float(out[0]) if np.ndim(t) == 0 else out


def pgf_closed(spec: DistSpec, t):
    """Closed-form pgf, or ``None`` for families without one."""
    fam, par = spec.family, spec.params
    t = np.asarray(t, dtype=float)
    if fam is Family.POISSON:
        return np.exp(par[0] * (t - 1))
    if fam is Family.BINOMIAL:
        return (1 - par[1] + par[1] * t) ** par[0]
    if fam is Family.NEGBINOMIAL:
        k, p = par
        return (p / (1 - (1 - p) * t)) ** k
    if fam is Family.GENHERMITE:
        a, b, m = par
        return np.exp(a * (t - 1) + b * (t**m - 1))
    if fam is Family.LOGSERIES:
        return np.log1p(-par[0] * t) / math.log1p(-par[0])
    if fam is Family.LOGSERIESSHIFTED:
        theta = par[0]
        safe = np.where(t > 0, t, 1.0)
        ratio = np.log1p(-theta * safe) / (safe * math.log1p(-theta))
        return np.where(t > 0, ratio, -theta / math.log1p(-theta))
    if fam is Family.MIXPOISSON:
        return 0.5 * np.exp(par[0] * (t - 1)) + 0.5 * np.exp(par[1] * (t - 1))
    if fam is Family.ZEROINFLATED:
        inner = pgf_closed(spec.inner, t)
        if inner is None:
            return None
        return par[0] + (1 - par[0]) * inner
    return None


def pgf_deriv_closed(spec: DistSpec, t):
    """Closed-form pgf derivative, or ``None`` where unavailable."""
    fam, par = spec.family, spec.params
    t = np.asarray(t, dtype=float)
    if fam is Family.POISSON:
        return par[0] * np.exp(par[0] * (t - 1))
    if fam is Family.BINOMIAL:
        k, p = par
        return k * p * (1 - p + p * t) ** (k - 1)
    if fam is Family.NEGBINOMIAL:
        k, p = par
        return k * (1 - p) * p**k * (1 - (1 - p) * t) ** (-k - 1)
    if fam is Family.GENHERMITE:
        a, b, m = par
        return (a + b * m * t ** (m - 1)) * np.exp(a * (t - 1) + b * (t**m - 1))
    if fam is Family.LOGSERIES:
        theta = par[0]
        return -theta / ((1 - theta * t) * math.log1p(-theta))
    if fam is Family.MIXPOISSON:
        return 0.5 * par[0] * np.exp(par[0] * (t - 1)) + 0.5 * par[1] * np.exp(par[1] * (t - 1))
    if fam is Family.ZEROINFLATED:
        inner = pgf_deriv_closed(spec.inner, t)
        if inner is None:
            return None
        return (1 - par[0]) * inner
    return None


def _scalar_or_array(value, t):
    return float(value) if np.ndim(t) == 0 else np.asarray(value, dtype=float)


def pgf(spec: DistSpec, t):
    """``E[t^X]`` for ``t`` in [0, 1]."""
    closed = pgf_closed(spec, t)
    if closed is not None:
        return _scalar_or_array(closed, t)
    return pgf_series(spec, t)


def pgf_deriv(spec: DistSpec, t):
    """Derivative of the pgf for ``t`` in [0, 1]."""
    closed = pgf_deriv_closed(spec, t)
    if closed is not None:
        return _scalar_or_array(closed, t)
    return pgf_deriv_series(spec, t)


# ---------------------------------------------------------------------------
# Samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CountSample:
    """Observed counts with cached mean and empirical cdf."""

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = _as_int_array(np.asarray(self.values).ravel())
        if vals.size == 0:
            raise ValueError("a sample needs at least one observation")
        if vals.min() < 0:
            raise ValueError("counts must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.n

    @cached_property
    def total(self) -> int:
        return sum(int(v) for v in self.values)

    @cached_property
    def mean(self) -> float:
        return self.total / self.n

    @cached_property
    def _sorted(self) -> np.ndarray:
        return np.sort(self.values)

    def ecdf(self, k) -> float:
        """Fraction of observations ``<= k``."""
        return int(np.searchsorted(self._sorted, k, side="right")) / self.n


def inverse_cdf(spec: DistSpec, u) -> np.ndarray:
    """Smallest ``x`` with ``cdf(x) >= u``, elementwise.

    ``u == 0`` maps to the smallest support point.
    """
    u = np.asarray(u, dtype=float)
    probs, cum = _table(spec)
    u = np.where(u > 0, u, np.nextafter(0.0, 1.0))
    x = np.searchsorted(cum, u, side="left").astype(np.int64)
    beyond = x >= cum.size
    if np.any(beyond):
        x[beyond] = [_walk_tail(spec, cum.size, float(cum[-1]), float(v)) for v in u[beyond]]
    return x


def _walk_tail(spec: DistSpec, start: int, acc: float, u: float) -> int:
    x = start
    while True:
        acc += float(_pmf_array(spec, np.array([x]))[0])
        if acc >= u or x > start + 10**7:
            return x
        x += 1


def sample(spec: DistSpec, n: int, stream: np.random.Generator) -> CountSample:
    """Draw ``n`` i.i.d. values by cdf inversion, one uniform per draw."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return CountSample(inverse_cdf(spec, stream.random(n)))
