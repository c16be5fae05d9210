"""Poissonity tests: the ``Z_{n,k}`` family, the data-driven ``W_n`` and Fisher's index.

Every test is computed by a vectorized kernel over a ``(reps, n)`` matrix of
counts; the single-sample functions (:func:`z_stat`, :func:`w_stat`,
:func:`fisher_id`) are thin wrappers around the same kernels so the Monte
Carlo engine and the CLI share one code path.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from scipy import special

from .dist import CountSample

__all__ = [
    "BatchResult",
    "TestResult",
    "batch_test",
    "chisq_cdf",
    "chisq_quantile",
    "f_k",
    "fisher_id",
    "normal_cdf",
    "normal_quantile",
    "parse_method",
    "poisson_terms",
    "select_k",
    "select_k_batch",
    "sigma_sq",
    "sigma_tilde_sq",
    "t_hat",
    "w_stat",
    "z_stat",
]

# Extended precision where the platform has it; float64 elsewhere.
_LD = np.longdouble
_E = math.e


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------


def normal_cdf(x):
    return special.ndtr(x)


def normal_quantile(p):
    """Inverse standard normal cdf."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("normal_quantile needs p in (0, 1)")
    out = special.ndtri(p)
    return float(out) if out.ndim == 0 else out


def chisq_cdf(x, df):
    """Chi-square cdf as a regularized lower incomplete gamma."""
    return special.gammainc(np.asarray(df, dtype=float) / 2, np.maximum(np.asarray(x, dtype=float), 0) / 2)


def chisq_sf(x, df):
    return special.gammaincc(np.asarray(df, dtype=float) / 2, np.maximum(np.asarray(x, dtype=float), 0) / 2)


def chisq_quantile(p, df):
    """Inverse chi-square cdf with ``df`` degrees of freedom."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p >= 1)):
        raise ValueError("chisq_quantile needs p in [0, 1)")
    if np.any(np.asarray(df) <= 0):
        raise ValueError("df must be positive")
    out = 2.0 * special.gammaincinv(np.asarray(df, dtype=float) / 2, p)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Poisson partial sums
# ---------------------------------------------------------------------------


def poisson_terms(mu, upto: int) -> np.ndarray:
    """Matrix of ``exp(-mu) mu^j / j!`` for ``j = 0..upto`` (one row per mu).

    Built by the multiplicative recurrence in increasing ``j``.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=_LD))
    out = np.empty((mu.size, upto + 1), dtype=_LD)
    term = np.exp(-mu)
    out[:, 0] = term
    for j in range(1, upto + 1):
        term = term * mu / j
        out[:, j] = term
    return out


def _horizon(mu_max: float, k_max: int) -> int:
    # beyond this index the Poisson tail is far below double precision
    return int(max(k_max + 2, math.ceil(mu_max + 12.0 * math.sqrt(mu_max) + 40)))


def _cdf_tail(mu: np.ndarray, k_max: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``f_k(mu)``, ``1 - f_k(mu)`` and ``P(X = k)`` for all ``k <= k_max``.

    The upper tail is summed directly, so it stays accurate where
    ``f_k`` is close to one.
    """
    terms = poisson_terms(mu, _horizon(float(np.max(mu, initial=0.0)), k_max))
    f = np.cumsum(terms, axis=1)[:, : k_max + 1]
    tail = np.cumsum(terms[:, ::-1], axis=1)[:, ::-1][:, 1 : k_max + 2]
    return f, tail, terms[:, : k_max + 1]


def f_k(mu, k: int):
    """``exp(-mu) (1 + mu + ... + mu^k / k!)``, i.e. the Poisson(mu) cdf at k."""
    mu_arr = np.asarray(mu, dtype=float)
    if np.any(mu_arr < 0):
        raise ValueError("mu must be nonnegative")
    if k < 0:
        raise ValueError("k must be nonnegative")
    terms = poisson_terms(mu_arr.ravel(), k)
    out = terms.sum(axis=1).astype(float)
    return float(out[0]) if mu_arr.ndim == 0 else out.reshape(mu_arr.shape)


def _sigma_tilde_sq_rows(mu: np.ndarray, k: np.ndarray) -> np.ndarray:
    k_max = int(np.max(k, initial=0))
    f, tail, pk = _cdf_tail(mu, k_max)
    rows = np.arange(mu.size)
    fk, tk, p = f[rows, k], tail[rows, k], pk[rows, k]
    val = (fk * tk - mu.astype(_LD) * p * p).astype(float)
    return np.maximum(val, 0.0)


def sigma_tilde_sq(xbar, k: int):
    """Plug-in estimate of the null variance of ``sqrt(n) T_hat^(k)``.

    ``exp(-2x) {S_k (e^x - S_k) - x^(2k+1) / (k!)^2}`` with ``S_k`` the
    exponential partial sum; clamped at zero.
    """
    x = np.asarray(xbar, dtype=float)
    if np.any(x < 0):
        raise ValueError("xbar must be nonnegative")
    flat = x.ravel()
    out = _sigma_tilde_sq_rows(flat, np.full(flat.shape, int(k)))
    return float(out[0]) if x.ndim == 0 else out.reshape(x.shape)


def sigma_sq(mu: float, k: int) -> float:
    """Population form ``f_k (1 - f_k) - exp(-2 mu) mu^(2k+1) / (k!)^2``."""
    fk = f_k(mu, k)
    return fk * (1.0 - fk) - math.exp(-2 * mu) * mu ** (2 * k + 1) / math.factorial(k) ** 2


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

_METHOD_RE = re.compile(r"^(?:Z(\d+)|W|ID)$")


def parse_method(text: str) -> str:
    """Normalize a method name: ``Z<k>``, ``W`` or ``ID``."""
    name = text.strip().upper()
    if not _METHOD_RE.match(name):
        raise ValueError(f"unknown test {text!r}; expected Z<k>, W or ID")
    return name


@dataclass(frozen=True)
class TestResult:
    """Outcome of one test on one sample."""

    __test__ = False  # not a pytest class

    method: str
    statistic: float
    k_used: int
    p_value: float
    alpha: float
    reject: bool
    degenerate: bool = False


@dataclass
class BatchResult:
    """Per-replication arrays from one test applied to many samples."""

    method: str
    statistic: np.ndarray
    k_used: np.ndarray
    p_value: np.ndarray
    reject: np.ndarray
    degenerate: np.ndarray

    def row(self, i: int, alpha: float) -> TestResult:
        return TestResult(
            method=self.method,
            statistic=float(self.statistic[i]),
            k_used=int(self.k_used[i]),
            p_value=float(self.p_value[i]),
            alpha=alpha,
            reject=bool(self.reject[i]),
            degenerate=bool(self.degenerate[i]),
        )


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


def _select_k_unique(xbar: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    caps = np.floor(xbar + 10.0 * np.sqrt(xbar) + 20.0).astype(np.int64)
    k_sel = np.zeros(xbar.size, dtype=np.int64)
    capped = np.zeros(xbar.size, dtype=bool)
    active = xbar >= 1.0
    if not np.any(active):
        return k_sel, capped
    mu = xbar[active]
    cap = caps[active]
    k_max = int(cap.max())
    f, tail, pk = _cdf_tail(mu, k_max)
    var = np.maximum((f * tail - mu[:, None].astype(_LD) * pk * pk).astype(float), 0.0)
    ratio = np.sqrt(var) / (f.astype(float) ** 2 * math.sqrt(n))
    ks = np.arange(k_max + 1)
    ok = (ratio <= _E) & (ks[None, :] <= cap[:, None])
    found = ok.any(axis=1)
    k_sel[active] = np.where(found, ok.argmax(axis=1), cap)
    capped[active] = ~found
    return k_sel, capped


def select_k_batch(xbar, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Data-driven ``k*`` for each sample mean; returns ``(k, capped)``.

    ``k*`` is the smallest ``k`` with
    ``I(xbar >= 1) sigma_tilde / (f_k(xbar)^2 sqrt(n)) <= e``, searched up to
    ``xbar + 10 sqrt(xbar) + 20``.  ``capped`` marks samples where the cap
    was returned without the condition being met.
    """
    xbar = np.asarray(xbar, dtype=float)
    uniq, inv = np.unique(xbar, return_inverse=True)
    k_u, capped_u = _select_k_unique(uniq, n)
    return k_u[inv].reshape(xbar.shape), capped_u[inv].reshape(xbar.shape)


def select_k(sample: CountSample) -> int:
    return int(select_k_batch(np.array([sample.mean]), sample.n)[0][0])


def _row_means(counts: np.ndarray) -> np.ndarray:
    return counts.sum(axis=1) / counts.shape[1]


def _z_kernel(counts: np.ndarray, xbar: np.ndarray, k: np.ndarray, method: str) -> BatchResult:
    n = counts.shape[1]
    uniq, inv = np.unique(np.stack([xbar, k.astype(float)], axis=1), axis=0, return_inverse=True)
    inv = inv.ravel()
    mu_u, k_u = uniq[:, 0], uniq[:, 1].astype(np.int64)
    var_u = _sigma_tilde_sq_rows(mu_u, k_u)
    fk_u = np.empty(mu_u.size)
    for kk in np.unique(k_u):
        sel = k_u == kk
        fk_u[sel] = f_k(mu_u[sel], int(kk))
    ecdf = np.count_nonzero(counts <= k[:, None], axis=1) / n
    t = fk_u[inv] - ecdf
    var = var_u[inv]
    degenerate = ~(var > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = np.where(degenerate, 0.0, math.sqrt(n) * t / np.sqrt(var))
    pval = np.where(degenerate, 1.0, special.erfc(np.abs(stat) / math.sqrt(2.0)))
    return BatchResult(method, stat, k.astype(np.int64), pval, np.zeros(stat.shape, bool), degenerate)


def _id_kernel(counts: np.ndarray) -> BatchResult:
    n = counts.shape[1]
    total = counts.sum(axis=1)
    if counts.size and int(counts.max()) < 2**20 and n < 2**20:
        sq = (counts * counts).sum(axis=1)
        num = (n * sq - total * total).astype(float)
    else:
        xbar = total / n
        num = n * ((counts - xbar[:, None]) ** 2).sum(axis=1)
    degenerate = (total == 0) | (n < 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = np.where(degenerate, 0.0, num / np.where(total > 0, total, 1))
    df = max(n - 1, 1)
    lower = chisq_cdf(stat, df)
    upper = chisq_sf(stat, df)
    pval = np.where(degenerate, 1.0, np.minimum(1.0, 2.0 * np.minimum(lower, upper)))
    zeros = np.zeros(stat.shape, dtype=np.int64)
    return BatchResult("ID", stat, zeros, pval, np.zeros(stat.shape, bool), degenerate)


def batch_test(counts: np.ndarray, method: str, alpha: float = 0.05) -> BatchResult:
    """Apply ``method`` (``Z<k>``, ``W`` or ``ID``) to every row of ``counts``.

    Rejection is ``p_value < alpha`` on non-degenerate rows.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    counts = np.asarray(counts)
    if counts.ndim != 2 or counts.shape[1] < 1:
        raise ValueError("counts must be a (reps, n) matrix with n >= 1")
    method = parse_method(method)
    if method == "ID":
        res = _id_kernel(counts)
    else:
        xbar = _row_means(counts)
        if method == "W":
            k, _ = select_k_batch(xbar, counts.shape[1])
        else:
            k = np.full(xbar.shape, int(method[1:]), dtype=np.int64)
        res = _z_kernel(counts, xbar, k, method)
    res.reject = (res.p_value < alpha) & ~res.degenerate
    return res


# ---------------------------------------------------------------------------
# Single-sample API
# ---------------------------------------------------------------------------


def t_hat(sample: CountSample, k: int) -> float:
    """``f_k(mean) - F_n(k)``."""
    return f_k(sample.mean, k) - sample.ecdf(k)


def _single(sample: CountSample, method: str, alpha: float) -> TestResult:
    return batch_test(sample.values[None, :], method, alpha).row(0, alpha)


def z_stat(sample: CountSample, k: int, alpha: float = 0.05) -> TestResult:
    """``sqrt(n) T_hat^(k) / sigma_tilde`` with its two-sided normal p-value."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return _single(sample, f"Z{int(k)}", alpha)


def w_stat(sample: CountSample, alpha: float = 0.05) -> TestResult:
    """``Z_{n,k*}`` with ``k*`` chosen by :func:`select_k`."""
    return _single(sample, "W", alpha)


def fisher_id(sample: CountSample, alpha: float = 0.05) -> TestResult:
    """Index of dispersion, two-sided chi-square(n - 1) test."""
    return _single(sample, "ID", alpha)
