"""Deterministic Monte Carlo engine for level, power and local-power studies.

Each replication draws from its own counter-based substream keyed by
``(master_seed, scenario_id)`` and indexed by the replication number, so a
scenario's output does not depend on how replications are split across
threads.  Rejections are counted as integers and divided once at the end.
"""

from __future__ import annotations

import hashlib
import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dist import CountSample, DistSpec, inverse_cdf, mean
from .gof import batch_test, f_k, parse_method

__all__ = [
    "ContiguousCurve",
    "MixtureSpec",
    "PowerRow",
    "ScenarioConfig",
    "default_threads",
    "lambda_grid",
    "mu_grid",
    "level_sweep",
    "power_curve_contiguous",
    "r_hat",
    "run_scenario",
    "sample_contiguous",
    "scaled_t_hat",
    "simulate_statistics",
    "substream",
]

THREADS_ENV = "POISSONITY_THREADS"
_CHUNK_DRAWS = 1 << 20


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _stream_key(master_seed: int, scenario_id: str) -> np.ndarray:
    digest = hashlib.blake2b(
        f"{int(master_seed) & (2**64 - 1)}\x1f{scenario_id}".encode(), digest_size=16
    ).digest()
    return np.frombuffer(digest, dtype="<u8").copy()


def substream(master_seed: int, scenario_id: str, rep: int) -> np.random.Generator:
    """Generator for replication ``rep`` of a scenario."""
    counter = np.array([0, 0, rep, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=_stream_key(master_seed, scenario_id)))


# ---------------------------------------------------------------------------
# Sources of samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MixtureSpec:
    """Poisson(``base_mu``) contaminated by ``contaminant`` with weight ``lam / sqrt(n)``."""

    base_mu: float
    contaminant: DistSpec
    lam: float

    def __post_init__(self) -> None:
        if not self.base_mu > 0:
            raise ValueError("base_mu must be positive")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if abs(mean(self.contaminant) - self.base_mu) >= 1e-9:
            raise ValueError(
                f"contaminant mean {mean(self.contaminant)} differs from base_mu {self.base_mu}"
            )

    def weight(self, n: int) -> float:
        w = self.lam / math.sqrt(n)
        if not w < 1:
            raise ValueError(f"lambda/sqrt(n) must be < 1, got {w}")
        return w


def _draws_per_obs(source) -> int:
    return 2 if isinstance(source, MixtureSpec) else 1


def _counts_from_uniforms(source, u: np.ndarray) -> np.ndarray:
    if isinstance(source, DistSpec):
        return inverse_cdf(source, u)
    # one indicator uniform, then one uniform for the chosen component
    n = u.shape[-1] // 2
    pair = u.reshape(u.shape[:-1] + (n, 2))
    take_base = pair[..., 0] < 1.0 - source.weight(n)
    base = inverse_cdf(DistSpec.poisson(source.base_mu), pair[..., 1])
    other = inverse_cdf(source.contaminant, pair[..., 1])
    return np.where(take_base, base, other)


def sample_contiguous(mix: MixtureSpec, n: int, stream: np.random.Generator) -> CountSample:
    """``n`` draws from the contiguous mixture.

    Stream order per observation: the indicator uniform, then the selected
    component's inversion uniform.
    """
    mix.weight(n)
    return CountSample(_counts_from_uniforms(mix, stream.random(2 * n)))


def _draw_block(source, n: int, master_seed: int, scenario_id: str, reps: range) -> np.ndarray:
    width = n * _draws_per_obs(source)
    u = np.empty((len(reps), width))
    for row, rep in enumerate(reps):
        u[row] = substream(master_seed, scenario_id, rep).random(width)
    return _counts_from_uniforms(source, u)


def _chunks(reps: int, n: int) -> list[range]:
    size = max(1, min(1000, _CHUNK_DRAWS // max(n, 1)))
    return [range(lo, min(lo + size, reps)) for lo in range(0, reps, size)]


def _map(fn, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    """One Monte Carlo cell."""

    dist: DistSpec | MixtureSpec
    n: int
    reps: int
    tests: tuple[str, ...] = ("W", "ID")
    alpha: float = 0.05
    master_seed: int = 20240101
    scenario_id: str = ""

    def __post_init__(self) -> None:
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.tests:
            raise ValueError("at least one test is required")
        object.__setattr__(self, "tests", tuple(parse_method(t) for t in self.tests))
        if not self.scenario_id:
            object.__setattr__(self, "scenario_id", f"{self.dist}/n={self.n}")
        if isinstance(self.dist, MixtureSpec):
            self.dist.weight(self.n)


@dataclass(frozen=True)
class PowerRow:
    scenario_id: str
    test: str
    rejections: int
    reps: int
    k_used_mode: int = 0

    @property
    def rejection_rate(self) -> float:
        return self.rejections / self.reps

    @property
    def mc_stderr(self) -> float:
        r = self.rejection_rate
        return math.sqrt(r * (1 - r) / self.reps)


def run_scenario(cfg: ScenarioConfig, threads: int | None = None) -> list[PowerRow]:
    """Run every requested test on the same ``cfg.reps`` samples."""
    threads = default_threads() if threads is None else threads

    def work(reps: range) -> tuple[dict[str, int], dict[str, Counter]]:
        counts = _draw_block(cfg.dist, cfg.n, cfg.master_seed, cfg.scenario_id, reps)
        hits, ks = {}, {}
        for test in cfg.tests:
            res = batch_test(counts, test, cfg.alpha)
            hits[test] = int(np.count_nonzero(res.reject))
            ks[test] = Counter(res.k_used.tolist())
        return hits, ks

    parts = _map(work, _chunks(cfg.reps, cfg.n), threads)
    rows = []
    for test in cfg.tests:
        total = sum(p[0][test] for p in parts)
        ks: Counter = Counter()
        for p in parts:
            ks.update(p[1][test])
        mode = min(ks.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        rows.append(PowerRow(cfg.scenario_id, test, total, cfg.reps, int(mode)))
    return rows


def mu_grid(start: float, stop: float, step: float) -> list[float]:
    """``start, start + step, ...`` up to ``stop`` inclusive, rounded to 10 places."""
    if step <= 0:
        raise ValueError("step must be positive")
    m = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(max(m, 0))]


def level_sweep(
    mu_from: float,
    mu_to: float,
    mu_step: float,
    n: int,
    reps: int,
    tests: Iterable[str],
    alpha: float = 0.05,
    seed: int = 20240101,
    threads: int | None = None,
) -> list[tuple[float, list[PowerRow]]]:
    """Empirical levels over a grid of Poisson means."""
    out = []
    for mu in mu_grid(mu_from, mu_to, mu_step):
        spec = DistSpec.poisson(mu)
        cfg = ScenarioConfig(spec, n, reps, tuple(tests), alpha, seed, f"level/{spec}/n={n}")
        out.append((mu, run_scenario(cfg, threads)))
    return out


# ---------------------------------------------------------------------------
# Contiguous alternatives
# ---------------------------------------------------------------------------


def lambda_grid(n: int, eps: float) -> np.ndarray:
    """``eps, 2 eps, ...`` up to and including ``sqrt(n) - eps``."""
    m = int(math.floor(math.sqrt(n) / eps - 1 + 1e-9))
    if m < 1:
        raise ValueError("eps too large for this n")
    return np.round(eps * np.arange(1, m + 1), 10)


@dataclass
class ContiguousCurve:
    base_mu: float
    contaminant: DistSpec
    n: int
    reps: int
    lambdas: np.ndarray
    powers: dict[str, np.ndarray] = field(default_factory=dict)

    def stderr(self, test: str) -> np.ndarray:
        p = self.powers[test]
        return np.sqrt(p * (1 - p) / self.reps)


def power_curve_contiguous(
    base_mu: float,
    contaminant: DistSpec,
    n: int,
    eps: float,
    reps: int,
    tests: Iterable[str],
    alpha: float = 0.05,
    seed: int = 20240101,
    threads: int | None = None,
) -> ContiguousCurve:
    """Empirical power at each ``lambda`` of :func:`lambda_grid`."""
    tests = tuple(parse_method(t) for t in tests)
    lams = lambda_grid(n, eps)
    powers = {t: np.empty(lams.size) for t in tests}
    for i, lam in enumerate(lams):
        mix = MixtureSpec(base_mu, contaminant, float(lam))
        sid = f"contiguous/{base_mu!r}/{contaminant}/n={n}/lambda={float(lam)!r}"
        for row in run_scenario(ScenarioConfig(mix, n, reps, tests, alpha, seed, sid), threads):
            powers[row.test][i] = row.rejection_rate
    return ContiguousCurve(base_mu, contaminant, n, reps, lams, powers)


def r_hat(curve) -> float:
    """Average empirical power over the lambda grid."""
    values = np.asarray(curve, dtype=float)
    if values.size == 0:
        raise ValueError("empty curve")
    return float(values.mean())


def scaled_t_hat(
    source: DistSpec | MixtureSpec,
    n: int,
    reps: int,
    k: int = 0,
    seed: int = 20240101,
    scenario_id: str = "",
    threads: int | None = None,
) -> np.ndarray:
    """Replicates of ``sqrt(n) (f_k(mean) - F_n(k))``."""
    threads = default_threads() if threads is None else threads
    sid = scenario_id or f"tstat/{source}/n={n}/k={k}"
    if isinstance(source, MixtureSpec):
        source.weight(n)

    def work(block: range) -> np.ndarray:
        counts = _draw_block(source, n, seed, sid, block)
        xbar = counts.sum(axis=1) / n
        ecdf = np.count_nonzero(counts <= k, axis=1) / n
        return math.sqrt(n) * (f_k(xbar, k) - ecdf)

    return np.concatenate(_map(work, _chunks(reps, n * _draws_per_obs(source)), threads))


def simulate_statistics(
    source: DistSpec | MixtureSpec,
    n: int,
    reps: int,
    method: str,
    seed: int = 20240101,
    scenario_id: str = "",
    threads: int | None = None,
) -> np.ndarray:
    """Per-replication values of a test statistic (``Z<k>``, ``W`` or ``ID``)."""
    threads = default_threads() if threads is None else threads
    method = parse_method(method)
    sid = scenario_id or f"stat/{source}/n={n}/{method}"

    def work(block: range) -> np.ndarray:
        return batch_test(_draw_block(source, n, seed, sid, block), method).statistic

    return np.concatenate(_map(work, _chunks(reps, n * _draws_per_obs(source)), threads))
