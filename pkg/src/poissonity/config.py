"""Simulation config files.

Flat ``key = value`` lines with repeated blocks::

    seed = 20240101
    reps = 10000

    [scenario]
    dist = nb:1,0.5
    n = 20, 30, 50
    tests = W, ID

    [sweep]
    mu_from = 0.5
    mu_to = 16
    mu_step = 0.2
    n = 50
    tests = Z0, Z1

    [contiguous]
    base_mu = 0.5
    contaminant = binomial:1,0.5
    n = 20, 50
    eps = 0.05
    tests = Z0, ID

Keys before the first block are defaults (``seed``, ``reps``, ``alpha``);
blocks may override them.  ``#`` starts a comment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .dist import DistSpec, SpecParseError, parse_spec
from .gof import parse_method

__all__ = [
    "Block",
    "ConfigError",
    "RunConfig",
    "load_config",
    "parse_config",
]

DEFAULT_SEED = 20240101

_GLOBAL_KEYS = {"seed", "reps", "alpha"}
_BLOCK_KEYS = {
    "scenario": {"dist", "n", "tests", "id"} | _GLOBAL_KEYS,
    "sweep": {"mu_from", "mu_to", "mu_step", "n", "tests"} | _GLOBAL_KEYS,
    "contiguous": {"base_mu", "contaminant", "n", "eps", "tests"} | _GLOBAL_KEYS,
}
_REQUIRED = {
    "scenario": {"dist", "n", "tests"},
    "sweep": {"mu_from", "mu_to", "mu_step", "n", "tests"},
    "contiguous": {"base_mu", "contaminant", "n", "eps", "tests"},
}


class ConfigError(ValueError):
    pass


@dataclass
class Block:
    kind: str
    line: int
    seed: int
    reps: int
    alpha: float
    tests: tuple[str, ...]
    ns: tuple[int, ...]
    dist: DistSpec | None = None
    scenario_id: str = ""
    mu_from: float = 0.0
    mu_to: float = 0.0
    mu_step: float = 0.0
    base_mu: float = 0.0
    eps: float = 0.0


@dataclass
class RunConfig:
    seed: int = DEFAULT_SEED
    reps: int = 10000
    alpha: float = 0.05
    blocks: list[Block] = field(default_factory=list)


def _int(key: str, value: str, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"line {line}: {key} must be an integer, got {value!r}") from None


def _float(key: str, value: str, line: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"line {line}: {key} must be a number, got {value!r}") from None


def _check_common(reps: int, alpha: float, line: int) -> None:
    if reps < 1:
        raise ConfigError(f"line {line}: reps must be >= 1, got {reps}")
    if not 0 < alpha < 1:
        raise ConfigError(f"line {line}: alpha must lie in (0,1), got {alpha}")


def _build(kind: str, line: int, raw: dict[str, tuple[str, int]], cfg: RunConfig) -> Block:
    missing = _REQUIRED[kind] - raw.keys()
    if missing:
        raise ConfigError(f"line {line}: [{kind}] block is missing {', '.join(sorted(missing))}")

    def get(key: str) -> tuple[str, int]:
        return raw[key]

    seed = _int("seed", *get("seed")) if "seed" in raw else cfg.seed
    reps = _int("reps", *get("reps")) if "reps" in raw else cfg.reps
    alpha = _float("alpha", *get("alpha")) if "alpha" in raw else cfg.alpha
    _check_common(reps, alpha, raw.get("reps", ("", line))[1])

    value, at = get("n")
    ns = tuple(_int("n", tok.strip(), at) for tok in value.split(",") if tok.strip())
    if not ns or min(ns) < 1:
        raise ConfigError(f"line {at}: n must list positive integers")
    value, at = get("tests")
    try:
        tests = tuple(parse_method(tok) for tok in value.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"line {at}: {exc}") from None
    if not tests:
        raise ConfigError(f"line {at}: tests must not be empty")

    block = Block(kind, line, seed, reps, alpha, tests, ns)
    try:
        if kind == "scenario":
            block.dist = parse_spec(get("dist")[0])
            block.scenario_id = raw["id"][0] if "id" in raw else ""
        elif kind == "sweep":
            block.mu_from = _float("mu_from", *get("mu_from"))
            block.mu_to = _float("mu_to", *get("mu_to"))
            block.mu_step = _float("mu_step", *get("mu_step"))
            if block.mu_step <= 0 or block.mu_from <= 0 or block.mu_to < block.mu_from:
                raise ConfigError(f"line {line}: sweep needs 0 < mu_from <= mu_to and mu_step > 0")
        else:
            block.base_mu = _float("base_mu", *get("base_mu"))
            block.dist = parse_spec(get("contaminant")[0])
            block.eps = _float("eps", *get("eps"))
            if block.eps <= 0:
                raise ConfigError(f"line {line}: eps must be positive")
    except SpecParseError as exc:
        raise ConfigError(f"line {line}: {exc}") from None
    return block


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    pending: list[tuple[str, int, dict[str, tuple[str, int]]]] = []
    current: dict[str, tuple[str, int]] | None = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed block header {raw_line.strip()!r}")
            kind = line[1:-1].strip().lower()
            if kind not in _BLOCK_KEYS:
                raise ConfigError(f"line {lineno}: unknown block [{kind}]")
            current = {}
            pending.append((kind, lineno, current))
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw_line.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if current is None:
            if key not in _GLOBAL_KEYS:
                raise ConfigError(f"line {lineno}: unknown global key {key!r}")
            if key == "seed":
                cfg.seed = _int(key, value, lineno)
            elif key == "reps":
                cfg.reps = _int(key, value, lineno)
            else:
                cfg.alpha = _float(key, value, lineno)
            _check_common(cfg.reps, cfg.alpha, lineno)
            continue
        kind = pending[-1][0]
        if key not in _BLOCK_KEYS[kind]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{kind}]")
        if key in current:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        current[key] = (value, lineno)
    cfg.blocks = [_build(kind, lineno, raw, cfg) for kind, lineno, raw in pending]
    if not cfg.blocks:
        raise ConfigError("config defines no [scenario], [sweep] or [contiguous] blocks")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text())
