"""Experiment configuration: INI parsing, validation and a formatting-independent digest.

A config file has one ``[experiment]`` section::

    [experiment]
    preset = hopf
    epsilon = 0.1
    eps_grid = 0.2, 0.1, 0.05
    T = 1.0
    paths = 20000

Keys are case-insensitive. The digest is the SHA-256 of the canonical form
(sorted ``key=value`` lines with normalised numbers), so whitespace,
comments, key order and number spelling do not change it.
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import asdict, dataclass, field

from .errors import ConfigError

SECTION = "experiment"

_FLOAT_KEYS = {"epsilon", "t", "theta", "tail_t", "limit_h", "fast_h", "identity_t"}
_INT_KEYS = {"paths", "n", "master_seed", "limit_paths", "poisson_paths", "block_size"}
_LIST_KEYS = {"eps_grid", "t_grid"}
_STR_KEYS = {"preset", "output"}
KNOWN_KEYS = _FLOAT_KEYS | _INT_KEYS | _LIST_KEYS | _STR_KEYS


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "hopf"
    epsilon: float = 0.1
    eps_grid: tuple = (0.2, 0.1, 0.05)
    T: float = 1.0
    theta: float = 0.1
    paths: int = 10_000
    limit_paths: int = 0
    n: int = 1000
    master_seed: int = 0
    tail_T: float = 20.0
    poisson_paths: int = 100_000
    limit_h: float = 0.01
    fast_h: float = 0.05
    identity_t: float = 0.5
    t_grid: tuple = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
    block_size: int = 4096
    output: str = "out"
    digest: str = field(default="", compare=False)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("digest")
        return d


_ATTR = {"t": "T", "tail_t": "tail_T"}


def _fmt_number(v: float) -> str:
    return repr(float(v))


def canonical_text(values: dict) -> str:
    """Canonical ``key=value`` lines used for hashing."""
    lines = []
    for key in sorted(values):
        v = values[key]
        if isinstance(v, (tuple, list)):
            s = ",".join(_fmt_number(x) for x in v)
        elif isinstance(v, bool) or isinstance(v, str):
            s = str(v)
        elif isinstance(v, int):
            s = str(v)
        else:
            s = _fmt_number(v)
        lines.append(f"{key}={s}")
    return "\n".join(lines) + "\n"


def _key_lines(text: str) -> dict:
    """Line number of each key inside the experiment section."""
    out, section = {}, None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"^\[(.+)\]$", line)
        if m:
            section = m.group(1).strip().lower()
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section == SECTION:
            out.setdefault(m.group(1).strip().lower(), no)
    return out


def _parse_value(key: str, raw: str, line: int | None):
    try:
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _INT_KEYS:
            return int(raw)
        if key in _LIST_KEYS:
            items = [s for s in re.split(r"[,\s]+", raw.strip()) if s]
            if not items:
                raise ValueError("empty list")
            return tuple(float(s) for s in items)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {raw!r} ({exc})", key, line) from None
    return raw.strip()


def validate(cfg: ExperimentConfig, lines: dict | None = None) -> None:
    lines = lines or {}

    def fail(key, msg):
        raise ConfigError(msg, key, lines.get(key))

    for key in ("epsilon", "T", "theta", "paths", "n", "tail_T", "poisson_paths", "limit_h", "fast_h",
                "identity_t", "block_size"):
        if getattr(cfg, key) <= 0:
            fail(key.lower(), "must be positive")
    if cfg.limit_paths < 0:
        fail("limit_paths", "must be non-negative")
    if cfg.master_seed < 0:
        fail("master_seed", "must be non-negative")
    if not cfg.epsilon <= 1.0:
        fail("epsilon", "must lie in (0, 1]")
    if cfg.theta > 0.5:
        fail("theta", "must lie in (0, 0.5]")
    if any(e <= 0 or e > 1 for e in cfg.eps_grid):
        fail("eps_grid", "entries must lie in (0, 1]")
    if any(b >= a for a, b in zip(cfg.eps_grid, cfg.eps_grid[1:])):
        fail("eps_grid", "must be strictly decreasing")
    if any(t <= 0 for t in cfg.t_grid) or any(b <= a for a, b in zip(cfg.t_grid, cfg.t_grid[1:])):
        fail("t_grid", "must be positive and strictly increasing")


def from_mapping(values: dict, lines: dict | None = None) -> ExperimentConfig:
    """Build and validate a config from already-typed values (keys as in the file)."""
    kwargs = {_ATTR.get(k, k): v for k, v in values.items()}
    cfg = ExperimentConfig(**kwargs)
    validate(cfg, lines)
    digest = hashlib.sha256(canonical_text(cfg.as_dict()).encode()).hexdigest()
    return ExperimentConfig(**{**cfg.as_dict(), "digest": digest})


def parse_config(text: str) -> ExperimentConfig:
    """Parse INI text into a validated :class:`ExperimentConfig`."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if getattr(exc, "errors", None) else None
        raise ConfigError("malformed line", None, lineno) from None
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], None, getattr(exc, "lineno", None)) from None
    if not parser.has_section(SECTION):
        raise ConfigError(f"missing [{SECTION}] section")
    extra = [s for s in parser.sections() if s != SECTION]
    if extra:
        raise ConfigError(f"unknown section [{extra[0]}]")
    lines = _key_lines(text)
    values = {}
    for key, raw in parser.items(SECTION):
        if key not in KNOWN_KEYS:
            raise ConfigError("unknown key", key, lines.get(key))
        values[key] = _parse_value(key, raw, lines.get(key))
    return from_mapping(values, lines)


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return from_mapping({})
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}") from None
    return parse_config(text)
