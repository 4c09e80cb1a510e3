"""Experiment configuration, JSON loading and the table presets."""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .market import MarketParams

SEED_ENV = "IMPACT_QLBS_SEED"
NONPOSITIVE_MODES = ("error", "drop_path")
FALLBACK_ACTION_BOUNDS = (-5.0, 5.0)

# JSON key -> attribute name, where they differ
_RENAMED = {"lambda": "risk_aversion"}


@dataclass(frozen=True)
class ExperimentConfig:
    market: MarketParams = field(default_factory=MarketParams)
    strategy_range: tuple[float, float] = (-1.0, 1.0)
    m_range: tuple[float, float] = (0.01, 0.03)
    beta_range: tuple[float, float] = (0.0, 1.0)
    kappa: float = 0.01
    risk_aversion: float = 0.001
    n_basis: int = 12
    degree: int = 3
    ridge: float = 1.0
    # None means "the sampled strategy range"
    action_bounds: tuple[float, float] | None = None
    n_runs: int = 50
    seed: int = 0
    on_nonpositive: str = "error"
    share_across_paths: bool = False
    output_dir: str = "out"
    n_sample_paths: int = 5

    def __post_init__(self):
        _check_range(self.strategy_range, "strategy_range")
        _check_range(self.m_range, "m_range")
        _check_range(self.beta_range, "beta_range")
        if not self.m_range[0] > 0:
            raise ConfigError(f"lower bound must be > 0, got {self.m_range[0]!r}", "m_range")
        b_lo, b_hi = self.beta_range
        if b_lo < 0 or b_hi > 1:
            raise ConfigError(f"must lie within [0, 1], got {list(self.beta_range)}", "beta_range")
        if self.action_bounds is not None:
            _check_range(self.action_bounds, "action_bounds")
            if not self.action_bounds[0] < self.action_bounds[1]:
                raise ConfigError("need lo < hi", "action_bounds")
        for name in ("kappa", "risk_aversion", "ridge"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"must be a finite number >= 0, got {v!r}", _json_name(name))
        if self.degree < 0:
            raise ConfigError("must be >= 0", "degree")
        if self.n_basis <= self.degree:
            raise ConfigError(f"must exceed degree ({self.degree}), got {self.n_basis}", "n_basis")
        if self.n_runs < 1:
            raise ConfigError(f"must be >= 1, got {self.n_runs}", "n_runs")
        if self.n_sample_paths < 0:
            raise ConfigError("must be >= 0", "n_sample_paths")
        if self.on_nonpositive not in NONPOSITIVE_MODES:
            raise ConfigError(f"must be one of {NONPOSITIVE_MODES}, got {self.on_nonpositive!r}", "on_nonpositive")
        if self.market.n_mc < 2:
            raise ConfigError("at least two paths are needed", "market.n_mc")

    @property
    def fit_bounds(self) -> tuple[float, float]:
        if self.action_bounds is not None:
            return tuple(self.action_bounds)
        lo, hi = self.strategy_range
        return (float(lo), float(hi)) if lo < hi else FALLBACK_ACTION_BOUNDS

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "market":
                v = dataclasses.asdict(v)
            elif isinstance(v, tuple):
                v = list(v)
            out[_json_name(f.name)] = v
        return out


def _json_name(attr: str) -> str:
    for k, v in _RENAMED.items():
        if v == attr:
            return k
    return attr


def _check_range(r, name):
    lo, hi = r
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ConfigError("bounds must be finite", name)
    # lo == hi is accepted: it pins the quantity (e.g. beta in [0, 0) switches impact off)
    if lo > hi:
        raise ConfigError(f"need lo <= hi, got [{lo}, {hi})", name)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _coerce(value, ftype, path: str):
    t = ftype if isinstance(ftype, str) else getattr(ftype, "__name__", str(ftype))
    t = t.replace(" ", "")
    if t == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", path)
        return value
    if t == "int":
        if not (_is_number(value) and float(value).is_integer()):
            raise ConfigError(f"expected an integer, got {value!r}", path)
        return int(value)
    if t == "float":
        if not _is_number(value):
            raise ConfigError(f"expected a number, got {value!r}", path)
        return float(value)
    if t == "str":
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path)
        return value
    if t.startswith("tuple[float,float]"):
        if value is None and t.endswith("|None"):
            return None
        if not (isinstance(value, list) and len(value) == 2 and all(_is_number(x) for x in value)):
            raise ConfigError(f"expected [lo, hi], got {value!r}", path)
        return (float(value[0]), float(value[1]))
    raise TypeError(f"no coercion for {t}")  # pragma: no cover


def _market_from_dict(d, base: MarketParams) -> MarketParams:
    if not isinstance(d, dict):
        raise ConfigError("expected an object", "market")
    types = {f.name: f.type for f in dataclasses.fields(MarketParams)}
    kw = {}
    for k, v in d.items():
        if k not in types:
            raise ConfigError("unknown key", f"market.{k}")
        kw[k] = _coerce(v, types[k], f"market.{k}")
    return dataclasses.replace(base, **kw)


def config_from_dict(d: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Overlay the keys of ``d`` on ``base``.  Unknown keys and bad types raise
    :class:`ConfigError` naming the offending field."""
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    base = base or ExperimentConfig()
    types = {_json_name(f.name): (f.name, f.type) for f in dataclasses.fields(ExperimentConfig)}
    kw = {}
    for k, v in d.items():
        if k not in types:
            raise ConfigError("unknown key", k)
        attr, ftype = types[k]
        kw[attr] = _market_from_dict(v, base.market) if attr == "market" else _coerce(v, ftype, k)
    return dataclasses.replace(base, **kw)


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}", str(path)) from exc
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object", str(path))
    return d


def env_seed(default: int) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return default
    try:
        return int(raw, 0)
    except ValueError:
        raise ConfigError(f"not an integer: {raw!r}", SEED_ENV) from None


# -- presets ----------------------------------------------------------------

M_RANGES = [(0.01, 0.03), (0.03, 0.07), (0.07, 0.10), (0.01, 0.10)]
TABLE4_U_RANGES = [(-2.0, 2.0), (-2.0, 0.0), (0.0, 2.0), (-5.0, 5.0)]
TABLE5_BETA_RANGES = [(0.0, 0.4), (0.7, 1.0)]

_PRESET_BASE = {
    "table2": {"strategy_range": (-1.0, 1.0)},
    "table3": {"strategy_range": (-1.5, 1.5)},
    "table4": {"m_range": (0.01, 0.03)},
    # printed costs match u in [-1, 1), not the [-1.5, 1.5) named in the text
    "table5": {"strategy_range": (-1.0, 1.0), "m_range": (0.01, 0.03)},
}
_PRESET_SWEEP = {
    "table2": ("m_range", M_RANGES),
    "table3": ("m_range", M_RANGES),
    "table4": ("strategy_range", TABLE4_U_RANGES),
    "table5": ("beta_range", TABLE5_BETA_RANGES),
}
PRESETS = tuple(_PRESET_SWEEP)


def _label(name: str, r) -> str:
    short = {"m_range": "M", "strategy_range": "u", "beta_range": "beta"}[name]
    return f"{short}_{r[0]:g}_{r[1]:g}"


def preset_rows(name: str, overrides: dict | None = None) -> list[tuple[str, ExperimentConfig]]:
    """Configs for each row of a table.  ``overrides`` (a parsed config dict)
    is applied on top of the preset's base; the swept field always comes from
    the preset."""
    if name not in _PRESET_SWEEP:
        raise ConfigError(f"unknown preset {name!r}")
    base = ExperimentConfig(on_nonpositive="drop_path").replace(**_PRESET_BASE[name])
    if overrides:
        base = config_from_dict(overrides, base)
    sweep, values = _PRESET_SWEEP[name]
    return [(_label(sweep, r), base.replace(**{sweep: r})) for r in values]
