"""Run configuration: defaults, flat key=value config files, flag overrides.

Config file format, one `key = value` per line, `#` starts a comment:

    underlying_csv   = data/underlying.csv
    options_csv      = data/options.csv      # file or directory of CSVs
    output_dir       = out
    rate             = 0.0
    moneyness_lo     = 0.8
    moneyness_hi     = 1.3
    bin_width        = 0.05
    maturities       = 0.25,0.5,0.75
    jump_sampling    = 5            # primary detection sampling, minutes
    jump_samplings   = 5,15         # all samplings used for the no-jump group
    alpha            = 0.01
    window_k         =              # blank: per-sampling default (270 / 156)
    min_minutes      = 45
    trim_lo          = 0.02
    trim_hi          = 0.98
    spline_lambda    = 1e-6
    hull_margin      = 0.0
    fit_moneyness_margin = 0.05
    grid_level       = 0.05
    grid_familywise  = false
    figures          = true
    seed             = 0
    threads          =              # blank: SMILEJUMP_THREADS or 1
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .jumps import DEFAULT_WINDOW_K
from .surface import MoneynessGrid

__all__ = ["RunConfig", "ConfigError", "load_config"]

N_BINS_REQUIRED = 10


class ConfigError(ValueError):
    pass


def _default_threads() -> int:
    env = os.environ.get("SMILEJUMP_THREADS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise ConfigError(f"SMILEJUMP_THREADS={env!r} is not an integer")


@dataclass
class RunConfig:
    underlying_csv: Path | None = None
    options_csv: Path | None = None
    output_dir: Path = Path("out")
    rate: float = 0.0
    moneyness_lo: float = 0.8
    moneyness_hi: float = 1.3
    bin_width: float = 0.05
    maturities: tuple[float, ...] = (0.25, 0.5, 0.75)
    jump_sampling: int = 5
    jump_samplings: tuple[int, ...] = (5, 15)
    alpha: float = 0.01
    window_k: int | None = None
    min_minutes: int = 45
    trim_lo: float = 0.02
    trim_hi: float = 0.98
    spline_lambda: float = 1e-6
    hull_margin: float = 0.0
    fit_moneyness_margin: float = 0.05
    tau_margin: float = 0.1
    grid_level: float = 0.05
    grid_familywise: bool = False
    figures: bool = True
    seed: int = 0
    threads: int = field(default_factory=_default_threads)

    def validate(self, need_inputs: bool = False) -> None:
        n = (self.moneyness_hi - self.moneyness_lo) / self.bin_width
        if abs(n - round(n)) > 1e-9 or round(n) != N_BINS_REQUIRED:
            raise ConfigError(
                f"moneyness range/width must form exactly {N_BINS_REQUIRED} bins, got {n:g}"
            )
        if self.jump_sampling not in self.jump_samplings:
            raise ConfigError("jump_sampling must be one of jump_samplings")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if not 0.0 <= self.trim_lo < self.trim_hi <= 1.0:
            raise ConfigError("need 0 <= trim_lo < trim_hi <= 1")
        if self.spline_lambda < 0.0:
            raise ConfigError("spline_lambda must be >= 0")
        if need_inputs:
            for name in ("underlying_csv", "options_csv"):
                p = getattr(self, name)
                if p is None:
                    raise ConfigError(f"{name} is required")
                if not Path(p).exists():
                    raise ConfigError(f"{name} does not exist: {p}")

    @property
    def grid(self) -> MoneynessGrid:
        return MoneynessGrid(self.moneyness_lo, self.moneyness_hi, self.bin_width)

    def window_k_for(self, sampling: int) -> int:
        if self.window_k is not None:
            return self.window_k
        return DEFAULT_WINDOW_K.get(sampling, 270)


_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    if raw == "":
        return None
    if name in ("underlying_csv", "options_csv", "output_dir"):
        return Path(raw)
    if name in ("maturities",):
        return tuple(float(x) for x in raw.split(","))
    if name in ("jump_samplings",):
        return tuple(int(x) for x in raw.split(","))
    if name in ("grid_familywise", "figures"):
        try:
            return _BOOL[raw.lower()]
        except KeyError:
            raise ConfigError(f"{name} must be a boolean, got {raw!r}")
    if name in ("jump_sampling", "window_k", "min_minutes", "seed", "threads"):
        return int(raw)
    return float(raw)


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Config file values, then explicit overrides, on top of the defaults."""
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    if path is not None:
        text = Path(path).read_text()
        updates = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            val = _parse_value(key, raw)
            if val is not None:
                updates[key] = val
        cfg = replace(cfg, **updates)
    if overrides:
        clean = {k: v for k, v in overrides.items() if v is not None}
        bad = set(clean) - known
        if bad:
            raise ConfigError(f"unknown config overrides: {sorted(bad)}")
        cfg = replace(cfg, **clean)
    return cfg
