"""Run configuration: a flat key = value text file with dotted model keys.

Matrices are bracketed row-major lists so multi-asset setups stay readable
in version control, e.g.

    model.d = 2
    model.A = [-0.1, 0.0, 0.0, -0.2]

Lines starting with '#' are comments; values may be quoted.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import ModelParams

__all__ = ["RunConfig", "parse_config", "load_config"]

_MODEL_KEYS = {"d", "m", "A", "sigma", "r", "T", "varpi", "x0", "s0"}
_RUN_KEYS = {"grid_k", "mc_paths", "mc_steps", "seed", "output_dir", "format"}


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams
    grid_k: int = 2000
    mc_paths: int = 200_000
    mc_steps: int = 1000
    seed: int = 42
    output_dir: Path = field(default_factory=lambda: Path("out"))
    format: str = "csv"

    def with_overrides(self, *, seed=None, output_dir=None, mc_paths=None,
                       mc_steps=None, grid_k=None) -> "RunConfig":
        kwargs = {}
        if seed is not None:
            kwargs["seed"] = int(seed)
        if output_dir is not None:
            kwargs["output_dir"] = Path(output_dir)
        if mc_paths is not None:
            kwargs["mc_paths"] = int(mc_paths)
        if mc_steps is not None:
            kwargs["mc_steps"] = int(mc_steps)
        if grid_k is not None:
            kwargs["grid_k"] = int(grid_k)
        return replace(self, **kwargs) if kwargs else self


def _strip(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "'\"":
        value = value[1:-1].strip()
    return value


def _parse_vector(text: str, key: str) -> np.ndarray:
    text = _strip(text)
    if not (text.startswith("[") and text.endswith("]")):
        raise ConfigError(f"{key}: expected a bracketed list, got {text!r}")
    body = text[1:-1].strip()
    if not body:
        raise ConfigError(f"{key}: empty list")
    try:
        return np.array([float(tok) for tok in body.split(",")])
    except ValueError as exc:
        raise ConfigError(f"{key}: bad number in {text!r}") from exc


def _parse_int(text: str, key: str) -> int:
    try:
        return int(_strip(text))
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from exc


def _parse_float(text: str, key: str) -> float:
    try:
        return float(_strip(text))
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from exc


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse configuration text; raises ConfigError with the offending key."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = value

    model_raw: dict[str, str] = {}
    run_raw: dict[str, str] = {}
    for key, value in raw.items():
        if key.startswith("model."):
            sub = key[len("model."):]
            if sub not in _MODEL_KEYS:
                raise ConfigError(f"{source}: unknown model key {key!r}")
            model_raw[sub] = value
        elif key in _RUN_KEYS:
            run_raw[key] = value
        else:
            raise ConfigError(f"{source}: unknown key {key!r}")

    missing = {"d", "m", "A", "sigma", "r", "T", "varpi", "x0"} - set(model_raw)
    if missing:
        raise ConfigError(f"{source}: missing model keys: {sorted(missing)}")

    d = _parse_int(model_raw["d"], "model.d")
    m = _parse_int(model_raw["m"], "model.m")
    if d < 1 or m < 1:
        raise ConfigError(f"{source}: model dimensions must be positive, got d={d}, m={m}")
    a_flat = _parse_vector(model_raw["A"], "model.A")
    if a_flat.size != d * d:
        raise ConfigError(f"model.A: expected {d * d} entries (row-major d x d), got {a_flat.size}")
    sig_flat = _parse_vector(model_raw["sigma"], "model.sigma")
    if sig_flat.size != d * m:
        raise ConfigError(f"model.sigma: expected {d * m} entries (row-major d x m), got {sig_flat.size}")
    if "s0" in model_raw:
        s0 = _parse_vector(model_raw["s0"], "model.s0")
        if s0.size != d:
            raise ConfigError(f"model.s0: expected {d} entries, got {s0.size}")
    else:
        s0 = np.zeros(d)

    try:
        model = ModelParams(
            d=d, m=m,
            A=a_flat.reshape(d, d),
            sigma=sig_flat.reshape(d, m),
            r=_parse_float(model_raw["r"], "model.r"),
            T=_parse_float(model_raw["T"], "model.T"),
            varpi=_parse_float(model_raw["varpi"], "model.varpi"),
            x0=_parse_float(model_raw["x0"], "model.x0"),
            s0=s0,
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    cfg = RunConfig(model=model)
    if "grid_k" in run_raw:
        cfg = replace(cfg, grid_k=_parse_int(run_raw["grid_k"], "grid_k"))
    if "mc_paths" in run_raw:
        cfg = replace(cfg, mc_paths=_parse_int(run_raw["mc_paths"], "mc_paths"))
    if "mc_steps" in run_raw:
        cfg = replace(cfg, mc_steps=_parse_int(run_raw["mc_steps"], "mc_steps"))
    if "seed" in run_raw:
        cfg = replace(cfg, seed=_parse_int(run_raw["seed"], "seed"))
    if "output_dir" in run_raw:
        cfg = replace(cfg, output_dir=Path(_strip(run_raw["output_dir"])))
    if "format" in run_raw:
        fmt = _strip(run_raw["format"])
        if fmt not in ("csv", "json"):
            raise ConfigError(f"format: expected csv or json, got {fmt!r}")
        cfg = replace(cfg, format=fmt)

    for name in ("grid_k", "mc_paths", "mc_steps"):
        if getattr(cfg, name) <= 0:
            raise ConfigError(f"{name} must be positive, got {getattr(cfg, name)}")
    if cfg.seed < 0:
        raise ConfigError(f"seed must be nonnegative, got {cfg.seed}")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text, source=str(path))
