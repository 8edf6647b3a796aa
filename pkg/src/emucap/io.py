"""Channel files, run configuration, and report formatting."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .capacity import GRID_POINTS
from .channel import Channel
from .emulation import DEFAULT_BUDGET
from .approx_algebra import DEFAULT_DELTA_MAX
from .operator_core import DEFAULT_SEED, DEFAULT_TOL, EmucapError, ToleranceConfig

SCHEMA_VERSION = "1"
MAX_BUDGET = 256
TP_TOL = 1e-8  # files are written at full precision, so only real defects trip this
SIG_DIGITS = 12


class ParseError(EmucapError, ValueError):
    pass


def _cplx_pair(z: complex) -> list:
    return [float(z.real), float(z.imag)]


def channel_to_dict(c: Channel) -> dict:
    return {
        "dim_in": c.dim_in,
        "dim_out": c.dim_out,
        "kraus": [[[_cplx_pair(z) for z in row] for row in k] for k in c.kraus_array],
    }


def channel_from_dict(data: dict) -> Channel:
    try:
        din, dout = int(data["dim_in"]), int(data["dim_out"])
        arr = np.asarray(data["kraus"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed channel: {exc}") from exc
    if arr.ndim != 4 or arr.shape[1:] != (dout, din, 2):
        raise ParseError(f"kraus array has shape {arr.shape}, expected (r, {dout}, {din}, 2)")
    ks = arr[..., 0] + 1j * arr[..., 1]
    try:
        c = Channel(din, dout, tuple(ks))
    except ValueError as exc:
        raise ParseError(str(exc)) from exc
    if c.tp_residual() > TP_TOL:
        raise ParseError(f"Kraus operators are not trace preserving (residual {c.tp_residual():.3e})")
    return c


@dataclass(frozen=True, eq=False)
class ChannelFile:
    channel: Channel
    name: str | None = None
    expected_shape: tuple | None = None
    schema_version: str = SCHEMA_VERSION

    def to_dict(self) -> dict:
        out = {"schema_version": self.schema_version, "channel": channel_to_dict(self.channel)}
        meta = {}
        if self.name is not None:
            meta["name"] = self.name
        if self.expected_shape is not None:
            meta["expected_shape"] = list(self.expected_shape)
        if meta:
            out["metadata"] = meta
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data) -> "ChannelFile":
        if not isinstance(data, dict):
            raise ParseError("channel file must hold a JSON object")
        version = str(data.get("schema_version", ""))
        if version != SCHEMA_VERSION:
            raise ParseError(f"unsupported schema_version {version!r}")
        if "channel" not in data:
            raise ParseError("missing 'channel'")
        meta = data.get("metadata") or {}
        shape = meta.get("expected_shape")
        return cls(channel_from_dict(data["channel"]), meta.get("name"),
                   None if shape is None else tuple(int(v) for v in shape), version)

    @classmethod
    def loads(cls, text: str) -> "ChannelFile":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(data)


def load_channel_file(path) -> ChannelFile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return ChannelFile.loads(text)


def load_channel(path) -> Channel:
    return load_channel_file(path).channel


def save_channel(path, c: Channel, name: str | None = None, expected_shape=None):
    Path(path).write_text(ChannelFile(c, name, expected_shape).dumps() + "\n")


def fmt(x) -> str:
    """12 significant digits; infinities spelled out."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.{SIG_DIGITS}g}"


def _round_floats(obj):
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return fmt(x) if math.isinf(x) or math.isnan(x) else float(fmt(x))
    if isinstance(obj, dict):
        return {str(k): _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round_floats(obj.tolist())
    return str(obj)


def report_json(obj) -> str:
    """Report JSON with floats cut to 12 significant digits."""
    return json.dumps(_round_floats(obj), indent=2, sort_keys=False)


def _parse_tol(text: str) -> ToleranceConfig:
    text = text.strip()
    try:
        single = float(text)
    except ValueError:
        single = None
    if single is not None:
        try:
            return ToleranceConfig(eq_tol=single)
        except ValueError as exc:
            raise ParseError(str(exc)) from exc
    keys = {"rank": "rank_tol", "eq": "eq_tol", "cluster": "cluster_tol"}
    values = {}
    for item in text.split(","):
        k, sep, v = item.partition("=")
        k = k.strip().removesuffix("_tol")
        if not sep or k not in keys:
            raise ParseError(f"bad tolerance spec {item!r}; use a float or rank=..,eq=..,cluster=..")
        try:
            values[keys[k]] = float(v)
        except ValueError as exc:
            raise ParseError(f"bad tolerance value {v!r}") from exc
    try:
        return ToleranceConfig(**values)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


@dataclass(frozen=True)
class RunConfig:
    tolerances: ToleranceConfig = DEFAULT_TOL
    seed: int = DEFAULT_SEED
    budget_dim: int = DEFAULT_BUDGET
    delta_max: float = DEFAULT_DELTA_MAX
    grid_points: int = GRID_POINTS
    sources: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 1 <= self.budget_dim <= MAX_BUDGET:
            raise ParseError(f"budget must be in [1, {MAX_BUDGET}], got {self.budget_dim}")
        if not 0 <= self.seed < 2**64:
            raise ParseError("seed must be a 64-bit unsigned integer")
        if not self.delta_max > 0:
            raise ParseError("delta_max must be positive")
        if self.grid_points < 3:
            raise ParseError("grid must have at least 3 points")

    @classmethod
    def resolve(cls, tol=None, seed=None, budget=None, delta_max=None, grid=None, env=None) -> "RunConfig":
        """Flags win over EMUCAP_* environment variables, which win over defaults."""
        env = os.environ if env is None else env
        raw = {}
        sources = {}
        for key, flag, var in (("tol", tol, "EMUCAP_TOL"), ("seed", seed, "EMUCAP_SEED"),
                               ("budget", budget, "EMUCAP_BUDGET"), ("delta_max", delta_max, "EMUCAP_DELTA_MAX"),
                               ("grid", grid, "EMUCAP_GRID")):
            if flag is not None:
                raw[key], sources[key] = flag, "flag"
            elif env.get(var):
                raw[key], sources[key] = env[var], "env"
            else:
                sources[key] = "default"
        try:
            kwargs = {}
            if "tol" in raw:
                kwargs["tolerances"] = raw["tol"] if isinstance(raw["tol"], ToleranceConfig) else _parse_tol(str(raw["tol"]))
            if "seed" in raw:
                kwargs["seed"] = int(str(raw["seed"]), 0)
            if "budget" in raw:
                kwargs["budget_dim"] = int(raw["budget"])
            if "delta_max" in raw:
                kwargs["delta_max"] = float(raw["delta_max"])
            if "grid" in raw:
                kwargs["grid_points"] = int(raw["grid"])
        except ValueError as exc:
            raise ParseError(f"bad configuration value: {exc}") from exc
        return cls(sources=sources, **kwargs)

    def to_dict(self) -> dict:
        t = self.tolerances
        return {
            "tolerances": {"rank_tol": t.rank_tol, "eq_tol": t.eq_tol, "cluster_tol": t.cluster_tol},
            "seed": self.seed, "budget_dim": self.budget_dim,
            "delta_max": self.delta_max, "grid_points": self.grid_points,
        }
