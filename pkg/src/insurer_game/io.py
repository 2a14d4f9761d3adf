"""JSON configuration and CSV/JSON output."""

from __future__ import annotations

import copy
import csv
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

from .model import GameConfig, InsurerType, MarketParams
from .mean_field import TypeDistribution


class ConfigError(ValueError):
    """Malformed or structurally invalid configuration document."""


MARKET_KEYS = ("r", "m", "a", "b", "kappa", "z_bar", "nu", "rho", "z0")
GAME_KEYS = ("horizon_T", "lambda_hat", "eta_hat")
INSURER_KEYS = ("x0", "lambda", "mu1", "mu2", "eta", "theta", "delta", "psi")
NUMERICS_DEFAULTS = {
    "steps": 10_000,
    "tol": 1e-12,
    "max_iter": 10_000,
    "paths": 100_000,
    "dt": None,
    "seed": 0,
}
TOP_KEYS = ("market", "game", "insurers", "numerics")


@dataclass
class RunConfig:
    market: MarketParams
    game: GameConfig
    weights: list[float] | None
    numerics: dict
    raw: dict

    def distribution(self) -> TypeDistribution:
        n = self.game.n
        w = self.weights if self.weights is not None else [1.0 / n] * n
        return TypeDistribution(tuple(zip(self.game.insurers, w)))


def _number(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where} must be a number, got {v!r}")
    return float(v)


def _section(obj, keys, where, optional=()):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object")
    for k in obj:
        if k not in keys and k not in optional:
            raise ConfigError(f"unknown key {where}.{k}")
    missing = [k for k in keys if k not in obj]
    if missing:
        raise ConfigError(f"missing key {where}.{missing[0]}")
    return {k: _number(obj[k], f"{where}.{k}") for k in (*keys, *optional) if k in obj}


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    for k in doc:
        if k not in TOP_KEYS:
            raise ConfigError(f"unknown key {k}")
    for k in ("market", "game", "insurers"):
        if k not in doc:
            raise ConfigError(f"missing key {k}")
    market = MarketParams(**_section(doc["market"], MARKET_KEYS, "market"))
    game_vals = _section(doc["game"], GAME_KEYS, "game")
    if not isinstance(doc["insurers"], list) or not doc["insurers"]:
        raise ConfigError("insurers must be a nonempty array")
    insurers, weights = [], []
    for i, obj in enumerate(doc["insurers"]):
        vals = _section(obj, INSURER_KEYS, f"insurers[{i}]", optional=("weight",))
        weights.append(vals.pop("weight", None))
        vals["lam"] = vals.pop("lambda")
        insurers.append(InsurerType(**vals))
    if any(w is not None for w in weights):
        if any(w is None for w in weights):
            raise ConfigError("either all insurers carry a weight or none does")
    else:
        weights = None
    numerics = dict(NUMERICS_DEFAULTS)
    for k, v in (doc.get("numerics") or {}).items():
        if k not in NUMERICS_DEFAULTS:
            raise ConfigError(f"unknown key numerics.{k}")
        if k in ("steps", "max_iter", "paths", "seed"):
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"numerics.{k} must be an integer")
            numerics[k] = v
        else:
            numerics[k] = None if v is None else _number(v, f"numerics.{k}")
    game = GameConfig(insurers=tuple(insurers), **game_vals)
    return RunConfig(market, game, weights, numerics, doc)


def load_config(path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(doc)


_PATH_RE = re.compile(r"^(market|game|numerics)\.(\w+)$|^insurers\[(\d+)\]\.(\w+)$")


def with_parameter(doc: dict, param: str, value: float) -> dict:
    """Copy of the document with one numeric field replaced, e.g. insurers[0].theta."""
    m = _PATH_RE.match(param)
    if not m:
        raise ConfigError(f"cannot parse parameter path {param!r}")
    out = copy.deepcopy(doc)
    if m.group(1):
        sec, key = m.group(1), m.group(2)
        if sec not in out or key not in out[sec]:
            raise ConfigError(f"unknown parameter {param}")
        out[sec][key] = value
    else:
        i, key = int(m.group(3)), m.group(4)
        if i >= len(out["insurers"]) or key not in out["insurers"][i]:
            raise ConfigError(f"unknown parameter {param}")
        out["insurers"][i][key] = value
    return out


def fmt(v) -> str:
    """12 significant digits in scientific notation; ints and strings verbatim."""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool,)):
        return str(int(v))
    if isinstance(v, int) or (hasattr(v, "dtype") and v.dtype.kind in "iu"):
        return str(int(v))
    x = float(v)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.11e}"


def _json_cell(v):
    if isinstance(v, str):
        return v
    if isinstance(v, int) or (hasattr(v, "dtype") and v.dtype.kind in "iu"):
        return int(v)
    x = float(v)
    return x if math.isfinite(x) else None


class CsvSink:
    """Streams rows to CSV (LF newlines) and optionally mirrors them to a JSON array."""

    def __init__(self, path, header, emit_json=False):
        self.path = Path(path)
        self.header = list(header)
        self.emit_json = emit_json
        self.rows = [] if emit_json else None
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(self.header)

    def row(self, *values):
        self._w.writerow([fmt(v) for v in values])
        if self.rows is not None:
            self.rows.append({h: _json_cell(v) for h, v in zip(self.header, values)})

    def close(self):
        self._fh.close()
        if self.rows is not None:
            with open(self.path.with_suffix(".json"), "w", newline="") as fh:
                json.dump(self.rows, fh, separators=(",", ":"))
                fh.write("\n")

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
