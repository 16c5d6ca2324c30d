"""Run configuration: a single JSON document, validated with JSON-pointer errors.

Sections and keys (defaults in brackets)::

    grid:      d, n, L
    window:    a0, a1, b
    paramgrid: J, shear_spacing, [shear_radius="auto"], [cells_per_octave=1],
               [scale_representative="midpoint"], [nyquist_margin=0.25]
    weights:   r [[0, 0.5, 1]], p [[1, 2, inf]]   ("inf" allowed in p)
    kernel:    q [[2]], rho_schedule [[1, 2, 4, 8]]
    phantom:   kind ["band-limited-annulus"], band, [cone=0.25], [amplitude=1], [count=5]
    io:        out_dir ["out"]
    seed:      [0]

Unknown keys are rejected. The hash covers every section except ``io``.
``shear_radius = "auto"`` selects ``d1 + 1`` per axis, where ``d1`` is the
shear radius of the window support box.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Schema violation; ``pointer`` locates the offending value."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"config error at {pointer}: {message}")
        self.pointer = pointer
        self.message = message


_SCHEMA: dict[str, dict[str, Any]] = {
    "grid": {"d": None, "n": None, "L": None},
    "window": {"a0": None, "a1": None, "b": None},
    "paramgrid": {
        "J": None,
        "shear_spacing": None,
        "shear_radius": "auto",
        "cells_per_octave": 1,
        "scale_representative": "midpoint",
        "nyquist_margin": 0.25,
    },
    "weights": {"r": [0.0, 0.5, 1.0], "p": [1.0, 2.0, "inf"]},
    "kernel": {"q": [2.0], "rho_schedule": [1.0, 2.0, 4.0, 8.0]},
    "phantom": {"kind": "band-limited-annulus", "band": None, "cone": 0.25, "amplitude": 1.0, "count": 5},
    "io": {"out_dir": "out"},
}
_TOP_SCALARS = {"seed": 0}
_SEMANTIC = ("grid", "window", "paramgrid", "weights", "kernel", "phantom", "seed")


def _num(value, pointer: str, *, integer: bool = False, positive: bool = False, nonneg: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(pointer, "number expected")
    if integer and int(value) != value:
        raise ConfigError(pointer, "integer expected")
    if not math.isfinite(value):
        raise ConfigError(pointer, "finite number expected")
    if positive and not value > 0:
        raise ConfigError(pointer, "must be positive")
    if nonneg and not value >= 0:
        raise ConfigError(pointer, "must be non-negative")
    return int(value) if integer else float(value)


def _num_list(value, pointer: str, *, allow_inf: bool = False, **kw) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ConfigError(pointer, "non-empty list expected")
    out = []
    for i, v in enumerate(value):
        if allow_inf and v == "inf":
            out.append(math.inf)
        else:
            out.append(_num(v, f"{pointer}/{i}", **kw))
    return out


def _vec(value, length: int, pointer: str, **kw) -> list[float]:
    if isinstance(value, list):
        if len(value) != length:
            raise ConfigError(pointer, f"expected {length} entries")
        return [_num(v, f"{pointer}/{i}", **kw) for i, v in enumerate(value)]
    return [_num(value, pointer, **kw)] * length


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration with defaults filled in."""

    data: dict

    @property
    def d(self) -> int:
        return self.data["grid"]["d"]

    def section(self, name: str) -> dict:
        return self.data[name]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def config_hash(self) -> str:
        semantic = {k: self.data[k] for k in _SEMANTIC}
        blob = json.dumps(semantic, sort_keys=True, separators=(",", ":"), allow_nan=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    # ---- builders ------------------------------------------------------
    def grid_spec(self):
        from .grid import make_grid

        g = self.data["grid"]
        return make_grid(g["d"], g["n"], g["L"])

    def window_params(self):
        from .windows import WindowParams

        w = self.data["window"]
        return WindowParams(self.d, w["a0"], w["a1"], tuple(w["b"]))

    def shear_radius(self) -> list[float]:
        """Configured shear radius per axis (``"auto"`` resolves to ``d1 + 1``)."""
        from .windows import support_boxes

        radius = self.data["paramgrid"]["shear_radius"]
        if radius == "auto":
            return [float(v) + 1.0 for v in support_boxes(self.window_params()).d1]
        return list(radius)

    def transform_config(self, pair=None, workers: int = 1, shear_spacing=None):
        from .transform import make_config
        from .windows import default_pair

        pg = self.data["paramgrid"]
        pair = default_pair(self.window_params()) if pair is None else pair
        return make_config(
            self.grid_spec(), pair, pg["J"], pg["shear_spacing"] if shear_spacing is None else shear_spacing,
            self.shear_radius(), pg["cells_per_octave"], pg["scale_representative"], pg["nyquist_margin"], workers,
        )

    def phantom_spec(self, seed: int):
        from .grid import PhantomSpec

        ph = self.data["phantom"]
        return PhantomSpec(kind=ph["kind"], seed=seed, band=tuple(ph["band"]), amplitude=ph["amplitude"], cone=ph["cone"])


def validate(raw: dict) -> RunConfig:
    """Validate a parsed JSON document and fill defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("", "JSON object expected")
    for key in raw:
        if key not in _SCHEMA and key not in _TOP_SCALARS:
            raise ConfigError(f"/{key}", "unknown key")
    data: dict[str, Any] = {}
    for name, fields in _SCHEMA.items():
        sec = raw.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"/{name}", "object expected")
        for key in sec:
            if key not in fields:
                raise ConfigError(f"/{name}/{key}", "unknown key")
        out = {}
        for key, default in fields.items():
            if key in sec:
                out[key] = sec[key]
            elif default is None:
                raise ConfigError(f"/{name}/{key}", "required key missing")
            else:
                out[key] = json.loads(json.dumps(default))
        data[name] = out

    g = data["grid"]
    d = _num(g["d"], "/grid/d", integer=True)
    if d < 3 or d % 2 == 0:
        raise ConfigError("/grid/d", "odd dimension required (d odd and >= 3)")
    n = _num(g["n"], "/grid/n", integer=True)
    if n < 8 or n & (n - 1):
        raise ConfigError("/grid/n", "power of two >= 8 required")
    g.update(d=d, n=n, L=_num(g["L"], "/grid/L", positive=True))

    w = data["window"]
    a0 = _num(w["a0"], "/window/a0", positive=True)
    a1 = _num(w["a1"], "/window/a1", positive=True)
    if not a0 < a1:
        raise ConfigError("/window/a1", "must exceed a0")
    w.update(a0=a0, a1=a1, b=_vec(w["b"], d - 1, "/window/b", positive=True))

    pg = data["paramgrid"]
    pg["J"] = _num(pg["J"], "/paramgrid/J", integer=True, positive=True)
    pg["shear_spacing"] = _vec(pg["shear_spacing"], d - 1, "/paramgrid/shear_spacing", positive=True)
    if pg["shear_radius"] != "auto":
        pg["shear_radius"] = _vec(pg["shear_radius"], d - 1, "/paramgrid/shear_radius", nonneg=True)
    pg["cells_per_octave"] = _num(pg["cells_per_octave"], "/paramgrid/cells_per_octave", integer=True, positive=True)
    if pg["scale_representative"] not in ("midpoint", "geometric"):
        raise ConfigError("/paramgrid/scale_representative", "expected 'midpoint' or 'geometric'")
    pg["nyquist_margin"] = _num(pg["nyquist_margin"], "/paramgrid/nyquist_margin", nonneg=True)

    wt = data["weights"]
    wt["r"] = _num_list(wt["r"], "/weights/r", nonneg=True)
    p = _num_list(wt["p"], "/weights/p", allow_inf=True)
    for i, v in enumerate(p):
        if not v >= 1:
            raise ConfigError(f"/weights/p/{i}", "p must be >= 1")
    wt["p"] = ["inf" if math.isinf(v) else v for v in p]

    k = data["kernel"]
    q = _num_list(k["q"], "/kernel/q")
    for i, v in enumerate(q):
        if not v >= 1:
            raise ConfigError(f"/kernel/q/{i}", "q must be >= 1")
    k["q"] = q
    rho = _num_list(k["rho_schedule"], "/kernel/rho_schedule", positive=True)
    if sorted(rho) != rho or len(set(rho)) != len(rho):
        raise ConfigError("/kernel/rho_schedule", "must be strictly increasing")
    k["rho_schedule"] = rho

    ph = data["phantom"]
    if ph["kind"] != "band-limited-annulus":
        raise ConfigError("/phantom/kind", "only 'band-limited-annulus' is configurable")
    band = _num_list(ph["band"], "/phantom/band", nonneg=True)
    if len(band) != 2 or band[0] > band[1]:
        raise ConfigError("/phantom/band", "expected [xi_min, xi_max] with xi_min <= xi_max")
    ph["band"] = band
    if ph["cone"] is not None:
        ph["cone"] = _num(ph["cone"], "/phantom/cone", nonneg=True)
    ph["amplitude"] = _num(ph["amplitude"], "/phantom/amplitude")
    ph["count"] = _num(ph["count"], "/phantom/count", integer=True, positive=True)

    if not isinstance(data["io"]["out_dir"], str):
        raise ConfigError("/io/out_dir", "string expected")

    seed = raw.get("seed", _TOP_SCALARS["seed"])
    seed = _num(seed, "/seed", integer=True, nonneg=True)
    if seed >= 2**64:
        raise ConfigError("/seed", "must fit in 64 bits")
    data["seed"] = seed
    return RunConfig(data)


def load_config(path) -> RunConfig:
    """Read and validate a JSON config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc.msg} (line {exc.lineno})") from exc
    return validate(raw)


def shipped_config_path(name: str = "default_d3.json") -> Path:
    """Path of a configuration shipped with the package."""
    return Path(str(resources.files("shearcoorb") / "configs" / name))
