"""JSON run configuration with located validation errors."""
from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coefficients import SigmaModel
from .errors import ConfigError
from .spectral import Field, Gauge, Grid, load_field

DEFAULTS = {
    "seed": 0,
    "out": "out",
    "d": 1,
    "sigma": {"kind": "piecewise", "sigma0": 1.0, "sigma1": 0.1875, "r1": 1.0},
    "grid": {"n": 2048, "L": 40.0},
    "profile_grid": {"n": 1024, "L": 10.0},
    "zeta": {"t_max": 20000.0, "step": 0.01},
    "exponents": {"alpha": 0.9, "beta": 0.75, "delta": 0.6},
    "eta": 1.0,
    "epsilon_threshold": 1.0,
    "datum": {"kind": "gaussian", "amplitude": 0.5, "width": 0.3},
    "initial": {"kind": "gaussian", "amplitude": 0.5, "width": 1.0},
    "times": {"T_start": -1000.0, "T_end": 1000.0, "t0": 0.0, "t1": 1.0},
    "evolve": {"dt": 0.01, "scheme": "strang", "potential_mode": "exact", "dt_growth": 0.0, "beta": None},
    "lens": {"dt": 0.01, "dt_growth": 0.01},
    "bridge": {"dt": 0.005},
    "checkpoints": {"per_decade": 20},
    "chi": None,
    "mode": "auto",
    "rates": {},
    "experiments": [],
}


def git_blob_hash(data: bytes) -> str:
    """Content hash computed the way git hashes a blob."""
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _line_of(text: str, key: str):
    if not text:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    if m is None:
        return None
    return text.count("\n", 0, m.start()) + 1


@dataclass
class RunConfig:
    data: dict
    text: str = ""
    path: Path | None = None
    hash: str = ""
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        raw = path.read_bytes()
        text = raw.decode("utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e.msg}", e.lineno) from None
        if not isinstance(data, dict):
            raise ConfigError("top level must be an object", 1)
        cfg = cls(_merge(DEFAULTS, data), text, path, git_blob_hash(raw), path.parent.resolve())
        cfg.validate()
        return cfg

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "RunConfig":
        text = json.dumps(data, indent=1, sort_keys=True)
        cfg = cls(_merge(DEFAULTS, data), text, None, git_blob_hash(text.encode()),
                  Path(base_dir) if base_dir else Path.cwd())
        cfg.validate()
        return cfg

    def child(self, overrides: dict) -> "RunConfig":
        c = RunConfig(_merge(self.data, overrides), self.text, self.path, self.hash, self.base_dir)
        c.data["experiments"] = []
        c.validate()
        return c

    def fail(self, msg, key):
        raise ConfigError(msg, _line_of(self.text, key))

    def __getitem__(self, k):
        return self.data[k]

    # ------------------------------------------------------------ validation
    def validate(self):
        d = self.data
        if d["d"] not in (1, 2, 3):
            self.fail(f"d must be 1, 2 or 3, got {d['d']!r}", "d")
        for key in ("grid", "profile_grid"):
            g = d[key]
            try:
                Grid(d["d"], int(g["n"]), float(g["L"]))
            except (ValueError, KeyError, TypeError) as e:
                self.fail(f"{key}: {e}", key)
        try:
            self.sigma_model()
        except (ValueError, KeyError, TypeError, OSError) as e:
            self.fail(f"sigma: {e}", "sigma")
        ex = d["exponents"]
        for k in ("alpha", "beta", "delta"):
            if not isinstance(ex.get(k), (int, float)):
                self.fail(f"exponents.{k} must be a number", k)
        lam = self.sigma_model().exponent()
        dim = d["d"]
        if not lam < 0.5:
            self.fail(f"lambda = {lam} not below 1/2", "sigma")
        if dim == 3 and not lam > -1 / 3:
            self.fail(f"d = 3 needs lambda > -1/3 (got {lam})", "sigma")
        p_c = 2 / (dim * (1 - lam))
        top = min(dim, 1 + p_c)
        chain = [("d/2", dim / 2, "d"), ("delta", ex["delta"], "delta"), ("beta", ex["beta"], "beta"),
                 ("alpha", ex["alpha"], "alpha"), ("min(d, 1+p_c)", top, "alpha")]
        for (n1, v1, k1), (n2, v2, k2) in zip(chain[:-1], chain[1:]):
            if not v1 < v2:
                self.fail(f"exponent chain d/2 < delta < beta < alpha < min(d, 1+p_c) violated: "
                          f"{n1} = {v1:g} must be below {n2} = {v2:g} (hypothesis of the initial-value "
                          f"scattering result: d/2 < delta < beta < min(1+p_c, d))", k2 if k2 != "d" else k1)
        if d["chi"] is not None:
            if dim == 1 and d["chi"] != 0:
                self.fail("d = 1 uses chi = 0", "chi")
            hi = (ex["beta"] - ex["delta"]) * (1 + p_c - ex["delta"]) * (1 - 2 * lam)
            if dim > 1 and not 0 < d["chi"] < hi:
                self.fail(f"chi must lie in (0, {hi:.6g})", "chi")
        t = d["times"]
        if not t["T_start"] < 0 < t["T_end"]:
            self.fail("times: need T_start < 0 < T_end", "times")
        if not isinstance(d["experiments"], list):
            self.fail("experiments must be a list", "experiments")
        for e in d["experiments"]:
            if not isinstance(e, dict) or e.get("kind") not in EXPERIMENT_KINDS:
                self.fail(f"experiment kind must be one of {sorted(EXPERIMENT_KINDS)}", "experiments")

    # ------------------------------------------------------------ builders
    def sigma_model(self) -> SigmaModel:
        s = self.data["sigma"]
        kind = s.get("kind", "piecewise")
        if kind == "zero":
            return SigmaModel.zero()
        if kind == "piecewise":
            return SigmaModel.piecewise(s["sigma0"], s["sigma1"], s["r1"])
        if kind == "table":
            if "csv" in s:
                return SigmaModel.from_csv(self.base_dir / s["csv"])
            return SigmaModel.from_table(s["t"], s["sigma"])
        raise ValueError(f"unknown sigma kind {kind!r}")

    def grid(self) -> Grid:
        g = self.data["grid"]
        return Grid(self.data["d"], int(g["n"]), float(g["L"]))

    def profile_grid(self) -> Grid:
        g = self.data["profile_grid"]
        return Grid(self.data["d"], int(g["n"]), float(g["L"]))

    def make_field(self, spec: dict, grid: Grid, time=0.0, gauge=Gauge.PHYSICAL) -> Field:
        if "file" in spec:
            return load_field(self.base_dir / spec["file"])
        kind = spec.get("kind", "gaussian")
        if kind != "gaussian":
            raise ConfigError(f"unknown field kind {kind!r}")
        a = float(spec.get("amplitude", 1.0))
        w = float(spec.get("width", 1.0))
        k0 = float(spec.get("momentum", 0.0))
        x0 = float(spec.get("center", 0.0))
        axis = grid.axis
        r2 = grid.r2 if x0 == 0 else sum(np.meshgrid(*([(axis - x0) ** 2] * grid.d), indexing="ij")) \
            if grid.d > 1 else (axis - x0) ** 2
        vals = a * np.exp(-r2 / (2 * w * w))
        if k0:
            first = np.meshgrid(*([axis] * grid.d), indexing="ij")[0] if grid.d > 1 else axis
            vals = vals * np.exp(1j * k0 * first)
        return Field(grid, vals, time, gauge)


EXPERIMENT_KINDS = {"zeta", "propagate", "evolve", "finalstate", "extract", "scatter", "rates"}
