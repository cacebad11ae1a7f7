"""Grids, fields and spectral primitives.

All grids are centred: x_j = (j - n/2) dx with dx = 2L/n along every axis.
The Fourier transform is the unitary one,
    (F f)(xi) = (2 pi)^{-d/2} \\int f(x) e^{-i x.xi} dx,
discretised on the dual grid with spacing pi/L.
"""
from __future__ import annotations

import json
import time as _time
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft
from scipy.signal import czt

from .errors import (AliasRiskWarning, BoundaryMassError, MissingZeta,
                     ShapeMismatch, ZeroParameter, ZeroZeta)

BOUNDARY_TOL = 1e-10
BOUNDARY_BAND = 16  # outer n/16 points per side


class Gauge(str, Enum):
    PHYSICAL = "physical"
    PROFILE = "profile"
    FREQUENCY = "frequency"


@dataclass(frozen=True)
class Grid:
    d: int
    n: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.n < 16 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 16, got {self.n}")
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def dxi(self) -> float:
        return np.pi / self.L

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def cell(self) -> float:
        return self.dx ** self.d

    @cached_property
    def axis(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.dx

    @cached_property
    def r2(self) -> np.ndarray:
        a2 = self.axis ** 2
        if self.d == 1:
            return a2
        grids = np.meshgrid(*([a2] * self.d), indexing="ij")
        return sum(grids)

    @cached_property
    def bracket(self) -> np.ndarray:
        """<x> = sqrt(1 + |x|^2)."""
        return np.sqrt(1.0 + self.r2)

    def dual(self) -> "Grid":
        return Grid(self.d, self.n, np.pi / self.dx)

    def to_dict(self) -> dict:
        return {"d": self.d, "n": self.n, "L": float(self.L)}


@dataclass
class Field:
    grid: Grid
    values: np.ndarray
    time: float = 0.0
    gauge: Gauge = Gauge.PHYSICAL
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise ShapeMismatch(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        self.gauge = Gauge(self.gauge)

    def with_values(self, values, **changes) -> "Field":
        return replace(self, values=values, meta=dict(self.meta), **changes)

    def copy(self) -> "Field":
        return self.with_values(self.values.copy())

    def l2(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell))

    def mass(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.cell)


# ---------------------------------------------------------------- transforms

def _fft_forward(v):
    axes = tuple(range(v.ndim))
    return sfft.fftshift(sfft.fftn(sfft.ifftshift(v, axes=axes), axes=axes), axes=axes)


def _fft_inverse(v):
    axes = tuple(range(v.ndim))
    return sfft.fftshift(sfft.ifftn(sfft.ifftshift(v, axes=axes), axes=axes), axes=axes)


def fourier(f: Field, inverse: bool = False, gauge: Gauge = Gauge.PROFILE) -> Field:
    """Unitary Fourier transform onto the dual grid.

    Forward maps a position-side field to the frequency gauge; the inverse
    lands in ``gauge`` (profile by default).
    """
    g = f.grid
    d = g.d
    if not inverse:
        vals = _fft_forward(f.values) * (g.dx / np.sqrt(2 * np.pi)) ** d
        return Field(g.dual(), vals, f.time, Gauge.FREQUENCY)
    vals = _fft_inverse(f.values) * (g.n * g.dx / np.sqrt(2 * np.pi)) ** d
    return Field(g.dual(), vals, f.time, gauge)


def forward(values: np.ndarray, grid: Grid) -> np.ndarray:
    return _fft_forward(values) * (grid.dx / np.sqrt(2 * np.pi)) ** grid.d


def inverse(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Inverse transform of values living on ``grid`` (a frequency grid)."""
    return _fft_inverse(values) * (grid.n * grid.dx / np.sqrt(2 * np.pi)) ** grid.d


def _centered_dft_axis(a, axis, dy, domega, m_out, sign):
    """sum_j a_j exp(sign i omega_m y_j) along one axis.

    y_j = (j - n/2) dy, omega_m = (m - m_out/2) domega.
    """
    a = np.moveaxis(a, axis, -1)
    n = a.shape[-1]
    s = sign * dy * domega
    two_pi_n = 2 * np.pi / n
    if m_out == n and abs(abs(s) - two_pi_n) <= 1e-13 * two_pi_n:
        if s > 0:
            out = sfft.fftshift(sfft.ifft(sfft.ifftshift(a, axes=-1), axis=-1), axes=-1) * n
        else:
            out = sfft.fftshift(sfft.fft(sfft.ifftshift(a, axes=-1), axis=-1), axes=-1)
        return np.moveaxis(out, -1, axis)
    j = np.arange(n)
    m = np.arange(m_out)
    pre = np.exp(-1j * s * ((m_out // 2) * j))
    w = np.exp(1j * s)
    out = czt(a * pre, m=m_out, w=w, a=1.0, axis=-1)
    post = np.exp(1j * s * ((m_out // 2) * (n // 2) - (n // 2) * m))
    return np.moveaxis(out * post, -1, axis)


def centered_dft(values, dy, domega, m_out, sign):
    out = values
    for ax in range(values.ndim):
        out = _centered_dft_axis(out, ax, dy, domega, m_out, sign)
    return out


def resample(values: np.ndarray, grid: Grid, step: float, n_out: int | None = None,
             periodic: bool = False) -> np.ndarray:
    """Trigonometric interpolant of ``values`` at z_m = (m - n_out/2) step on every axis.

    Unless ``periodic``, points outside [-L, L) are set to zero instead of
    picking up periodic images; the boundary guard makes that the right value.
    """
    n_out = grid.n if n_out is None else n_out
    if step == grid.dx and n_out == grid.n:
        return np.array(values, dtype=complex)
    fh = forward(values, grid)
    dk = grid.dxi
    out = centered_dft(fh, dk, step, n_out, +1) * (dk / np.sqrt(2 * np.pi)) ** grid.d
    if not periodic:
        z = (np.arange(n_out) - n_out // 2) * step
        inside = (z >= -grid.L) & (z < grid.L)
        if not inside.all():
            mask = inside
            for _ in range(grid.d - 1):
                mask = np.multiply.outer(mask, inside)
            out = out * mask
    return out


def boundary_fraction(values: np.ndarray) -> float:
    """Fraction of the l2 mass sitting in the outer n/16 points of any axis."""
    p = np.abs(values) ** 2
    total = p.sum()
    if total == 0:
        return 0.0
    n = values.shape[0]
    b = max(1, n // BOUNDARY_BAND)
    inner = p
    for ax in range(values.ndim):
        inner = np.take(inner, np.arange(b, n - b), axis=ax)
    return float((total - inner.sum()) / total)


def check_boundary(values: np.ndarray, what: str = "field", tol: float = BOUNDARY_TOL):
    frac = boundary_fraction(values)
    if frac > tol:
        raise BoundaryMassError(f"{what}: boundary mass fraction {frac:.3e} exceeds {tol:.1e}")
    return frac


def dilate(f: Field, scale: float, guard: bool = True) -> Field:
    """(D(s) f)(x) = (i s)^{-d/2} f(x / s), evaluated on the same grid."""
    if scale == 0:
        raise ZeroParameter("dilation by zero")
    if abs(scale) < 1:
        warnings.warn(f"dilation by |s|={abs(scale):.3g} < 1 compresses the field", AliasRiskWarning, stacklevel=2)
    if guard:
        check_boundary(f.values, "dilate input")
    vals = resample(f.values, f.grid, f.grid.dx / scale)
    vals *= (1j * scale) ** (-f.grid.d / 2)
    return f.with_values(vals)


def chirp_by_rate(f: Field, rate: float) -> Field:
    """Multiply by exp(i rate |x|^2 / 2)."""
    return f.with_values(f.values * np.exp(0.5j * rate * f.grid.r2))


def chirp_multiply(f: Field, tau: float, sign: int = 1) -> Field:
    """Multiply by M(tau)^sign with M(tau) = exp(i |x|^2 / (2 tau))."""
    if tau == 0:
        raise ZeroParameter("chirp with tau = 0")
    if not np.isfinite(tau):
        return f.copy()
    return chirp_by_rate(f, sign / tau)


def frac_derivative(f: Field, s: float) -> Field:
    """|nabla|^s via the Fourier multiplier |xi|^s."""
    if s == 0:
        return f.copy()
    g = f.grid
    fh = forward(f.values, g)
    dual = g.dual()
    mult = dual.r2 ** (s / 2)
    return f.with_values(inverse(fh * mult, dual))


# ---------------------------------------------------------------- norms

class NormKind(str, Enum):
    L2 = "l2"
    LINF = "linf"
    L1 = "l1"
    WEIGHTED_L2 = "weighted_l2"
    FRAC_SOBOLEV = "frac_sobolev"
    GALILEAN = "galilean"


@dataclass(frozen=True)
class NormSpec:
    kind: NormKind
    beta: float = 0.0
    t: float | None = None

    @classmethod
    def l2(cls):
        return cls(NormKind.L2)

    @classmethod
    def linf(cls):
        return cls(NormKind.LINF)

    @classmethod
    def l1(cls):
        return cls(NormKind.L1)

    @classmethod
    def weighted(cls, beta):
        return cls(NormKind.WEIGHTED_L2, beta)

    @classmethod
    def sobolev(cls, s):
        return cls(NormKind.FRAC_SOBOLEV, s)

    @classmethod
    def galilean(cls, beta, t):
        return cls(NormKind.GALILEAN, beta, t)


def _l2(values, grid):
    return float(np.sqrt(np.sum(np.abs(values) ** 2) * grid.cell))


def galilean_power(f: Field, beta: float, zeta) -> np.ndarray:
    """Values of |J(t)|^beta f = |zeta2|^beta M1 |nabla|^beta M1^{-1} f at t = f.time."""
    z1, z1p, z2, z2p = zeta.evaluate(f.time)
    if z2 == 0:
        if f.time == 0:
            return f.values * f.grid.r2 ** (beta / 2)
        raise ZeroZeta(f"zeta2 vanishes at t={f.time}")
    rate = z2p / z2
    ch = np.exp(0.5j * rate * f.grid.r2)
    inner = f.with_values(f.values * np.conj(ch))
    return abs(z2) ** beta * ch * frac_derivative(inner, beta).values


def norm(f: Field, spec: NormSpec, zeta=None) -> float:
    v, g = f.values, f.grid
    k = spec.kind
    if k == NormKind.L2:
        return _l2(v, g)
    if k == NormKind.LINF:
        return float(np.max(np.abs(v))) if v.size else 0.0
    if k == NormKind.L1:
        return float(np.sum(np.abs(v)) * g.cell)
    if k == NormKind.WEIGHTED_L2:
        return _l2(v * g.bracket ** spec.beta, g)
    if k == NormKind.FRAC_SOBOLEV:
        fh = forward(v, g)
        dual = g.dual()
        return _l2(fh * dual.bracket ** spec.beta, dual)
    if k == NormKind.GALILEAN:
        if zeta is None:
            raise MissingZeta("Galilean weighted norm needs a zeta solution")
        t = f.time if spec.t is None else spec.t
        ff = f if t == f.time else replace(f, time=t)
        jb = galilean_power(ff, spec.beta, zeta)
        return float(np.sqrt(_l2(v, g) ** 2 + _l2(jb, g) ** 2))
    raise ValueError(f"unknown norm kind {k}")


# ---------------------------------------------------------------- serialisation

def save_field(f: Field, path) -> Path:
    """Write interleaved little-endian float64 (re, im) plus a JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.empty(f.values.size * 2, dtype="<f8")
    flat = f.values.ravel(order="C")
    arr[0::2] = flat.real
    arr[1::2] = flat.imag
    path.write_bytes(arr.tobytes())
    side = {
        "grid": f.grid.to_dict(),
        "time": repr(float(f.time)),
        "gauge": f.gauge.value,
        "written": f.meta.get("timestamp", _time.strftime("%Y-%m-%dT%H:%M:%S")),
        "meta": {k: v for k, v in f.meta.items() if isinstance(v, (int, float, str, bool))},
    }
    sidecar(path).write_text(json.dumps(side, indent=1, sort_keys=True))
    return path


def sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def load_field(path) -> Field:
    path = Path(path)
    side = json.loads(sidecar(path).read_text())
    g = side["grid"]
    grid = Grid(int(g["d"]), int(g["n"]), float(g["L"]))
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    if raw.size != 2 * grid.n ** grid.d:
        raise ShapeMismatch(f"{path}: {raw.size // 2} samples, grid wants {grid.n ** grid.d}")
    vals = (raw[0::2] + 1j * raw[1::2]).reshape(grid.shape)
    return Field(grid, vals, float(side["time"]), Gauge(side["gauge"]))
