"""Time stepping for  i u_t = -Delta u/2 + sigma(t)|x|^2 u/2 + eta |u|^p u.

Two frames are offered:

* physical: Strang (or Lie) splitting on a fixed grid; the harmonic part is
  either a pointwise phase at the step midpoint or the exact metaplectic step
  kick-drift-kick built from the fundamental matrix of zeta'' + sigma zeta = 0;
* lens: for |t| >= r0, phi = D1^{-1} M1^{-1} u obeys
      i phi_t = -Delta phi / (2 zeta2^2) + eta |zeta2|^{-1/(1-lam)} |phi|^p phi,
  whose linear part is an exact chirp on F^{-1} phi, so the grid never has to
  follow the spreading of u.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .errors import BlowupDetected, CFLViolation, OutsideValidity
from .spectral import Field, Gauge, Grid, forward, inverse, norm, NormSpec

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(6)


class Scheme(str, Enum):
    STRANG = "strang"
    LIE = "lie"


class PotentialMode(str, Enum):
    POINTWISE = "pointwise"
    EXACT_QUADRATIC = "exact"


@dataclass
class EvolveConfig:
    eta: float = 0.0
    dt: float = 1e-2
    t_begin: float = 0.0
    t_end: float = 1.0
    p_c: float | None = None
    scheme: Scheme = Scheme.STRANG
    potential_mode: PotentialMode = PotentialMode.POINTWISE
    dt_growth: float = 0.0  # lens frame: step = max(dt, dt_growth |t|)
    beta: float | None = None  # exponent of the weighted observable
    blowup_factor: float = 1e3
    refine_kinks: bool = True

    def __post_init__(self):
        self.scheme = Scheme(self.scheme)
        self.potential_mode = PotentialMode(self.potential_mode)
        if not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    observables: dict = field(default_factory=lambda: {k: [] for k in
                                                       ("t", "mass", "linf", "scaled_linf", "weighted_beta")})
    steps: int = 0

    @property
    def final(self) -> Field:
        return self.fields[-1]

    def to_csv(self, path):
        path = Path(path)
        keys = ["t", "mass", "linf", "scaled_linf", "weighted_beta"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(keys)
            for row in zip(*(self.observables[k] for k in keys)):
                w.writerow([f"{v:.17g}" for v in row])
        return path


def step_times(t0, t1, dt, breakpoints=(), samples=(), refine=True, growth=0.0):
    """Step boundaries from t0 to t1 (either direction).

    Steps land exactly on breakpoints and sample times; within 5 dt of a
    breakpoint or of t = 0 the step is halved.
    """
    direction = 1.0 if t1 >= t0 else -1.0
    lo, hi = min(t0, t1), max(t0, t1)
    marks = sorted({float(b) for b in list(breakpoints) + list(samples) if lo < b < hi}, key=lambda b: direction * b)
    kinks = [float(b) for b in breakpoints] + [0.0]
    out = [float(t0)]
    t = float(t0)
    targets = marks + [float(t1)]
    for target in targets:
        while direction * (target - t) > 1e-12 * max(1.0, abs(t)):
            h = max(dt, growth * abs(t))
            if refine and any(abs(t - k) < 5 * dt or abs(t + direction * h - k) < 5 * dt for k in kinks):
                h = min(h, dt / 2)
            nxt = t + direction * h
            if direction * (nxt - target) > -1e-9 * h:
                nxt = target
            out.append(nxt)
            t = nxt
        t = target
        out[-1] = target
    return np.array(out)


def _observe(traj: Trajectory, u: Field, ctx, beta):
    lam = ctx.params.lam
    d = u.grid.d
    linf = float(np.max(np.abs(u.values)))
    traj.times.append(u.time)
    traj.fields.append(u)
    o = traj.observables
    o["t"].append(u.time)
    o["mass"].append(u.mass())
    o["linf"].append(linf)
    o["scaled_linf"].append(abs(u.time) ** (d * (1 - lam) / 2) * linf)
    if beta is None:
        o["weighted_beta"].append(float("nan"))
    else:
        z2 = ctx.zeta.evaluate(u.time)[2]
        if z2 == 0 and u.time != 0:
            o["weighted_beta"].append(float("nan"))
        else:
            o["weighted_beta"].append(norm(u, NormSpec.galilean(beta, u.time), ctx.zeta))


class _Kinetic:
    """exp(-i b |xi|^2 / 2) in natural FFT ordering; valid on centred grids."""

    def __init__(self, grid: Grid):
        k = 2 * np.pi * sfft.fftfreq(grid.n, grid.dx)
        k2 = k ** 2
        if grid.d > 1:
            k2 = sum(np.meshgrid(*([k2] * grid.d), indexing="ij"))
        self.k2 = k2
        self.axes = tuple(range(grid.d))

    def __call__(self, v, b):
        return sfft.ifftn(np.exp(-0.5j * b * self.k2) * sfft.fftn(v, axes=self.axes), axes=self.axes)


def check_cfl(grid: Grid, model, t0, t1, dt):
    """Kick momentum of one pointwise potential step must stay within half the Nyquist band."""
    ts = np.linspace(min(t0, t1), max(t0, t1), 257)
    smax = float(np.max(np.abs(model(ts))))
    limit = np.pi * grid.n / 4
    if dt * smax * grid.L ** 2 >= limit:
        raise CFLViolation(f"dt*max|sigma|*L^2 = {dt * smax * grid.L ** 2:.4g} >= {limit:.4g}")


def evolve(ctx, cfg: EvolveConfig, u0: Field, sample_times=()) -> Trajectory:
    """Physical-frame splitting from cfg.t_begin to cfg.t_end."""
    grid = u0.grid
    model = ctx.zeta.model
    p = ctx.params.p_c if cfg.p_c is None else cfg.p_c
    if cfg.potential_mode == PotentialMode.POINTWISE:
        check_cfl(grid, model, cfg.t_begin, cfg.t_end, cfg.dt)
    times = step_times(cfg.t_begin, cfg.t_end, cfg.dt, model.breakpoints(), sample_times, cfg.refine_kinks)
    want = {float(s) for s in sample_times}
    kin = _Kinetic(grid)
    x2 = grid.r2
    eta = cfg.eta
    u = np.array(u0.values, dtype=complex)
    traj = Trajectory()
    _observe(traj, Field(grid, u.copy(), float(times[0]), Gauge.PHYSICAL), ctx, cfg.beta)
    m0 = float(np.max(np.abs(u)))
    strang = cfg.scheme == Scheme.STRANG

    def nl(v, h):
        if eta == 0:
            return v
        return v * np.exp(-1j * h * eta * np.abs(v) ** p)

    for t, t2 in zip(times[:-1], times[1:]):
        h = t2 - t
        if cfg.potential_mode == PotentialMode.POINTWISE:
            s_mid = float(model(0.5 * (t + t2)))
            pot = 0.5 * s_mid * x2
            if strang:
                u = u * np.exp(-0.5j * h * (pot + eta * np.abs(u) ** p))
                u = kin(u, h)
                u = u * np.exp(-0.5j * h * (pot + eta * np.abs(u) ** p))
            else:
                u = u * np.exp(-1j * h * (pot + eta * np.abs(u) ** p))
                u = kin(u, h)
        else:
            _, b, _, _, om11, om22 = model.step_matrix(t, t2)
            a1, a2 = om11 / b, om22 / b
            if strang:
                u = nl(u, h / 2)
            else:
                u = nl(u, h)
            u = u * np.exp(-0.5j * a1 * x2)
            u = kin(u, b)
            u = u * np.exp(-0.5j * a2 * x2)
            if strang:
                u = nl(u, h / 2)
        traj.steps += 1
        if not np.all(np.isfinite(u)) or float(np.max(np.abs(u))) > cfg.blowup_factor * m0:
            raise BlowupDetected(f"sup norm grew beyond {cfg.blowup_factor:g}x at t={t2:g}")
        if t2 in want or t2 == times[-1]:
            _observe(traj, Field(grid, u.copy(), float(t2), Gauge.PHYSICAL), ctx, cfg.beta)
    return traj


# ---------------------------------------------------------------- lens frame

def coupling_integral(ctx, t, t2, nodes=6):
    """int_t^t2 |zeta2(s)|^{-1/(1-lam)} ds by Gauss-Legendre."""
    if t == t2:
        return 0.0
    x, w = (_GL_NODES, _GL_WEIGHTS) if nodes == 6 else np.polynomial.legendre.leggauss(nodes)
    mid, half = 0.5 * (t + t2), 0.5 * (t2 - t)
    s = mid + half * x
    z2 = np.asarray(ctx.zeta.evaluate(s)[2])
    return float(half * np.sum(w * np.abs(z2) ** (-ctx.params.kappa)))


@dataclass
class LensTrajectory:
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    steps: int = 0

    @property
    def final(self) -> Field:
        return self.fields[-1]


class LensStepper:
    """Strang steps of the lens-frame equation on a fixed frequency grid."""

    def __init__(self, ctx, grid: Grid, eta: float, p: float | None = None):
        self.ctx = ctx
        self.grid = grid
        self.ygrid = grid.dual()
        self.y2 = self.ygrid.r2
        self.eta = eta
        self.p = ctx.params.p_c if p is None else p

    def nonlinear(self, phi, t, t2):
        if self.eta == 0:
            return phi
        c = coupling_integral(self.ctx, t, t2)
        return phi * np.exp(-1j * self.eta * c * np.abs(phi) ** self.p)

    def linear(self, phi, t, t2):
        dr = self.ctx.inner_rate(t2) - self.ctx.inner_rate(t)
        h = inverse(phi, self.grid)
        return forward(h * np.exp(0.5j * dr * self.y2), self.ygrid)

    def step(self, phi, t, t2):
        tm = 0.5 * (t + t2)
        phi = self.nonlinear(phi, t, tm)
        phi = self.linear(phi, t, t2)
        return self.nonlinear(phi, tm, t2)


def evolve_profile(ctx, cfg: EvolveConfig, phi0: Field, checkpoints=(), on_step=None) -> LensTrajectory:
    """Lens-frame evolution of a frequency-side field between two times with |t| >= r0.

    ``on_step(t, t2, phi_t, phi_t2)`` is called after every step.
    """
    t0, t1 = cfg.t_begin, cfg.t_end
    r0 = ctx.params.r0
    if min(abs(t0), abs(t1)) < r0 * (1 - 1e-12) or t0 * t1 <= 0:
        raise OutsideValidity(f"lens frame needs |t| >= r0 = {r0} on one side; got [{t0}, {t1}]")
    st = LensStepper(ctx, phi0.grid, cfg.eta, cfg.p_c)
    times = step_times(t0, t1, cfg.dt, (), checkpoints, refine=False, growth=cfg.dt_growth)
    want = {float(c) for c in checkpoints}
    phi = np.array(phi0.values, dtype=complex)
    traj = LensTrajectory()
    traj.times.append(float(t0))
    traj.fields.append(Field(phi0.grid, phi.copy(), float(t0), Gauge.FREQUENCY))
    m0 = float(np.max(np.abs(phi)))
    for t, t2 in zip(times[:-1], times[1:]):
        new = st.step(phi, t, t2)
        traj.steps += 1
        if not np.all(np.isfinite(new)) or float(np.max(np.abs(new))) > cfg.blowup_factor * m0:
            raise BlowupDetected(f"lens field grew beyond {cfg.blowup_factor:g}x at t={t2:g}")
        if on_step is not None:
            on_step(t, t2, phi, new)
        phi = new
        if t2 in want or t2 == times[-1]:
            traj.times.append(float(t2))
            traj.fields.append(Field(phi0.grid, phi.copy(), float(t2), Gauge.FREQUENCY))
    return traj


# ---------------------------------------------------------------- bridge

@dataclass
class BridgeResult:
    field: Field
    A0: float
    weighted_in: float
    weighted_out: float
    trajectory: Trajectory


def bridge(ctx, cfg: EvolveConfig, u_at: Field, frm: float, to: float, beta: float) -> BridgeResult:
    """Physical-frame evolution across the inner window [-r0, r0].

    A0 is the ratio of the Galilean weighted norms at the two ends.
    """
    r0 = ctx.params.r0
    tol = 1e-12 * max(1.0, r0)
    if abs(frm) > r0 + tol or abs(to) > r0 + tol:
        raise OutsideValidity(f"bridge endpoints must lie in [-r0, r0] = [{-r0}, {r0}]")
    c = EvolveConfig(eta=cfg.eta, dt=cfg.dt, t_begin=frm, t_end=to, p_c=cfg.p_c, scheme=cfg.scheme,
                     potential_mode=cfg.potential_mode, beta=beta, blowup_factor=cfg.blowup_factor)
    u_in = u_at.with_values(u_at.values, time=frm)
    tr = evolve(ctx, c, u_in)
    w_in = tr.observables["weighted_beta"][0]
    w_out = tr.observables["weighted_beta"][-1]
    return BridgeResult(tr.final, w_out / w_in, w_in, w_out, tr)
