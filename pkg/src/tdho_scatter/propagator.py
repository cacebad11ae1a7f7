"""Linear propagator U(t, s) through the factorisation

    U(t, 0) = M1(t) D1(t) F M(zeta2/zeta1)(t),

with M1 the chirp of rate zeta2'/zeta2 and D1 the dilation by zeta2 carrying
the Maslov phase.  The "lens" representation of a field u at time t is
q = D1^{-1} M1^{-1} u, a function on the frequency side; the free part of the
flow then only acts by a chirp on F^{-1} q.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import (AsymptoticParams, SigmaModel, ZetaSolution,
                           extract_asymptotics, solve_zeta)
from .errors import DegenerateDenominator, OutsideValidity, ZeroZeta
from .spectral import (Field, Gauge, Grid, check_boundary, forward,
                       frac_derivative, inverse, resample)


@dataclass(frozen=True)
class PropagatorContext:
    zeta: ZetaSolution
    params: AsymptoticParams
    grid: Grid

    @classmethod
    def build(cls, model: SigmaModel, grid: Grid, t_max: float = 1000.0, step: float = 1e-2):
        zeta = solve_zeta(model, t_max, step)
        return cls(zeta, extract_asymptotics(zeta, grid.d), grid)

    @property
    def d(self):
        return self.grid.d

    @property
    def r0(self):
        return self.params.r0

    def z(self, t):
        return self.zeta.evaluate(t)

    def z2(self, t) -> float:
        z2 = self.zeta.evaluate(t)[2]
        if z2 == 0:
            raise DegenerateDenominator(f"zeta2({t}) = 0")
        return z2

    def outer_rate(self, t) -> float:
        """Chirp rate of M1(t), zeta2'/zeta2."""
        _, _, z2, z2p = self.zeta.evaluate(t)
        if z2 == 0:
            raise DegenerateDenominator(f"zeta2({t}) = 0")
        return z2p / z2

    def inner_rate(self, t) -> float:
        """Chirp rate of M(zeta2/zeta1)(t), i.e. rho = zeta1/zeta2."""
        z1, _, z2, _ = self.zeta.evaluate(t)
        if z2 == 0:
            raise DegenerateDenominator(f"zeta2({t}) = 0")
        return z1 / z2

    def plus_rate(self, t) -> float:
        return self.params.plus_rate(t)

    def m2_rate(self, t) -> float:
        return self.inner_rate(t) - self.plus_rate(t)

    def amplitude(self, t) -> complex:
        return self.zeta.amplitude(t, self.d)

    def factorized_valid(self, t) -> bool:
        return t == 0 or abs(t) >= self.params.r0

    def matched_lens_grid(self, t, grid: Grid | None = None) -> Grid:
        """Frequency grid on which the lens samples of a field on ``grid`` need no interpolation."""
        g = grid or self.grid
        return Grid(g.d, g.n, g.L / abs(self.z2(t)))


def _chirp(grid: Grid, rate: float):
    return np.exp(0.5j * rate * grid.r2)


def to_lens(ctx: PropagatorContext, u: Field, t: float | None = None, lens_grid: Grid | None = None,
            guard: bool = True) -> Field:
    """q = D1(t)^{-1} M1(t)^{-1} u on a frequency grid."""
    t = u.time if t is None else t
    z2 = ctx.z2(t)
    lg = lens_grid or ctx.matched_lens_grid(t, u.grid)
    if guard:
        check_boundary(u.values, f"physical field at t={t:g}")
    w = u.values * np.conj(_chirp(u.grid, ctx.outer_rate(t)))
    vals = resample(w, u.grid, z2 * lg.dx, lg.n)
    vals /= ctx.amplitude(t)
    return Field(lg, vals, t, Gauge.FREQUENCY)


def from_lens(ctx: PropagatorContext, q: Field, t: float | None = None, out_grid: Grid | None = None,
              guard: bool = True) -> Field:
    """u = M1(t) D1(t) q on a physical grid."""
    t = q.time if t is None else t
    z2 = ctx.z2(t)
    og = out_grid or ctx.grid
    if guard:
        check_boundary(q.values, f"lens field at t={t:g}")
    vals = resample(q.values, q.grid, og.dx / z2, og.n)
    vals *= ctx.amplitude(t) * _chirp(og, ctx.outer_rate(t))
    out = Field(og, vals, t, Gauge.PHYSICAL)
    if guard:
        check_boundary(out.values, f"output field at t={t:g}")
    return out


def pull_back(ctx: PropagatorContext, u: Field, t: float | None = None, profile_grid: Grid | None = None,
              guard: bool = True) -> Field:
    """U(0, t) u, returned on a position grid (the dual of the lens grid)."""
    t = u.time if t is None else t
    lg = None if profile_grid is None else profile_grid.dual()
    q = to_lens(ctx, u, t, lg, guard)
    yg = q.grid.dual()
    g = inverse(q.values, q.grid) * np.conj(_chirp(yg, ctx.inner_rate(t)))
    return Field(yg, g, 0.0, Gauge.PHYSICAL)


def push_forward(ctx: PropagatorContext, g: Field, t: float, out_grid: Grid | None = None,
                 guard: bool = True) -> Field:
    """U(t, 0) g for g given at time 0."""
    if guard:
        check_boundary(g.values, "datum at t=0")
    h = g.values * _chirp(g.grid, ctx.inner_rate(t))
    q = Field(g.grid.dual(), forward(h, g.grid), t, Gauge.FREQUENCY)
    return from_lens(ctx, q, t, out_grid or g.grid, guard)


def apply_U(ctx: PropagatorContext, f: Field, s: float, t: float, mode: str = "auto",
            out_grid: Grid | None = None, profile_grid: Grid | None = None, dt: float = 1e-2,
            guard: bool = True) -> Field:
    """U(t, s) f.

    mode: "auto" uses the factorisation when both ends are admissible
    (|.| >= r0 or exactly 0) and falls back to split-step otherwise;
    "factorized" and "splitstep" force a route.
    """
    og = out_grid or f.grid
    if s == t:
        return f.with_values(f.values.copy(), time=t)
    valid = ctx.factorized_valid(s) and ctx.factorized_valid(t)
    if mode == "factorized" and not valid:
        raise OutsideValidity(f"factorisation needs |s|, |t| >= r0 = {ctx.r0} or 0; got s={s}, t={t}")
    if mode == "splitstep" or (mode == "auto" and not valid):
        from .solver import EvolveConfig, PotentialMode, evolve
        cfg = EvolveConfig(eta=0.0, dt=dt, t_begin=s, t_end=t, potential_mode=PotentialMode.EXACT_QUADRATIC)
        src = f.with_values(f.values, time=s)
        res = evolve(ctx, cfg, src).final
        if og != res.grid:
            res = res.with_values(resample(res.values, res.grid, og.dx, og.n), grid=og)
        return res
    if mode not in ("auto", "factorized"):
        raise ValueError(f"unknown mode {mode!r}")
    if s == 0:
        g = f
    else:
        pg = profile_grid if profile_grid is not None else (og if t == 0 else None)
        g = pull_back(ctx, f.with_values(f.values, time=s), s, pg, guard)
    if t == 0:
        if g.grid != og:
            g = g.with_values(resample(g.values, g.grid, og.dx, og.n), grid=og)
        return g.with_values(g.values, time=0.0, gauge=Gauge.PHYSICAL)
    return push_forward(ctx, g, t, og, guard)


def dispersive_ratio(ctx: PropagatorContext, f: Field, t: float, out_grid: Grid | None = None) -> float:
    """||U(t,0) f||_inf |zeta2(t)|^{d/2} / ||f||_1."""
    u = push_forward(ctx, f, t, out_grid)
    l1 = float(np.sum(np.abs(f.values)) * f.grid.cell)
    return float(np.max(np.abs(u.values))) * abs(ctx.z2(t)) ** (ctx.d / 2) / l1


def conjugated_position(ctx: PropagatorContext, f: Field, t: float, beta: float) -> Field:
    """|J(t)|^beta f = |zeta2|^beta M1 |nabla|^beta M1^{-1} f."""
    if beta == 0:
        return f.copy()
    _, _, z2, z2p = ctx.zeta.evaluate(t)
    if z2 == 0:
        raise ZeroZeta(f"zeta2({t}) = 0")
    ch = _chirp(f.grid, z2p / z2)
    inner = f.with_values(f.values * np.conj(ch))
    return f.with_values(abs(z2) ** beta * ch * frac_derivative(inner, beta).values, time=t)


def remainder_apply(ctx: PropagatorContext, q: Field, t: float, out_grid: Grid | None = None,
                    guard: bool = True) -> Field:
    """R(t) q = M1 D1 (F M2 F^{-1} - 1) q for a frequency-side q."""
    yg = q.grid.dual()
    h = inverse(q.values, q.grid)
    m2 = np.expm1(0.5j * ctx.m2_rate(t) * yg.r2)
    dq = Field(q.grid, forward(h * m2, yg), t, Gauge.FREQUENCY)
    return from_lens(ctx, dq, t, out_grid, guard)
