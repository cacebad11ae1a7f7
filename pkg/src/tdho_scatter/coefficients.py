"""Potential models sigma(t), the fundamental solutions zeta1/zeta2 and their
large-time asymptotics."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .errors import (AssumptionViolated, DegenerateDenominator, InvalidModel,
                     NonConvergent)


class SigmaKind(str, Enum):
    ZERO = "zero"
    PIECEWISE = "piecewise"  # sigma0 on |t| < r1, sigma1 / t^2 outside
    TABLE = "table"


@dataclass(frozen=True)
class SigmaModel:
    kind: SigmaKind = SigmaKind.ZERO
    sigma0: float = 0.0
    sigma1: float = 0.0
    r1: float = 1.0
    table_t: tuple = field(default=(), repr=False)
    table_s: tuple = field(default=(), repr=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", SigmaKind(self.kind))
        if self.kind == SigmaKind.PIECEWISE:
            if not self.r1 > 0:
                raise InvalidModel("r1 must be positive")
            if self.sigma1 >= 0.25:
                raise InvalidModel(f"sigma1 = {self.sigma1} >= 1/4: zeta is oscillatory, no power-law asymptotics")
        elif self.kind == SigmaKind.TABLE:
            t = np.asarray(self.table_t, float)
            s = np.asarray(self.table_s, float)
            if t.size < 2 or t.size != s.size:
                raise InvalidModel("sigma table needs at least two (t, sigma) rows")
            if np.any(np.diff(t) <= 0):
                raise InvalidModel("sigma table times must be strictly increasing")
            if self.tail_strength() >= 0.25:
                raise InvalidModel(f"tail strength t^2 sigma = {self.tail_strength():.4g} >= 1/4")

    @classmethod
    def zero(cls):
        return cls(SigmaKind.ZERO)

    @classmethod
    def piecewise(cls, sigma0, sigma1, r1):
        return cls(SigmaKind.PIECEWISE, float(sigma0), float(sigma1), float(r1))

    @classmethod
    def from_table(cls, t, sigma):
        return cls(SigmaKind.TABLE, table_t=tuple(map(float, t)), table_s=tuple(map(float, sigma)))

    @classmethod
    def from_csv(cls, path):
        ts, ss = [], []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                ts.append(float(row["t"]))
                ss.append(float(row["sigma"]))
        return cls.from_table(ts, ss)

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        if self.kind == SigmaKind.PIECEWISE:
            out.update(sigma0=self.sigma0, sigma1=self.sigma1, r1=self.r1)
        elif self.kind == SigmaKind.TABLE:
            out.update(t=list(self.table_t), sigma=list(self.table_s))
        return out

    def tail_strength(self) -> float:
        """sigma1 for the piecewise model; t^2 sigma at the table ends otherwise."""
        if self.kind == SigmaKind.PIECEWISE:
            return self.sigma1
        if self.kind == SigmaKind.ZERO:
            return 0.0
        t0, t1 = self.table_t[0], self.table_t[-1]
        return max(t0 ** 2 * self.table_s[0], t1 ** 2 * self.table_s[-1])

    def covers(self, t_lo, t_hi) -> bool:
        if self.kind != SigmaKind.TABLE:
            return True
        return self.table_t[0] <= t_lo and t_hi <= self.table_t[-1]

    def breakpoints(self) -> tuple:
        if self.kind == SigmaKind.PIECEWISE:
            return (-self.r1, self.r1)
        return ()

    def __call__(self, t):
        t = np.asarray(t, float)
        if self.kind == SigmaKind.ZERO:
            return np.zeros_like(t)
        if self.kind == SigmaKind.PIECEWISE:
            at = np.abs(t)
            outer = self.sigma1 / np.maximum(at, self.r1) ** 2
            return np.where(at < self.r1, self.sigma0, outer)
        return np.interp(t, self.table_t, self.table_s)

    def exponent(self) -> float:
        """lambda = (1 - sqrt(1 - 4 sigma1)) / 2 from the tail strength."""
        return 0.5 * (1.0 - math.sqrt(1.0 - 4.0 * self.tail_strength()))

    def step_matrix(self, t, t2):
        """Fundamental matrix Phi(t2, t) of y'' + sigma y = 0 on a smooth piece.

        Returns (phi11, phi12, phi21, phi22, 1 - phi11, 1 - phi22); the last two are
        computed without cancellation where a closed form exists.
        """
        h = t2 - t
        if self.kind == SigmaKind.ZERO or (self.kind == SigmaKind.PIECEWISE and self.sigma0 == 0
                                           and max(abs(t), abs(t2)) <= self.r1 and self._inner(t, t2)):
            return 1.0, h, 0.0, 1.0, 0.0, 0.0
        if self.kind == SigmaKind.PIECEWISE:
            if self._inner(t, t2):
                s0 = self.sigma0
                if s0 > 0:
                    w = math.sqrt(s0)
                    c, sn = math.cos(w * h), math.sin(w * h)
                    om = 2.0 * math.sin(0.5 * w * h) ** 2
                    return c, sn / w, -w * sn, c, om, om
                w = math.sqrt(-s0)
                c, sn = math.cosh(w * h), math.sinh(w * h)
                om = -2.0 * math.sinh(0.5 * w * h) ** 2
                return c, sn / w, w * sn, c, om, om
            if t * t2 <= 0:
                raise ValueError("step crosses t = 0 outside the inner region")
            lam = self.exponent()
            if self.sigma1 == 0:
                return 1.0, h, 0.0, 1.0, 0.0, 0.0
            ell = math.log1p(h / t)
            e_l = math.expm1(lam * ell)
            e_m = math.expm1((1 - lam) * ell)
            e_lm1 = math.expm1((lam - 1) * ell)
            e_ml = math.expm1(-lam * ell)
            den = 2 * lam - 1
            om11 = (-lam * e_m + (1 - lam) * e_l) / den
            om22 = (-lam * e_lm1 + (1 - lam) * e_ml) / den
            phi12 = t * (e_l - e_m) / den
            # phi21 = (y1'(t2) y2'(t) - y2'(t2) y1'(t)) / W with y1 = |t|^{1-lam}, y2 = |t|^lam
            phi21 = lam * (1 - lam) / t * ((1 + e_ml) - (1 + e_lm1)) / den
            return 1 - om11, phi12, phi21, 1 - om22, om11, om22
        return self._rk_step(t, t2)

    def _inner(self, t, t2):
        lo, hi = min(t, t2), max(t, t2)
        return -self.r1 <= lo and hi <= self.r1

    def _rk_step(self, t, t2, sub=8):
        h = (t2 - t) / sub
        P = np.eye(2)
        tt = t

        def A(s):
            return np.array([[0.0, 1.0], [-float(self(s)), 0.0]])

        for _ in range(sub):
            k1 = A(tt) @ P
            k2 = A(tt + h / 2) @ (P + h / 2 * k1)
            k3 = A(tt + h / 2) @ (P + h / 2 * k2)
            k4 = A(tt + h) @ (P + h * k3)
            P = P + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            tt += h
        return P[0, 0], P[0, 1], P[1, 0], P[1, 1], 1 - P[0, 0], 1 - P[1, 1]


@dataclass
class ZetaSolution:
    """Sampled fundamental solutions with piecewise Hermite interpolation."""
    model: SigmaModel
    times: np.ndarray
    zeta1: np.ndarray
    zeta1p: np.ndarray
    zeta2: np.ndarray
    zeta2p: np.ndarray
    order: int = 3

    def __post_init__(self):
        self._build()

    def _build(self):
        t = self.times
        edges = [t[0]] + [b for b in self.model.breakpoints() if t[0] < b < t[-1]] + [t[-1]]
        self._edges = np.array(edges)
        self._pieces = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            m = (t >= lo) & (t <= hi)
            ts = t[m]
            # sigma evaluated inside the piece so the kink is one-sided
            mid_s = self.model(np.clip(ts, np.nextafter(lo, hi), np.nextafter(hi, lo)))
            z1, z1p, z2, z2p = self.zeta1[m], self.zeta1p[m], self.zeta2[m], self.zeta2p[m]
            self._pieces.append((
                CubicHermiteSpline(ts, z1, z1p),
                CubicHermiteSpline(ts, z1p, -mid_s * z1),
                CubicHermiteSpline(ts, z2, z2p),
                CubicHermiteSpline(ts, z2p, -mid_s * z2),
            ))

    @property
    def t_min(self):
        return float(self.times[0])

    @property
    def t_max(self):
        return float(self.times[-1])

    def covers(self, t) -> bool:
        t = np.asarray(t)
        return bool(np.all((t >= self.t_min) & (t <= self.t_max)))

    def evaluate(self, t):
        """(zeta1, zeta1', zeta2, zeta2') at t; scalars in, scalars out."""
        scalar = np.ndim(t) == 0
        ta = np.atleast_1d(np.asarray(t, float))
        if not self.covers(ta):
            raise ValueError(f"t outside zeta range [{self.t_min}, {self.t_max}]")
        if self.model.kind == SigmaKind.ZERO:
            out = (np.ones_like(ta), np.zeros_like(ta), ta.copy(), np.ones_like(ta))
        else:
            idx = np.clip(np.searchsorted(self._edges, ta, side="right") - 1, 0, len(self._pieces) - 1)
            out = tuple(np.empty_like(ta) for _ in range(4))
            for k, piece in enumerate(self._pieces):
                m = idx == k
                if m.any():
                    for o, sp in zip(out, piece):
                        o[m] = sp(ta[m])
        if scalar:
            return tuple(float(o[0]) for o in out)
        return out

    def wronskian(self, t=None):
        if t is None:
            return self.zeta1 * self.zeta2p - self.zeta1p * self.zeta2
        z1, z1p, z2, z2p = self.evaluate(t)
        return z1 * z2p - z1p * z2

    def zero_count(self, t) -> int:
        """Number of zeros of zeta2 strictly between 0 and t (node sign changes)."""
        if t == 0:
            return 0
        m = (self.times > 0) & (self.times < t) if t > 0 else (self.times < 0) & (self.times > t)
        z = self.zeta2[m]
        return int(np.sum(np.signbit(z[1:]) != np.signbit(z[:-1]))) if z.size > 1 else 0

    def amplitude(self, t, d) -> complex:
        """|zeta2|^{-d/2} times the Maslov phase; replaces (i zeta2)^{-d/2}."""
        _, _, z2, _ = self.evaluate(t)
        if z2 == 0:
            raise DegenerateDenominator(f"zeta2({t}) = 0")
        n = self.zero_count(t)
        sgn = 1.0 if t > 0 else -1.0
        return abs(z2) ** (-d / 2) * np.exp(-1j * sgn * np.pi * d * (1 + 2 * n) / 4)

    def to_csv(self, path):
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "zeta1", "zeta1p", "zeta2", "zeta2p"])
            for row in zip(self.times, self.zeta1, self.zeta1p, self.zeta2, self.zeta2p):
                w.writerow([f"{v:.17g}" for v in row])
        return path

    @classmethod
    def from_csv(cls, path, model: SigmaModel):
        cols = [[] for _ in range(5)]
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            next(r)
            for row in r:
                for c, v in zip(cols, row):
                    c.append(float(v))
        arrs = [np.array(c) for c in cols]
        return cls(model, *arrs)


def _node_times(model, t_max, step):
    t_c = min(t_max, 2.0 * max(1.0, model.r1 if model.kind == SigmaKind.PIECEWISE else 1.0))
    n_in = max(2, int(math.ceil(t_c / step)))
    inner = np.linspace(0.0, t_c, n_in + 1)
    extra = [b for b in model.breakpoints() if 0 < b < t_max]
    nodes = [inner]
    if t_max > t_c:
        ratio = 1.0 + step / t_c
        k = int(math.ceil(math.log(t_max / t_c) / math.log(ratio)))
        outer = t_c * ratio ** np.arange(1, k + 1)
        outer[-1] = t_max
        outer = outer[outer <= t_max]
        nodes.append(outer)
    pos = np.unique(np.concatenate(nodes + [np.array(extra)]))
    return pos


def solve_zeta(model: SigmaModel, t_max: float, step: float = 1e-2, rtol: float = 1e-12,
               atol: float = 1e-14) -> ZetaSolution:
    """Integrate zeta'' + sigma zeta = 0 on [-t_max, t_max] for both fundamental solutions."""
    if not t_max > 0 or not step > 0:
        raise ValueError("t_max and step must be positive")
    if not model.covers(-t_max, t_max):
        raise NonConvergent(f"sigma table does not cover [-{t_max}, {t_max}]")
    pos = _node_times(model, t_max, step)
    times = np.concatenate([-pos[:0:-1], pos])
    if model.kind == SigmaKind.ZERO:
        one = np.ones_like(times)
        return ZetaSolution(model, times, one, np.zeros_like(times), times.copy(), one.copy())

    def rhs(t, y):
        s = float(model(t))
        return [y[1], -s * y[0], y[3], -s * y[2]]

    def sweep(direction):
        nodes = pos * direction
        cuts = [0.0] + [b for b in sorted(model.breakpoints(), key=abs) if b * direction > 0 and abs(b) < t_max]
        cuts.append(direction * t_max)
        y = np.array([1.0, 0.0, 0.0, 1.0])
        out = np.empty((4, nodes.size))
        out[:, 0] = y
        for a, b in zip(cuts[:-1], cuts[1:]):
            sel = np.nonzero((np.abs(nodes) > abs(a)) & (np.abs(nodes) <= abs(b)))[0]
            if sel.size == 0:
                continue
            # nudge the evaluation of sigma into the open piece
            lo, hi = (a, b) if direction > 0 else (b, a)
            res = solve_ivp(lambda t, yy: rhs(min(max(t, np.nextafter(lo, hi)), np.nextafter(hi, lo)), yy),
                            (a, b), y, method="RK45", t_eval=nodes[sel], rtol=rtol, atol=atol)
            if not res.success or res.y.shape[1] != sel.size:
                raise NonConvergent(f"zeta integration failed on [{a}, {b}]: {res.message}")
            out[:, sel] = res.y
            y = res.y[:, -1]
        if not np.all(np.isfinite(out)):
            raise NonConvergent("non-finite zeta values")
        return out

    plus = sweep(+1)
    minus = sweep(-1)
    data = np.concatenate([minus[:, :0:-1], plus], axis=1)
    return ZetaSolution(model, times, data[0], data[1], data[2], data[3])


@dataclass(frozen=True)
class AsymptoticParams:
    """Power-law asymptotics zeta_j ~ a_j |t|^{1-lambda}, one pair per time direction."""
    lam: float
    a1: float
    a2: float
    a1_minus: float
    a2_minus: float
    delta0: float
    r0: float
    d: int
    fit_residual: float = 0.0
    k13_exponent: float = float("nan")

    @property
    def p_c(self) -> float:
        return 2.0 / (self.d * (1.0 - self.lam))

    @property
    def kappa(self) -> float:
        """Time-decay exponent of the nonlinear coefficient, 1/(1 - lambda)."""
        return 1.0 / (1.0 - self.lam)

    def side(self, t):
        return (self.a1, self.a2) if t > 0 else (self.a1_minus, self.a2_minus)

    def c_plus(self, t=1.0) -> float:
        return abs(self.side(t)[1]) ** self.kappa

    def plus_rate(self, t) -> float:
        """a1/a2 on the side of t; M_+ multiplies by exp(i rate |x|^2/2)."""
        a1, a2 = self.side(t)
        return a1 / a2

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("lam", "a1", "a2", "a1_minus", "a2_minus", "delta0", "r0",
                                               "d", "fit_residual", "k13_exponent")} | {
            "p_c": self.p_c, "c_plus": self.c_plus(1.0)}


def _two_term_fit(t, z, lam):
    at = np.abs(t)
    A = np.stack([at ** (1 - lam), at ** lam], axis=1)
    scale = np.abs(A).max(axis=0)
    coef, *_ = np.linalg.lstsq(A / scale, z, rcond=None)
    coef = coef / scale
    resid = z - A @ coef
    return coef, float(np.max(np.abs(resid)) / max(np.max(np.abs(z)), 1e-300))


def extract_asymptotics(zeta: ZetaSolution, d: int, margin: float = 0.9) -> AsymptoticParams:
    model = zeta.model
    if d not in (1, 2, 3):
        raise ValueError("d must be 1, 2 or 3")
    r1 = model.r1 if model.kind == SigmaKind.PIECEWISE else 1.0
    T = min(-zeta.t_min, zeta.t_max)
    if T < 10 * max(1.0, r1):
        raise ValueError(f"zeta must cover |t| >= {10 * max(1.0, r1)}, covers {T}")
    if model.kind == SigmaKind.ZERO:
        lam = 0.0
    elif model.kind == SigmaKind.PIECEWISE:
        lam = model.exponent()
    else:
        m = zeta.times >= T / 10
        slope = np.polyfit(np.log(zeta.times[m]), np.log(np.abs(zeta.zeta2[m])), 1)[0]
        lam = 1.0 - slope
        if lam > 0.5:
            lam = 1.0 - lam
    if not lam < 0.5:
        raise InvalidModel(f"lambda = {lam} is not below 1/2")
    if d == 3 and not lam > -1.0 / 3.0:
        raise InvalidModel(f"d = 3 needs lambda > -1/3, got {lam}")

    coefs = {}
    resid = 0.0
    for sgn in (1, -1):
        m = (sgn * zeta.times >= T / 10) & (sgn * zeta.times <= T)
        if model.kind == SigmaKind.ZERO:
            coefs[sgn] = (0.0, float(sgn))
            continue
        c1, r_1 = _two_term_fit(zeta.times[m], zeta.zeta1[m], lam)
        c2, r_2 = _two_term_fit(zeta.times[m], zeta.zeta2[m], lam)
        coefs[sgn] = (float(c1[0]), float(c2[0]))
        resid = max(resid, r_1, r_2)
    a1, a2 = coefs[1]
    a1m, a2m = coefs[-1]
    if a2 == 0 or a2m == 0:
        raise AssumptionViolated("leading coefficient of zeta2 vanishes")

    # r0: beyond it zeta2 / |t|^{1-lam} stays within margin * |a2| / 2 of a2
    r_floor = max(1.0, r1)
    r0 = r_floor
    for sgn, a in ((1, a2), (-1, a2m)):
        m = sgn * zeta.times >= r_floor
        tt = np.abs(zeta.times[m])
        dev = np.abs(zeta.zeta2[m] / tt ** (1 - lam) - a)
        bad = np.nonzero(dev > margin * abs(a) / 2)[0]
        if bad.size:
            last = bad[-1]
            if last + 1 >= tt.size or tt[last + 1] > T / 10:
                raise AssumptionViolated("zeta2 never settles to its power law inside the computed range")
            r0 = max(r0, float(tt[last + 1]))
    m = np.abs(zeta.times) >= r0
    delta0 = float(np.min(np.abs(zeta.zeta2[m])))

    k13 = float("nan")
    if model.kind != SigmaKind.ZERO:
        m = (zeta.times >= max(10 * r0, T / 100)) & (zeta.times <= T)
        tt = zeta.times[m]
        dev = np.abs(zeta.zeta2[m] / tt ** (1 - lam) - a2)
        if tt.size >= 4 and np.all(dev > 0):
            k13 = float(-np.polyfit(np.log(tt), np.log(dev), 1)[0])
    return AsymptoticParams(lam, a1, a2, a1m, a2m, delta0, r0, d, resid, k13)


def m2_deviation(zeta: ZetaSolution, params: AsymptoticParams, t, x):
    """|M2(t, x) - 1| with M2 = exp(i |x|^2 (zeta1/zeta2 - a1/a2) / 2)."""
    if abs(t) < params.r0:
        raise ValueError(f"|t| = {abs(t)} below r0 = {params.r0}")
    z1, _, z2, _ = zeta.evaluate(t)
    if z2 == 0:
        raise DegenerateDenominator(f"zeta2({t}) = 0")
    x = np.asarray(x, float)
    r2 = x ** 2 if x.ndim == 0 else np.sum(x ** 2, axis=-1)
    rate = z1 / z2 - params.plus_rate(t)
    return np.abs(np.expm1(0.5j * rate * r2))


def m2_rate(zeta: ZetaSolution, params: AsymptoticParams, t) -> float:
    z1, _, z2, _ = zeta.evaluate(t)
    if z2 == 0:
        raise DegenerateDenominator(f"zeta2({t}) = 0")
    return z1 / z2 - params.plus_rate(t)
