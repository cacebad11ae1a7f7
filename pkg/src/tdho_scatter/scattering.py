"""Final-state problem, remainder terms, Picard map and forward extraction.

Everything past |t| = r0 runs in the lens representation phi = D1^{-1} M1^{-1} u
on a fixed frequency grid.  The datum u_minus lives on a position grid
("profile grid"); the lens grid is its dual, so F^{-1} phi lands back on the
profile grid and equals M(zeta2/zeta1) U(0, t) u.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .diagnostics import RateFit, fit_power_law, running_mu, xb_exponent, xb_norm
from .errors import (DomainError, FitFailed, NotSettled, OutsideValidity,
                     QuadratureUnderflow, SmallnessViolated)
from .propagator import PropagatorContext, from_lens, to_lens
from .solver import (EvolveConfig, LensStepper, PotentialMode, bridge,
                     coupling_integral, evolve, evolve_profile, step_times)
from .spectral import Field, Gauge, Grid, forward, inverse


# ---------------------------------------------------------------- data

def check_exponents(d, p_c, alpha=None, beta=None, delta=None):
    """Validate d/2 < delta < beta < alpha < min(d, 1 + p_c); missing entries are skipped."""
    top = min(d, 1 + p_c)
    chain = [("d/2", d / 2)]
    for name, v in (("delta", delta), ("beta", beta), ("alpha", alpha)):
        if v is not None:
            chain.append((name, v))
    chain.append(("min(d, 1+p_c)", top))
    for (n1, v1), (n2, v2) in zip(chain[:-1], chain[1:]):
        if not v1 < v2:
            raise ValueError(
                f"exponent chain d/2 < delta < beta < alpha < min(d, 1+p_c) violated: {n1} = {v1:g} is not "
                f"below {n2} = {v2:g} (hypothesis of the small-data scattering results)")


@dataclass
class FinalDatum:
    u_minus: Field
    alpha: float
    beta: float
    delta: float
    threshold: float = math.inf

    @property
    def profile_grid(self) -> Grid:
        return self.u_minus.grid

    @property
    def lens_grid(self) -> Grid:
        return self.u_minus.grid.dual()

    @property
    def epsilon(self) -> float:
        g = self.u_minus.grid
        return float(np.sqrt(np.sum(np.abs(self.u_minus.values * g.bracket ** self.alpha) ** 2) * g.cell))

    @property
    def u_hat(self) -> np.ndarray:
        return forward(self.u_minus.values, self.u_minus.grid)

    def validate(self, p_c):
        check_exponents(self.u_minus.grid.d, p_c, self.alpha, self.beta, self.delta)
        if self.epsilon > self.threshold:
            raise SmallnessViolated("final_datum", self.epsilon, self.threshold)

    def rotated(self, gamma) -> "FinalDatum":
        return FinalDatum(self.u_minus.with_values(self.u_minus.values * np.exp(1j * gamma)),
                          self.alpha, self.beta, self.delta, self.threshold)


def nonlin(z, eta, p):
    return eta * np.abs(z) ** p * z


def _default_sign(t):
    return 1.0 if t < 0 else -1.0


def profile_hat(ctx: PropagatorContext, datum: FinalDatum, t: float, eta: float, sign: float | None = None):
    """w(t) = u_hat exp(i sign (eta/c+) |u_hat|^p log|t|) on the lens grid.

    The default sign (+ for t < 0, - for t > 0) makes i w_t = eta |w|^p w / (c+ |t|)
    on both sides.
    """
    uh = datum.u_hat
    if eta == 0:
        return uh
    sg = _default_sign(t) if sign is None else sign
    c = ctx.params.c_plus(t)
    return uh * np.exp(1j * sg * (eta / c) * np.abs(uh) ** ctx.params.p_c * math.log(abs(t)))


def profile_up(ctx: PropagatorContext, datum: FinalDatum, t: float, eta: float, out_grid: Grid | None = None,
               sign: float | None = None, guard: bool = True) -> Field:
    """u_p(t) = M1(t) D1(t) w(t) on a physical grid."""
    if abs(t) < ctx.params.r0:
        raise OutsideValidity(f"profile needs |t| >= r0 = {ctx.params.r0}")
    q = Field(datum.lens_grid, profile_hat(ctx, datum, t, eta, sign), t, Gauge.FREQUENCY)
    return from_lens(ctx, q, t, out_grid, guard)


# ---------------------------------------------------------------- result containers

@dataclass
class CurveResult:
    """Error curve samples plus a decay fit; shared by both directions."""
    times: np.ndarray
    e_weighted: np.ndarray
    e_l2: np.ndarray
    fit: RateFit | None
    meta: dict = field(default_factory=dict)

    @property
    def mu(self) -> float:
        return self.fit.mu if self.fit is not None else float("nan")

    def mu_running(self):
        return running_mu(self.times, self.e_weighted)

    def curve_to_csv(self, path):
        path = Path(path)
        mr = self.mu_running()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "e_weighted", "e_l2", "mu_running"])
            for row in zip(self.times, self.e_weighted, self.e_l2, mr):
                w.writerow([f"{float(v):.17g}" for v in row])
        return path


@dataclass
class FinalStateResult(CurveResult):
    phi_stop: Field | None = None
    u_stop: Field | None = None
    T_start: float = 0.0
    t_stop: float = 0.0


@dataclass
class ScatterResult(CurveResult):
    u_plus: Field | None = None
    phi_end: Field | None = None
    diagnostics: dict = field(default_factory=dict)
    theta: np.ndarray | None = None

    def to_json(self, path):
        payload = {
            "mu": self.mu,
            "fit": None if self.fit is None else self.fit.to_dict(),
            "u_plus_l2": self.u_plus.l2() if self.u_plus is not None else None,
            "samples": [[float(t), float(e)] for t, e in zip(self.times, self.e_weighted)],
            "diagnostics": {k: [float(x) for x in v] for k, v in self.diagnostics.items()},
            "meta": self.meta,
        }
        Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True, default=float))
        return path


def log_checkpoints(t_a, t_b, per_decade):
    """Log-spaced times between t_a and t_b (same sign), endpoints included, ordered from t_a."""
    a, b = abs(t_a), abs(t_b)
    k = max(2, int(round(abs(math.log10(b / a)) * per_decade)) + 1)
    mags = np.geomspace(a, b, k)
    mags[0], mags[-1] = a, b
    return math.copysign(1.0, t_a) * mags


def _fit_or_none(t, v, window):
    try:
        return fit_power_law(t, v, window)
    except (FitFailed, ValueError):
        return None


# ---------------------------------------------------------------- final-state problem

def final_state_solve(ctx: PropagatorContext, datum: FinalDatum, T_start: float, eta: float,
                      t_stop: float | None = None, dt: float = 1e-2, dt_growth: float = 0.01,
                      per_decade: int = 20, frame: str = "lens", phys_grid: Grid | None = None,
                      phys_dt: float = 1e-2, fit_window=None, sign=None) -> FinalStateResult:
    """Seed u(T_start) = u_p(T_start) and evolve forward to t_stop (default -r0).

    e(t) = ||<y>^beta U(0,t)(u - u_p)(t)||_2 is recorded at log-spaced checkpoints;
    in the lens representation U(0,t)(u - u_p) = M(zeta2/zeta1)^{-1} F^{-1}(phi - w).
    """
    r0 = ctx.params.r0
    t_stop = -r0 if t_stop is None else t_stop
    if not (T_start < t_stop < 0):
        raise ValueError("need T_start < t_stop < 0")
    if abs(t_stop) < r0 * (1 - 1e-12):
        raise OutsideValidity("t_stop must satisfy |t_stop| >= r0")
    if abs(T_start) < 10 * r0:
        raise ValueError(f"T_start must be <= -10 r0 = {-10 * r0}")
    cps = log_checkpoints(T_start, t_stop, per_decade)
    lg = datum.lens_grid
    yg = datum.profile_grid
    bracket = yg.bracket ** datum.beta
    phis = []
    if frame == "lens":
        phi0 = Field(lg, profile_hat(ctx, datum, T_start, eta, sign), T_start, Gauge.FREQUENCY)
        cfg = EvolveConfig(eta=eta, dt=dt, t_begin=T_start, t_end=t_stop, dt_growth=dt_growth)
        tr = evolve_profile(ctx, cfg, phi0, checkpoints=cps[1:-1])
        phis = tr.fields
        steps = tr.steps
    elif frame == "physical":
        if phys_grid is None:
            raise ValueError("physical frame needs phys_grid")
        u0 = profile_up(ctx, datum, T_start, eta, phys_grid, sign)
        cfg = EvolveConfig(eta=eta, dt=phys_dt, t_begin=T_start, t_end=t_stop,
                           potential_mode=PotentialMode.EXACT_QUADRATIC)
        tr = evolve(ctx, cfg, u0, sample_times=cps[1:-1])
        phis = [to_lens(ctx, u, u.time, lg) for u in tr.fields]
        steps = tr.steps
    else:
        raise ValueError(f"unknown frame {frame!r}")
    ts, ew, el = [], [], []
    for ph in phis:
        diff = ph.values - profile_hat(ctx, datum, ph.time, eta, sign)
        h = inverse(diff, lg)
        ts.append(ph.time)
        ew.append(float(np.sqrt(np.sum(np.abs(h * bracket) ** 2) * yg.cell)))
        el.append(float(np.sqrt(np.sum(np.abs(diff) ** 2) * lg.cell)))
    ts, ew, el = np.array(ts), np.array(ew), np.array(el)
    if fit_window is None:
        fit_window = (abs(t_stop), min(10 * abs(t_stop), abs(T_start) / 10))
    fit = _fit_or_none(ts, ew, fit_window)
    u_stop = None
    if phys_grid is not None:
        u_stop = tr.fields[-1] if frame == "physical" else from_lens(ctx, phis[-1], t_stop, phys_grid)
    meta = {"frame": frame, "steps": steps, "T_start": T_start, "t_stop": t_stop, "eta": eta,
            "fit_window": list(fit_window), "epsilon": datum.epsilon,
            "tail_bound": (datum.epsilon * abs(T_start) ** (-fit.mu)) if fit is not None else None}
    return FinalStateResult(ts, ew, el, fit, meta, phi_stop=phis[-1], u_stop=u_stop,
                            T_start=T_start, t_stop=t_stop)


# ---------------------------------------------------------------- remainder terms

def remainder_terms(ctx: PropagatorContext, datum: FinalDatum, t: float, eta: float, sign=None) -> dict:
    """Pointwise-in-time pieces of E(t), all pulled back by U(0, t).

    A_t       : ((c+|t|)/|zeta2|^{1/(1-lam)} - 1) F(w(t)), frequency side
    Er_t      : U(0,t) R(t) w(t) = M+^{-1}(1 - M2^{-1}) F^{-1} w(t), profile side
    Er_source : M+^{-1}(1 - M2^{-1}) F^{-1} F(w(t)) / (c+|t|), integrand of the E_r integral
    """
    if abs(t) < ctx.params.r0:
        raise OutsideValidity(f"remainder terms need |t| >= r0 = {ctx.params.r0}")
    p = ctx.params
    z2 = ctx.z2(t)
    lg, yg = datum.lens_grid, datum.profile_grid
    w = profile_hat(ctx, datum, t, eta, sign)
    cp = p.c_plus(t)
    ratio = cp * abs(t) / abs(z2) ** p.kappa
    fw = nonlin(w, eta, p.p_c)
    A = (ratio - 1.0) * fw if ratio != 1.0 else np.zeros_like(fw)
    plus = np.exp(-0.5j * p.plus_rate(t) * yg.r2)
    one_minus = -np.expm1(-0.5j * ctx.m2_rate(t) * yg.r2)
    er = plus * one_minus * inverse(w, lg)
    src = plus * one_minus * inverse(fw, lg) / (cp * abs(t))
    l2 = lambda v, g: float(np.sqrt(np.sum(np.abs(v) ** 2) * g.cell))
    wb = yg.bracket ** datum.beta
    return {
        "A_t": Field(lg, A, t, Gauge.FREQUENCY),
        "Er_t": Field(yg, er, t, Gauge.PROFILE),
        "Er_source": Field(yg, src, t, Gauge.PROFILE),
        "R_norm": l2(er, yg),
        "R_weighted": l2(er * wb, yg),
        "A_norm": l2(A, lg),
        "ratio": ratio,
    }


# ---------------------------------------------------------------- Picard map

def picard_times(T_start, r0, per_decade=40):
    return log_checkpoints(T_start, -r0, per_decade)


def _cumulative(q, times):
    """int_{times[0]}^{times[k]} q ds by trapezoid in log|s| (ds = s dlog|s|)."""
    tau = np.log(np.abs(times))
    shape = (-1,) + (1,) * (q.ndim - 1)
    return cumulative_trapezoid(q * times.reshape(shape), x=tau, axis=0, initial=0)


def _tail_bound(times, norms):
    """Extrapolated int_{-inf}^{times[0]} ||q(s)|| ds from the decay over the first decade."""
    T = abs(times[0])
    m = np.abs(times) >= T / 10
    try:
        f = fit_power_law(np.abs(times[m]), norms[m])
    except (FitFailed, ValueError):
        return float("inf"), float("nan")
    g = f.mu
    if g <= 1:
        return float("inf"), g
    return f.c * T ** (1 - g) / (g - 1), g


@dataclass
class PicardSource:
    E: np.ndarray
    tails: dict
    w: np.ndarray


def picard_source(ctx, datum, times, eta, sign=None) -> PicardSource:
    """E(t) pulled back by U(0,t), on the log time grid."""
    p = ctx.params
    lg, yg = datum.lens_grid, datum.profile_grid
    K = times.size
    qa = np.empty((K,) + yg.shape, complex)
    qr = np.empty_like(qa)
    bnd = np.empty_like(qa)
    ws = np.empty((K,) + lg.shape, complex)
    for k, s in enumerate(times):
        w = profile_hat(ctx, datum, s, eta, sign)
        ws[k] = w
        z2 = ctx.z2(s)
        rho = ctx.inner_rate(s)
        fw = nonlin(w, eta, p.p_c)
        coup = abs(z2) ** (-p.kappa) - 1.0 / (p.c_plus(s) * abs(s))
        qa[k] = np.exp(-0.5j * rho * yg.r2) * inverse(coup * fw, lg)
        plus = np.exp(-0.5j * p.plus_rate(s) * yg.r2)
        one_minus = -np.expm1(-0.5j * ctx.m2_rate(s) * yg.r2)
        qr[k] = plus * one_minus * inverse(fw, lg) / (p.c_plus(s) * abs(s))
        bnd[k] = plus * one_minus * inverse(w, lg)
    E = -1j * _cumulative(qa, times) + 1j * _cumulative(qr, times) + bnd
    nrm = lambda a: np.sqrt(np.sum(np.abs(a.reshape(K, -1)) ** 2, axis=1) * yg.cell)
    tails = {"A": _tail_bound(times, nrm(qa)), "Er": _tail_bound(times, nrm(qr))}
    return PicardSource(E, tails, ws)


def picard_step(ctx, datum, V, times, eta, source: PicardSource | None = None, sign=None):
    """One application of the integral map on a log-spaced grid from T_start to -r0.

    V[k] is U(0, t_k) v(t_k) sampled on the profile grid.
    """
    times = np.asarray(times, float)
    if times.size < 3:
        raise QuadratureUnderflow("need at least three time samples")
    if np.any(times >= 0) or np.any(np.diff(times) <= 0):
        raise ValueError("times must be negative and increasing")
    steps = np.abs(np.diff(np.log(np.abs(times))))
    if steps.max() > 0.25:
        raise QuadratureUnderflow(f"log-time spacing {steps.max():.3f} too coarse for the 1/|s| kernel")
    src = source if source is not None else picard_source(ctx, datum, times, eta, sign)
    p = ctx.params
    lg, yg = datum.lens_grid, datum.profile_grid
    K = times.size
    qn = np.empty((K,) + yg.shape, complex)
    for k, s in enumerate(times):
        rho = ctx.inner_rate(s)
        chirp = np.exp(0.5j * rho * yg.r2)
        phi_v = forward(chirp * V[k], yg)
        w = src.w[k]
        G = abs(ctx.z2(s)) ** (-p.kappa) * (nonlin(w + phi_v, eta, p.p_c) - nonlin(w, eta, p.p_c))
        qn[k] = np.conj(chirp) * inverse(G, lg)
    out = -1j * _cumulative(qn, times) + src.E
    nrm = np.sqrt(np.sum(np.abs(qn.reshape(K, -1)) ** 2, axis=1) * yg.cell)
    info = {"tail_N": _tail_bound(times, nrm) if np.any(nrm > 0) else (0.0, float("nan")),
            "tails_E": src.tails}
    return out, info


def sup_l2(V, grid):
    K = V.shape[0]
    return float(np.max(np.sqrt(np.sum(np.abs(V.reshape(K, -1)) ** 2, axis=1) * grid.cell)))


@dataclass
class PicardResult:
    times: np.ndarray
    V: np.ndarray
    residuals: list
    kappas: list
    kappa_pair: float
    xb_E: float
    xb_constant: float
    b: float
    tails: dict


def picard_iterate(ctx, datum, T_start, eta, per_decade=40, n_iter=8, tol=1e-4, seed=0, sign=None):
    """Iterate the integral map from v = 0; report residuals and contraction ratios."""
    r0 = ctx.params.r0
    times = picard_times(T_start, r0, per_decade)
    yg = datum.profile_grid
    src = picard_source(ctx, datum, times, eta, sign)
    V_prev = np.zeros_like(src.E)
    V, info = picard_step(ctx, datum, V_prev, times, eta, src)
    residuals, kappas = [], []
    d_prev = sup_l2(V - V_prev, yg)
    for _ in range(n_iter):
        V_new, info = picard_step(ctx, datum, V, times, eta, src)
        dn = sup_l2(V_new - V, yg)
        residuals.append(dn / max(sup_l2(V_new, yg), 1e-300))
        kappas.append(dn / d_prev if d_prev > 0 else 0.0)
        V, d_prev = V_new, dn
        if residuals[-1] <= tol:
            break
    # a second, independent pair: the fixed point against a random perturbation of it
    rng = np.random.default_rng(seed)
    pert = rng.standard_normal(V.shape) + 1j * rng.standard_normal(V.shape)
    pert *= 0.1 * sup_l2(V, yg) / sup_l2(pert, yg)
    V2 = V + pert
    A1, _ = picard_step(ctx, datum, V, times, eta, src)
    A2, _ = picard_step(ctx, datum, V2, times, eta, src)
    kp = sup_l2(A1 - A2, yg) / sup_l2(pert, yg)
    # X_b norm of E = Psi(0)
    K = times.size
    l2 = np.sqrt(np.sum(np.abs(src.E.reshape(K, -1)) ** 2, axis=1) * yg.cell)
    wt = np.sqrt(np.sum(np.abs((src.E * yg.bracket ** datum.beta).reshape(K, -1)) ** 2, axis=1) * yg.cell)
    b = xb_exponent(datum.alpha, datum.beta, ctx.params.lam)
    xb = xb_norm(times, l2, wt, datum.beta, b, ctx.params.lam, r0)
    tails = {"E": src.tails, "N": info["tail_N"]}
    return PicardResult(times, V, residuals, kappas, kp, xb, xb / datum.epsilon, b, tails)


# ---------------------------------------------------------------- forward extraction

def default_chi(d, p_c, beta, delta, lam):
    if d == 1:
        return 0.0
    return 0.5 * (beta - delta) * (1 + p_c - delta) * (1 - 2 * lam)


def chi_window(p_c, beta, delta, lam):
    return 0.0, (beta - delta) * (1 + p_c - delta) * (1 - 2 * lam)


@dataclass
class PhaseAccumulator:
    grid: Grid
    t_current: float
    chi: float = 0.0
    theta: np.ndarray | None = None

    def __post_init__(self):
        if self.chi < 0:
            raise ValueError("chi must be >= 0")
        if self.theta is None:
            self.theta = np.zeros(self.grid.shape)

    def integrand(self, vhat, t, eta, p):
        """Phase density without the time coupling: eta |v|^p, or eta (|t|^-chi + |v|^2)^{p/2}."""
        a2 = np.abs(vhat) ** 2
        if self.chi == 0:
            return eta * a2 ** (p / 2)
        return eta * (abs(t) ** (-self.chi) + a2) ** (p / 2)

    def advance(self, t2, g1, g2, coupling):
        """theta += int_{t_current}^{t2} g |zeta2|^{-1/(1-lam)} ds with g linear between ends."""
        self.theta = self.theta + 0.5 * (g1 + g2) * coupling
        self.t_current = t2


def forward_extract(ctx: PropagatorContext, u_r0: Field, T_end: float, eta: float, delta: float,
                    chi: float | None = None, lens_grid: Grid | None = None, dt: float = 1e-2,
                    dt_growth: float = 0.01, per_decade: int = 20, beta: float | None = None,
                    fit_decades: float = 1.0, check_settled: bool = True) -> ScatterResult:
    """Evolve from t0 = u_r0.time >= r0 to T_end and extract u_+ = v_p(T_end).

    u_r0 may be physical (converted with the inverse factorisation) or already
    frequency-side lens data.
    """
    p = ctx.params
    d = ctx.d
    t0 = float(u_r0.time)
    if t0 < p.r0 * (1 - 1e-12) or not T_end > t0:
        raise OutsideValidity(f"forward extraction needs r0 <= t0 < T_end; got t0={t0}, T_end={T_end}")
    if chi is None:
        chi = default_chi(d, p.p_c, beta if beta is not None else delta, delta, p.lam)
    if d == 1 and chi != 0:
        raise ValueError("d = 1 uses chi = 0")
    if u_r0.gauge == Gauge.FREQUENCY:
        phi = np.array(u_r0.values, complex)
        lg = u_r0.grid
    else:
        q = to_lens(ctx, u_r0, t0, lens_grid)
        phi, lg = q.values, q.grid
    yg = lg.dual()
    wd = yg.bracket ** delta
    st = LensStepper(ctx, lg, eta)
    acc = PhaseAccumulator(lg, t0, chi)
    cps = log_checkpoints(t0, T_end, per_decade)
    times = step_times(t0, T_end, dt, (), cps[1:-1], refine=False, growth=dt_growth)
    want = set(float(c) for c in cps)

    def vhat_of(ph, t):
        """F M2^{-1} F^{-1} phi: the frequency side of v = M+ U(0,t) u."""
        return forward(np.exp(-0.5j * ctx.m2_rate(t) * yg.r2) * inverse(ph, lg), yg)

    def vp_of(vh, theta):
        return inverse(np.exp(1j * theta) * vh, lg)

    vh = vhat_of(phi, t0)
    g = acc.integrand(vh, t0, eta, p.p_c)
    ck_t, ck_vp = [t0], [vp_of(vh, acc.theta)]
    diag = {"t": [t0], "I1": [], "I2": [], "A": []}

    def record_diag(ph, vhh, t):
        f_phi = np.abs(ph) ** p.p_c * ph
        i1 = forward(-np.expm1(-0.5j * ctx.m2_rate(t) * yg.r2) * inverse(f_phi, lg), yg)
        i2 = f_phi - np.abs(vhh) ** p.p_c * vhh
        l2 = lambda v: float(np.sqrt(np.sum(np.abs(v) ** 2) * lg.cell))
        diag["I1"].append(l2(i1))
        diag["I2"].append(l2(i2))
        if chi == 0:
            diag["A"].append(0.0)
        else:
            a0 = np.abs(vhh) ** p.p_c - (abs(t) ** (-chi) + np.abs(vhh) ** 2) ** (p.p_c / 2)
            diag["A"].append(l2(a0 * vhh))

    record_diag(phi, vh, t0)
    for t, t2 in zip(times[:-1], times[1:]):
        phi = st.step(phi, t, t2)
        vh2 = vhat_of(phi, t2)
        g2 = acc.integrand(vh2, t2, eta, p.p_c)
        acc.advance(t2, g, g2, coupling_integral(ctx, t, t2))
        vh, g = vh2, g2
        if t2 in want:
            ck_t.append(t2)
            ck_vp.append(vp_of(vh, acc.theta))
            diag["t"].append(t2)
            record_diag(phi, vh, t2)
    ck_t = np.array(ck_t)
    cw, cl, tm = [], [], []
    for k in range(1, len(ck_vp)):
        dv = ck_vp[k] - ck_vp[k - 1]
        cw.append(float(np.sqrt(np.sum(np.abs(dv * wd) ** 2) * yg.cell)))
        cl.append(float(np.sqrt(np.sum(np.abs(dv) ** 2) * yg.cell)))
        tm.append(math.sqrt(ck_t[k] * ck_t[k - 1]))
    tm, cw, cl = np.array(tm), np.array(cw), np.array(cl)
    window = (T_end / 10 ** fit_decades, T_end)
    fit = _fit_or_none(tm, cw, window) if eta != 0 else None
    if check_settled and eta != 0:
        m = tm >= window[0]
        if fit is None or not fit.mu > 0 or not cw[m][-1] < cw[m][0]:
            raise NotSettled("Cauchy differences of v_p do not decrease over the last decade")
    u_plus = Field(yg, ck_vp[-1], T_end, Gauge.PROFILE)
    meta = {"t0": t0, "T_end": T_end, "chi": chi, "delta": delta, "eta": eta, "steps": len(times) - 1,
            "theta_max": float(np.max(acc.theta)), "theta_min": float(np.min(acc.theta))}
    res = ScatterResult(tm, cw, cl, fit, meta, u_plus=u_plus,
                        phi_end=Field(lg, phi, T_end, Gauge.FREQUENCY),
                        diagnostics={k: np.array(v) for k, v in diag.items()}, theta=acc.theta)
    return res


# ---------------------------------------------------------------- mod-phase bounds

def mod_phase_bounds(t, chi, p_c, z, w, n):
    """A_n(z), B_n(z) - B_n(w) and the tilde variant, elementwise over arrays.

    A_n = (|z|^{p-n} - (|t|^-chi + |z|^2)^{(p-n)/2}) z^n
    B_n = (|t|^-chi + |z|^2)^{(p-n)/2} z^n,  B~_n the same with |z|^n.
    """
    if not 0 < p_c < 2:
        raise DomainError(f"p_c = {p_c} outside (0, 2)")
    if n < 0 or int(n) != n:
        raise DomainError("n must be a non-negative integer")
    z = np.asarray(z, complex)
    w = np.asarray(w, complex)
    eps = np.abs(t) ** (-chi)
    az = np.abs(z)
    aw = np.abs(w)
    e = (p_c - n) / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        first = np.where(az > 0, az ** (p_c - n), 0.0) * z ** n
        if n == 0:
            first = np.where(az > 0, az ** p_c, 0.0).astype(complex)
    A = first - (eps + az ** 2) ** e * z ** n
    if n > 0:
        A = np.where(az > 0, A, 0.0)
    Bz = (eps + az ** 2) ** e * z ** n
    Bw = (eps + aw ** 2) ** e * w ** n
    Btz = (eps + az ** 2) ** e * az ** n
    Btw = (eps + aw ** 2) ** e * aw ** n
    return {"An": A, "Bn": Bz, "Bn_w": Bw, "Bn_tilde": Btz, "Bn_tilde_w": Btw}


def phase_bound_constants(t, chi, p_c, z, w, n):
    """Empirical constants C in the three inequalities over a sample."""
    r = mod_phase_bounds(t, chi, p_c, z, w, n)
    eps = np.abs(t) ** (-chi)
    z = np.asarray(z, complex)
    w = np.asarray(w, complex)
    out = {"mph1": float(np.max(np.abs(r["An"]) / eps ** (p_c / 2)))}
    if 0 < p_c < 1:
        dz = np.abs(z - w)
        m = dz > 0
        lhs = np.abs(r["Bn_tilde"] - r["Bn_tilde_w"]) + np.abs(r["Bn"] - r["Bn_w"])
        out["mph2"] = float(np.max(lhs[m] / dz[m] ** p_c)) if m.any() else 0.0
        a0 = mod_phase_bounds(t, chi, p_c, z, w, 0)["An"]
        az = np.abs(z)
        m = az > 0
        lhs3 = np.abs(a0 * z)
        rhs3 = (eps * np.ones_like(az)) ** p_c * np.where(m, az, 1.0) ** (1 - p_c)
        out["mph3"] = float(np.max(lhs3[m] / rhs3[m])) if m.any() else 0.0
    return out


# ---------------------------------------------------------------- composition

@dataclass
class PipelineConfig:
    eta: float = 1.0
    T_start: float = -1000.0
    T_end: float = 1000.0
    phys_grid: Grid | None = None
    bridge_dt: float = 5e-3
    lens_dt: float = 1e-2
    dt_growth: float = 0.01
    per_decade: int = 20
    chi: float | None = None
    forward_threshold: float = math.inf


@dataclass
class PipelineResult:
    u0: Field
    u_r0: Field
    u_plus: Field
    final_state: FinalStateResult
    forward: ScatterResult
    norms: dict


def compose_scattering(ctx: PropagatorContext, datum: FinalDatum, cfg: PipelineConfig) -> PipelineResult:
    """final_state_solve -> bridge(-r0 -> 0 -> r0) -> forward_extract."""
    p = ctx.params
    r0 = p.r0
    datum.validate(p.p_c)
    pg = cfg.phys_grid or ctx.grid
    fs = final_state_solve(ctx, datum, cfg.T_start, cfg.eta, dt=cfg.lens_dt, dt_growth=cfg.dt_growth,
                           per_decade=cfg.per_decade, phys_grid=pg)
    u_m = fs.u_stop
    bcfg = EvolveConfig(eta=cfg.eta, dt=cfg.bridge_dt, potential_mode=PotentialMode.EXACT_QUADRATIC)
    b1 = bridge(ctx, bcfg, u_m, -r0, 0.0, datum.beta)
    u0 = b1.field
    b2 = bridge(ctx, bcfg, u0, 0.0, r0, datum.beta)
    u_r0 = b2.field
    w_r0 = u0.grid.bracket ** datum.beta
    n_u0_beta = float(np.sqrt(np.sum(np.abs(u0.values * w_r0) ** 2) * u0.grid.cell))
    if n_u0_beta > cfg.forward_threshold:
        raise SmallnessViolated("forward", n_u0_beta, cfg.forward_threshold)
    fw = forward_extract(ctx, u_r0, cfg.T_end, cfg.eta, datum.delta, cfg.chi, lens_grid=datum.lens_grid,
                         dt=cfg.lens_dt, dt_growth=cfg.dt_growth, per_decade=cfg.per_decade, beta=datum.beta)
    norms = {
        "epsilon_alpha": datum.epsilon,
        "u_minus_l2": datum.u_minus.l2(),
        "u0_l2": u0.l2(),
        "u0_H0beta": n_u0_beta,
        "c0": n_u0_beta / datum.epsilon,
        "A0_backward": b1.A0,
        "A0_forward": b2.A0,
        "u_plus_l2": fw.u_plus.l2(),
        "mu_final_state": fs.mu,
        "mu_forward": fw.mu,
    }
    return PipelineResult(u0, u_r0, fw.u_plus, fs, fw, norms)
