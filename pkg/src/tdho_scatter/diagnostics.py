"""Rate fitting and trajectory norms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSamples, MissingWeightedNorms


@dataclass(frozen=True)
class RateFit:
    t: tuple
    values: tuple
    mu: float
    c: float
    residual: float
    window: tuple

    def to_dict(self) -> dict:
        return {"mu": self.mu, "c": self.c, "residual": self.residual, "window": list(self.window),
                "n_samples": len(self.t)}


def fit_power_law(t, values=None, window=None) -> RateFit:
    """Least-squares fit of log value = log c - mu log t.

    Accepts either two sequences or a sequence of (t, value) pairs; |t| is used
    so that negative time axes can be passed directly.
    """
    if values is None:
        pairs = np.asarray(t, float)
        t, values = pairs[:, 0], pairs[:, 1]
    t = np.abs(np.asarray(t, float))
    v = np.asarray(values, float)
    if t.shape != v.shape:
        raise ValueError("t and values differ in length")
    order = np.argsort(t)
    t, v = t[order], v[order]
    if window is not None:
        m = (t >= window[0]) & (t <= window[1])
        t, v = t[m], v[m]
    if t.size < 4:
        raise InsufficientSamples(f"power-law fit needs >= 4 samples, got {t.size}")
    if np.any(np.diff(t) <= 0):
        raise ValueError("sample times must be distinct")
    if np.any(~(v > 0)):
        raise ValueError("power-law fit needs positive values")
    x = np.log(t)
    y = np.log(v)
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    slope = float(np.dot(dx, dy) / np.dot(dx, dx))
    icpt = ym - slope * xm
    res = float(np.sqrt(np.mean((dy - slope * dx) ** 2)))
    return RateFit(tuple(t), tuple(v), -slope, float(np.exp(icpt)), res, (float(t[0]), float(t[-1])))


def running_mu(t, values, span=1.0, min_points=4):
    """Local decay exponent from trailing fits over ``span`` decades (NaN until available)."""
    t = np.abs(np.asarray(t, float))
    v = np.asarray(values, float)
    out = np.full(t.size, np.nan)
    lt = np.log10(t)
    for k in range(t.size):
        m = np.abs(lt - lt[k]) <= span / 2
        if m.sum() >= min_points and np.all(v[m] > 0):
            x, y = np.log(t[m]), np.log(v[m])
            out[k] = -np.polyfit(x, y, 1)[0]
    return out


def xb_exponent(alpha, beta, lam) -> float:
    """Half of the smallest admissible upper bound on b."""
    return 0.5 * min((1 - beta / 2) * (1 - 2 * lam), (alpha - beta) * (1 - 2 * lam) / 2)


def xb_norm(times, l2_norms, weighted_norms, beta, b, lam, r0) -> float:
    """sup over samples of |t|^{beta(1-2lam)/2 + b} ||phi|| + |t|^b ||U(0,t) phi||_{H^{0,beta}}."""
    if weighted_norms is None or l2_norms is None:
        raise MissingWeightedNorms("X_b norm needs both plain and weighted norms per sample")
    t = np.abs(np.asarray(times, float))
    a = np.asarray(l2_norms, float)
    w = np.asarray(weighted_norms, float)
    if t.size == 0:
        return 0.0
    if a.shape != t.shape or w.shape != t.shape or np.any(np.isnan(w)) or np.any(np.isnan(a)):
        raise MissingWeightedNorms("norm arrays missing or incomplete")
    if np.any(t < r0 * (1 - 1e-12)):
        raise ValueError("samples must satisfy |t| >= r0")
    vals = t ** (beta * (1 - 2 * lam) / 2 + b) * a + t ** b * w
    return float(np.max(vals))
