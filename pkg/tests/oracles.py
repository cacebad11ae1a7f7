"""Closed-form reference values, written independently of the package."""
import numpy as np


def piecewise_zeta(t, sigma0, sigma1, r1):
    """Exact zeta1, zeta1', zeta2, zeta2' for sigma0 on |t|<r1 and sigma1/t^2 outside.

    Inner solution is trigonometric (sigma0 > 0), outer is b|t|^{1-lam} + b'|t|^lam,
    matched in value and slope at r1. zeta1 is even and zeta2 odd.
    """
    t = np.atleast_1d(np.asarray(t, float))
    lam = 0.5 * (1 - np.sqrt(1 - 4 * sigma1))
    w = np.sqrt(sigma0)
    inner = lambda s: (np.cos(w * s), -w * np.sin(w * s), np.sin(w * s) / w, np.cos(w * s))
    c1, c1p, c2, c2p = inner(r1)
    B = np.array([[r1 ** (1 - lam), r1 ** lam], [(1 - lam) * r1 ** (-lam), lam * r1 ** (lam - 1)]])
    b1 = np.linalg.solve(B, [c1, c1p])
    b2 = np.linalg.solve(B, [c2, c2p])
    out = np.empty((4, t.size))
    for k, tk in enumerate(t):
        s = abs(tk)
        if s < r1:
            v = inner(s)
        else:
            v = (b1[0] * s ** (1 - lam) + b1[1] * s ** lam,
                 b1[0] * (1 - lam) * s ** (-lam) + b1[1] * lam * s ** (lam - 1),
                 b2[0] * s ** (1 - lam) + b2[1] * s ** lam,
                 b2[0] * (1 - lam) * s ** (-lam) + b2[1] * lam * s ** (lam - 1))
        sg = 1.0 if tk >= 0 else -1.0
        # parity: zeta1 even (zeta1' odd), zeta2 odd (zeta2' even)
        out[:, k] = (v[0], sg * v[1], sg * v[2], v[3])
    return out, lam, b1, b2


def free_gaussian(x, t, width=1.0):
    """Free Schrodinger evolution of exp(-x^2/(2 w^2)) in one dimension."""
    w2 = width ** 2
    return (w2 / (w2 + 1j * t)) ** 0.5 * np.exp(-x ** 2 / (2 * (w2 + 1j * t)))


def mehler_gaussian(x, t, omega, width=1.0):
    """Evolution of exp(-x^2/(2w^2)) under -d^2/2 + omega^2 x^2/2 (1d, |omega t| < pi)."""
    c, s = np.cos(omega * t), np.sin(omega * t)
    a = 1.0 / width ** 2
    # Gaussian stays Gaussian: exp(-A x^2/2) with A(t) obeying a Riccati flow
    A = omega * (a * c + 1j * omega * s) / (omega * c + 1j * a * s)
    amp = (omega / (omega * c + 1j * a * s)) ** 0.5
    return amp * np.exp(-A * x ** 2 / 2)
