"""Closed-form real roots of cubic polynomials."""

from __future__ import annotations

import math

import numpy as np


def discriminant(a: float, b: float, c: float, d: float) -> float:
    """Discriminant of a x^3 + b x^2 + c x + d. Negative means one real root."""
    return 18 * a * b * c * d - 4 * b**3 * d + b**2 * c**2 - 4 * a * c**3 - 27 * a**2 * d**2


def _polish(coef: tuple[float, float, float, float], x: float, steps: int = 3) -> float:
    a, b, c, d = coef
    for _ in range(steps):
        f = ((a * x + b) * x + c) * x + d
        df = (3 * a * x + 2 * b) * x + c
        if df == 0 or not math.isfinite(df):
            break
        dx = f / df
        x -= dx
        if abs(dx) <= 1e-16 * max(1.0, abs(x)):
            break
    return x


def real_roots(a: float, b: float, c: float, d: float) -> np.ndarray:
    """All distinct real roots of a x^3 + b x^2 + c x + d, ascending.

    Uses the depressed cubic t^3 + p t + q with Cardano's formula when one
    root is real and the trigonometric form when all three are. Each root
    gets a few Newton polishing steps on the original polynomial. Falls back
    to the quadratic formula when ``a`` is zero.
    """
    if a == 0:
        if b == 0:
            return np.array([-d / c]) if c != 0 else np.array([])
        disc = c * c - 4 * b * d
        if disc < 0:
            return np.array([])
        r = math.sqrt(disc)
        return np.unique(np.array([(-c - r) / (2 * b), (-c + r) / (2 * b)]))
    B, C, D = b / a, c / a, d / a
    shift = B / 3.0
    p = C - B * B / 3.0
    q = 2.0 * B**3 / 27.0 - B * C / 3.0 + D
    h = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if h > 0:
        s = math.sqrt(h)
        ts = [math.copysign(abs(-q / 2 + s) ** (1 / 3), -q / 2 + s)
              + math.copysign(abs(-q / 2 - s) ** (1 / 3), -q / 2 - s)]
    elif p == 0:
        ts = [math.copysign(abs(q) ** (1 / 3), -q)]
    else:
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (p * m)
        phi = math.acos(max(-1.0, min(1.0, arg))) / 3.0
        ts = [m * math.cos(phi - 2 * math.pi * j / 3) for j in range(3)]
    coef = (a, b, c, d)
    roots = sorted(_polish(coef, t - shift) for t in ts)
    out: list[float] = []
    for r in roots:
        if not out or abs(r - out[-1]) > 1e-9 * max(1.0, abs(r)):
            out.append(r)
    return np.array(out)


def monotone_cubic_root(linear: float, cubic: float, rhs: float) -> float:
    """The unique real x with linear*x + cubic*x^3 = rhs, for linear > 0 and cubic >= 0."""
    guess = rhs / linear
    if cubic == 0:
        return guess
    if cubic * guess * guess <= 1e-6 * linear:
        # nearly linear: Cardano would overflow or cancel, Newton from the linear guess is exact
        return _polish((cubic, 0.0, linear, -rhs), guess, steps=6)
    p = linear / cubic
    q = -rhs / cubic
    s = math.sqrt((q / 2) ** 2 + (p / 3) ** 3)
    u = -q / 2 + s
    w = -q / 2 - s
    x = math.copysign(abs(u) ** (1 / 3), u) + math.copysign(abs(w) ** (1 / 3), w)
    return _polish((cubic, 0.0, linear, -rhs), x)
