"""Damped Newton iterations shared by the convex solvers and the multi-start root finder."""

from __future__ import annotations

from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .errors import NoConvergence

Array = NDArray[np.float64]


def minimize_newton(
    fun: Callable[[Array], float],
    grad: Callable[[Array], Array],
    hess: Callable[[Array], Array],
    x0,
    *,
    tol: float = 1e-12,
    max_iter: int = 500,
    max_halvings: int = 60,
    stop: Callable[[Array], float] | None = None,
) -> tuple[Array, int]:
    """Minimize a smooth convex function with Newton steps and step halving.

    ``stop(x)`` returns the optimality measure compared against ``tol``;
    it defaults to the max-abs gradient. A step is accepted once the
    objective does not increase beyond round-off.
    """
    x = np.array(x0, dtype=float)
    measure = stop if stop is not None else (lambda z: float(np.max(np.abs(grad(z)))))
    f = fun(x)
    for it in range(max_iter):
        if measure(x) <= tol:
            return x, it
        g = grad(x)
        H = hess(x)
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = -g
        if not np.all(np.isfinite(step)) or step @ g >= 0:
            step = -g
        t = 1.0
        slack = 1e-13 * (1.0 + abs(f))
        for _ in range(max_halvings):
            xn = x + t * step
            fn = fun(xn)
            if fn <= f + slack:
                break
            t *= 0.5
        else:
            # no decrease representable at this scale; the iterate is already optimal
            if measure(x) <= 100 * tol:
                return x, it
            raise NoConvergence(f"line search stalled at iteration {it}")
        x, f = xn, fn
    if measure(x) <= tol:
        return x, max_iter
    raise NoConvergence(f"Newton did not reach tolerance {tol:g} in {max_iter} iterations")


def newton_roots_batched(
    residual: Callable[[Array], Array],
    jacobian: Callable[[Array], Array],
    seeds: Array,
    *,
    tol: float = 1e-12,
    max_iter: int = 200,
    max_halvings: int = 40,
) -> tuple[Array, Array]:
    """Run damped Newton on F(x) = 0 from every row of ``seeds`` at once.

    ``residual`` maps (m, k) -> (m, k) and ``jacobian`` maps (m, k) -> (m, k, k).
    Each row does its own backtracking on the merit 0.5 |F|^2. Returns the
    final iterates and their max-abs residuals.
    """
    X = np.array(seeds, dtype=float, copy=True)
    F = residual(X)
    merit = 0.5 * np.einsum("ij,ij->i", F, F)
    active = np.ones(X.shape[0], dtype=bool)
    for _ in range(max_iter):
        active &= np.max(np.abs(F), axis=1) > tol
        active &= np.all(np.isfinite(X), axis=1)
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        J = jacobian(X[idx])
        try:
            step = -np.linalg.solve(J, F[idx][..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.empty_like(X[idx])
            for n, (Jn, Fn) in enumerate(zip(J, F[idx])):
                step[n] = -np.linalg.lstsq(Jn, Fn, rcond=None)[0]
        t = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        Xn = X[idx].copy()
        Fn = F[idx].copy()
        Mn = merit[idx].copy()
        for _ in range(max_halvings):
            p = np.flatnonzero(pending)
            if p.size == 0:
                break
            trial = X[idx[p]] + t[p, None] * step[p]
            Ft = residual(trial)
            Mt = 0.5 * np.einsum("ij,ij->i", Ft, Ft)
            ok = np.isfinite(Mt) & (Mt < merit[idx[p]])
            acc = p[ok]
            Xn[acc], Fn[acc], Mn[acc] = trial[ok], Ft[ok], Mt[ok]
            pending[acc] = False
            t[p[~ok]] *= 0.5
        stalled = idx[pending]
        active[stalled] = False
        X[idx], F[idx], merit[idx] = Xn, Fn, Mn
    return X, np.max(np.abs(F), axis=1)
