"""Continuous best-response dynamics in the space of linear strategies.

The sender's distortion slope ``a`` chases the receiver's current slope and
the receiver's slope ``b`` chases its best response to ``a``:

    da/dt = b - a,        db/dt = BR(a) - b.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from . import covmodel as cm
from .covmodel import CovarianceModel
from .errors import StepTooLarge
from .signaling import solve_signaling
from .tables import write_csv

Array = NDArray[np.float64]

GAP_GROWTH_LIMIT = 1.10


@dataclass(frozen=True)
class DynamicsTrace:
    times: Array
    a_path: Array
    b_path: Array
    distances: Array
    converged: bool
    rate_estimate: float
    r_squared: float
    intercepts: Array
    target: Array

    def to_csv(self, path: str | Path) -> None:
        k = self.a_path.shape[1]
        header = ["t"] + [f"a_{i+1}" for i in range(k)] + [f"b_{i+1}" for i in range(k)] + ["distance"]
        rows = (
            [t, *a, *b, d]
            for t, a, b, d in zip(self.times, self.a_path, self.b_path, self.distances)
        )
        write_csv(path, header, rows)


def zero_sum_potential(model: CovarianceModel, a, b) -> float:
    """var(b'(eta + a o gamma) - theta) - 0.5 var((a o a)'gamma - theta).

    The receiver minimizes it over b and the sender maximizes it over a.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w = a * b
    u = a * a
    s2 = model.sigma_theta2
    receiver = (
        b @ model.S_ee @ b + 2.0 * b @ model.S_eg @ w + w @ model.S_gg @ w
        - 2.0 * b @ model.S_et - 2.0 * w @ model.S_gt + s2
    )
    sender = u @ model.S_gg @ u - 2.0 * u @ model.S_gt + s2
    return float(receiver - 0.5 * sender)


def potential_gap(model: CovarianceModel, a, b) -> float:
    """max_a' psi(a', b) - min_b' psi(a, b'), zero only at the equilibrium."""
    return zero_sum_potential(model, b, b) - zero_sum_potential(
        model, a, cm.reg_theta_given_features(model, a)
    )


def _field(model: CovarianceModel, a: Array, b: Array) -> tuple[Array, Array]:
    return b - a, cm.reg_theta_given_features(model, a) - b


def _rk4(model: CovarianceModel, a: Array, b: Array, dt: float) -> tuple[Array, Array]:
    ka1, kb1 = _field(model, a, b)
    ka2, kb2 = _field(model, a + 0.5 * dt * ka1, b + 0.5 * dt * kb1)
    ka3, kb3 = _field(model, a + 0.5 * dt * ka2, b + 0.5 * dt * kb2)
    ka4, kb4 = _field(model, a + dt * ka3, b + dt * kb3)
    a_next = a + dt / 6.0 * (ka1 + 2 * ka2 + 2 * ka3 + ka4)
    b_next = b + dt / 6.0 * (kb1 + 2 * kb2 + 2 * kb3 + kb4)
    return a_next, b_next


def fit_log_rate(times: Array, distances: Array) -> tuple[float, float]:
    """Least-squares slope and R^2 of log(distance) on the final half of the samples."""
    n = len(times)
    t = times[n // 2 :]
    d = distances[n // 2 :]
    keep = d > 1e-12
    t, y = t[keep], np.log(d[keep])
    if t.size < 3:
        return float("nan"), float("nan")
    A = np.column_stack([t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    fitted = A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - fitted) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    return float(coef[0]), r2


def integrate_br_dynamics(
    model: CovarianceModel,
    a0,
    b0,
    horizon: float = 20.0,
    dt: float = 0.01,
    *,
    tol: float = 1e-6,
    check_gap: bool = True,
) -> DynamicsTrace:
    """Fixed-step RK4 integration from sender slope ``a0`` and receiver slope ``b0``.

    Distances are max-norm distances of the stacked state (a, b) to (b*, b*)
    where b* is the signaling equilibrium. Intercepts are read off b at each
    sample. Raises StepTooLarge when a single step inflates the potential gap
    by more than 10 percent, which signals a step size too coarse for the flow.
    """
    if horizon <= 0 or dt <= 0:
        raise ValueError("horizon and dt must be positive")
    target = solve_signaling(model).b
    n_steps = int(round(horizon / dt))
    k = model.k
    a = np.array(a0, dtype=float).reshape(k)
    b = np.array(b0, dtype=float).reshape(k)
    times = np.arange(n_steps + 1) * dt
    a_path = np.empty((n_steps + 1, k))
    b_path = np.empty((n_steps + 1, k))
    a_path[0], b_path[0] = a, b
    floor = 1e-10 * max(1.0, model.sigma_theta2)
    gap = potential_gap(model, a, b) if check_gap else 0.0
    for n in range(1, n_steps + 1):
        a, b = _rk4(model, a, b, dt)
        a_path[n], b_path[n] = a, b
        if check_gap:
            new_gap = potential_gap(model, a, b)
            if new_gap > floor and new_gap > GAP_GROWTH_LIMIT * gap:
                raise StepTooLarge(
                    f"potential gap grew from {gap:.3g} to {new_gap:.3g} at t={times[n]:.4g}; reduce dt"
                )
            gap = new_gap
    dist = np.maximum(
        np.max(np.abs(a_path - target), axis=1), np.max(np.abs(b_path - target), axis=1)
    )
    rate, r2 = fit_log_rate(times, dist)
    intercepts = np.array([cm.intercept(model, bb) for bb in b_path])
    return DynamicsTrace(times, a_path, b_path, dist, bool(dist[-1] <= tol), rate, r2, intercepts, target)
