"""Linear signaling equilibria between a sender who distorts features and a receiver who regresses.

A linear equilibrium is a slope vector b with ``b = reg(theta | eta + b o gamma)``.
Under the covariance assumptions (gamma uncorrelated with eta, cov(gamma,
theta) <= 0, Sigma_gg entrywise nonnegative) the equilibrium is the unique
minimizer of a strictly convex quartic potential, solved by damped Newton.
Without them, :func:`solve_signaling_general` enumerates roots by multi-start
Newton on the residual.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from . import covmodel as cm
from ._newton import minimize_newton, newton_roots_batched
from .covmodel import CovarianceModel
from .cubic import discriminant, real_roots
from .errors import AssumptionViolated, GridTooCoarse, UnsupportedDimension
from .tables import SweepTable

Array = NDArray[np.float64]

REGIMES = ("signal", "score", "screen", "custom")
CONVEX_TOL = 1e-11
GENERAL_TOL = 1e-8
DEDUP_TOL = 1e-6
MAX_GENERAL_K = 6


@dataclass(frozen=True)
class Coefficients:
    """A linear decision rule y = b0 + b'x with diagnostics."""

    b0: float
    b: Array
    regime: str
    residual_norm: float
    receiver_loss: float

    def __post_init__(self) -> None:
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        b = np.array(self.b, dtype=float).reshape(-1)
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    def to_dict(self) -> dict[str, Any]:
        return {
            "regime": self.regime,
            "b0": self.b0,
            "b": self.b.tolist(),
            "loss": self.receiver_loss,
            "residual_norm": self.residual_norm,
        }


def make_coefficients(model: CovarianceModel, b, regime: str, residual_norm: float) -> Coefficients:
    b = np.asarray(b, dtype=float)
    return Coefficients(
        b0=cm.intercept(model, b),
        b=b,
        regime=regime,
        residual_norm=float(residual_norm),
        receiver_loss=receiver_loss(model, b),
    )


@dataclass(frozen=True)
class EquilibriumSet:
    solutions: tuple[Coefficients, ...]
    complete: bool
    discriminant: float | None = None
    n_seeds: int = 0
    n_converged: int = 0

    def slopes(self) -> Array:
        if not self.solutions:
            return np.empty((0, 0))
        return np.array([s.b for s in self.solutions])

    def __len__(self) -> int:
        return len(self.solutions)


def receiver_loss(model: CovarianceModel, b) -> float:
    """var(b'eta + (b o b)'gamma - theta), including all cross-covariances."""
    return cm.score_var(model, b) - 2.0 * cm.score_cov(model, b) + model.sigma_theta2


# ---------------------------------------------------------------------------
# residual of the equilibrium condition


def signaling_residual(model: CovarianceModel, b) -> Array:
    """var(x) b - cov(x, theta + v'd) with x = eta + b o gamma and d = b o gamma."""
    b = np.asarray(b, dtype=float)
    return cm.feature_var(model, b) @ b - cm.feature_cov(model, b)


def signaling_jacobian(model: CovarianceModel, b) -> Array:
    return _jacobian_batched(model, np.asarray(b, dtype=float)[None, :])[0]


def _residual_batched(model: CovarianceModel, X: Array) -> Array:
    S_ee, S_eg, S_gg, v = model.S_ee, model.S_eg, model.S_gg, model.v
    XX = X * X
    Xv = X * v
    var_b = X @ S_ee.T + XX @ S_eg.T + X * (X @ S_eg) + X * (XX @ S_gg.T)
    cov = model.S_et + X * model.S_gt + Xv @ S_eg.T + X * (Xv @ S_gg.T)
    return var_b - cov


def _jacobian_batched(model: CovarianceModel, X: Array) -> Array:
    S_ee, S_eg, S_gg, v = model.S_ee, model.S_eg, model.S_gg, model.v
    m, k = X.shape
    XX = X * X
    Xv = X * v
    J = np.broadcast_to(S_ee, (m, k, k)).copy()
    J += 2.0 * S_eg[None, :, :] * X[:, None, :]
    J += X[:, :, None] * S_eg.T[None, :, :]
    J += 2.0 * X[:, :, None] * S_gg[None, :, :] * X[:, None, :]
    J -= (S_eg * v[None, :])[None, :, :]
    J -= X[:, :, None] * S_gg[None, :, :] * v[None, None, :]
    diag = X @ S_eg + XX @ S_gg.T - model.S_gt - Xv @ S_gg.T
    idx = np.arange(k)
    J[:, idx, idx] += diag
    return J


# ---------------------------------------------------------------------------
# convex potential


def _require_potential(model: CovarianceModel) -> None:
    rep = cm.assumption_report(model)
    if not (rep.assumption_A_relaxed and rep.assumption_B):
        raise AssumptionViolated(
            "potential requires cov(gamma, eta) = 0, cov(gamma, theta) <= 0 and "
            "Sigma_gamma_gamma >= 0 entrywise; use solve_signaling_general"
        )
    if np.any(model.v):
        raise AssumptionViolated("potential requires v = 0; use solve_signaling_general")


def _phi(model: CovarianceModel, z: Array) -> float:
    zz = z * z
    return float(
        z @ model.S_ee @ z + 0.5 * zz @ model.S_gg @ zz - zz @ model.S_gt - 2.0 * z @ model.S_et
    )


def _phi_grad(model: CovarianceModel, z: Array) -> Array:
    zz = z * z
    return 2.0 * (model.S_ee @ z + z * (model.S_gg @ zz) - z * model.S_gt - model.S_et)


def _phi_hess(model: CovarianceModel, z: Array) -> Array:
    D = np.diag(z)
    return (
        2.0 * model.S_ee
        + 4.0 * D @ model.S_gg @ D
        + 2.0 * np.diag(model.S_gg @ (z * z))
        - 2.0 * np.diag(model.S_gt)
    )


def potential_value_and_gradient(model: CovarianceModel, z) -> tuple[float, Array]:
    """The quartic potential whose gradient is twice the equilibrium residual."""
    _require_potential(model)
    z = np.asarray(z, dtype=float)
    return _phi(model, z), _phi_grad(model, z)


def potential_hessian(model: CovarianceModel, z) -> Array:
    _require_potential(model)
    return _phi_hess(model, np.asarray(z, dtype=float))


def solve_signaling(model: CovarianceModel, x0=None) -> Coefficients:
    """The unique linear equilibrium under the covariance assumptions."""
    _require_potential(model)
    if not np.any(model.S_gg) and not np.any(model.S_eg):
        b, _ = cm.beta(model)
        return make_coefficients(model, b, "signal", np.max(np.abs(signaling_residual(model, b))))
    start = np.zeros(model.k) if x0 is None else np.asarray(x0, dtype=float)
    b, _ = minimize_newton(
        lambda z: _phi(model, z),
        lambda z: _phi_grad(model, z),
        lambda z: _phi_hess(model, z),
        start,
        tol=CONVEX_TOL,
        stop=lambda z: float(np.max(np.abs(signaling_residual(model, z)))),
    )
    res = float(np.max(np.abs(signaling_residual(model, b))))
    return make_coefficients(model, b, "signal", res)


# ---------------------------------------------------------------------------
# general multi-start path


def seed_grid(model: CovarianceModel, points_per_axis: int = 7) -> tuple[Array, float]:
    """Tensor grid of starting points and its spacing."""
    try:
        bt, _ = cm.beta(model)
        half = 2.0 * float(np.max(np.abs(bt))) + 1.0
    except Exception:
        half = 3.0
    axis = np.linspace(-half, half, points_per_axis)
    grid = np.array(list(itertools.product(axis, repeat=model.k)))
    return grid, float(axis[1] - axis[0]) if points_per_axis > 1 else 2 * half


def _dedup(roots: Array, tol: float) -> list[Array]:
    kept: list[Array] = []
    for r in roots:
        if all(np.max(np.abs(r - q)) > tol for q in kept):
            kept.append(r)
    return kept


def _polish_roots(model: CovarianceModel, X: Array) -> tuple[Array, Array]:
    return newton_roots_batched(
        lambda Y: _residual_batched(model, Y),
        lambda Y: _jacobian_batched(model, Y),
        X,
        tol=1e-14,
        max_iter=8,
    )


def solve_signaling_general(
    model: CovarianceModel,
    points_per_axis: int = 7,
    n_random: int = 32,
    seed: int = 0,
) -> EquilibriumSet:
    """Enumerate linear equilibria by damped Newton from a grid plus random seeds.

    No covariance assumptions are needed. The set is flagged ``complete`` when
    the Bezout bound of 3^k roots is reached or when no two distinct roots lie
    closer than the grid spacing.
    """
    if model.k > MAX_GENERAL_K:
        raise UnsupportedDimension(f"grid seeding supports k <= {MAX_GENERAL_K}, got {model.k}")
    grid, spacing = seed_grid(model, points_per_axis)
    half = float(np.max(np.abs(grid))) if grid.size else 1.0
    rng = np.random.Generator(np.random.Philox(seed))
    rand = rng.uniform(-half, half, size=(n_random, model.k))
    seeds = np.vstack([grid, rand])
    X, res = newton_roots_batched(
        lambda Y: _residual_batched(model, Y),
        lambda Y: _jacobian_batched(model, Y),
        seeds,
        tol=1e-13,
    )
    ok = np.isfinite(res) & (res <= GENERAL_TOL)
    roots = _dedup(X[ok], DEDUP_TOL)
    if roots:
        R, rres = _polish_roots(model, np.array(roots))
        roots = [r for r, e in zip(R, rres)]
    roots.sort(key=lambda r: tuple(-r))
    coarse = False
    for a, b in itertools.combinations(roots, 2):
        if np.max(np.abs(a - b)) < spacing:
            coarse = True
            warnings.warn(
                f"distinct roots {a} and {b} are closer than the seed spacing {spacing:g}",
                GridTooCoarse,
                stacklevel=2,
            )
            break
    sols = tuple(
        make_coefficients(model, r, "signal", np.max(np.abs(signaling_residual(model, r))))
        for r in roots
    )
    complete = len(sols) == 3**model.k or not coarse
    return EquilibriumSet(sols, complete, None, len(seeds), int(ok.sum()))


def cubic_coefficients_1d(model: CovarianceModel) -> tuple[float, float, float, float]:
    """Coefficients (monic) of the single-feature equilibrium cubic, or the linear fallback."""
    if model.k != 1:
        raise UnsupportedDimension("single-feature cubic needs k = 1")
    s_ee = model.S_ee[0, 0]
    s_gg = model.S_gg[0, 0]
    s_eg = model.S_eg[0, 0]
    s_et = model.S_et[0]
    s_gt = model.S_gt[0]
    v = model.v[0]
    if s_gg == 0:
        return 0.0, 0.0, s_ee - s_gt - v * s_eg, -s_et
    zeta = s_ee / s_gg
    b_eg = s_eg / s_gg
    b_tg = s_gt / s_gg
    return 1.0, 2.0 * b_eg - v, zeta - v * b_eg - b_tg, -s_et / s_gg


def solve_signaling_cubic_1d(model: CovarianceModel) -> EquilibriumSet:
    """All single-feature equilibria in closed form, with the cubic discriminant."""
    a, b, c, d = cubic_coefficients_1d(model)
    if a == 0:
        roots = np.array([-d / c])
        disc = None
    else:
        roots = real_roots(a, b, c, d)
        disc = discriminant(a, b, c, d)
    sols = tuple(
        make_coefficients(model, [r], "signal", abs(signaling_residual(model, [r])[0]))
        for r in sorted(roots, reverse=True)
    )
    return EquilibriumSet(sols, True, disc)


def homogeneous_intrinsic_equilibria(
    model: CovarianceModel, include_sign_flips: bool = False
) -> EquilibriumSet:
    """Equilibria when every sender has the same intrinsic level.

    Only the gamma blocks of ``model`` are used. For each subset J with a
    positive regression of theta on gamma_J, b_J is the componentwise square
    root and b is zero off J. With ``include_sign_flips`` the negative square
    roots, which solve the same equations, are listed too.
    """
    k = model.k
    found: list[Array] = [np.zeros(k)]
    for size in range(1, k + 1):
        for J in itertools.combinations(range(k), size):
            J = list(J)
            S = model.S_gg[np.ix_(J, J)]
            try:
                r = np.linalg.solve(S, model.S_gt[J])
            except np.linalg.LinAlgError:
                continue
            if np.all(r > 0):
                root = np.sqrt(r)
                signs = itertools.product((1.0, -1.0), repeat=size) if include_sign_flips else [np.ones(size)]
                for sg in signs:
                    b = np.zeros(k)
                    b[J] = root * np.asarray(sg)
                    found.append(b)
    zero_eta = model.replace(
        Sigma_eta_eta=np.zeros((k, k)),
        Sigma_eta_theta=np.zeros(k),
        Sigma_eta_gamma=np.zeros((k, k)),
    )
    sols = tuple(
        Coefficients(
            b0=cm.intercept(zero_eta, b),
            b=b,
            regime="signal",
            residual_norm=float(np.max(np.abs(signaling_residual(zero_eta, b)))),
            receiver_loss=receiver_loss(zero_eta, b),
        )
        for b in found
    )
    return EquilibriumSet(sols, True)


# ---------------------------------------------------------------------------
# information loss as distortion stakes grow


def stakes_derivative(model: CovarianceModel, base_gamma_var: Array, b: Array) -> Array:
    """db/dt at the equilibrium b of the model whose Sigma_gg is t * base_gamma_var.

    Implicit differentiation of the residual: J db/dt = -d(residual)/dt.
    """
    b = np.asarray(b, dtype=float)
    dr_dt = b * (base_gamma_var @ (b * b)) - b * (base_gamma_var @ (b * model.v))
    return -np.linalg.solve(signaling_jacobian(model, b), dr_dt)


def info_loss_sweep(model: CovarianceModel, s_grid: Sequence[float]) -> SweepTable:
    """Solve the equilibrium with Sigma_gg scaled by s^2 at each grid point.

    Rows hold s, b, b0, loss, residual norm and the implicit derivative
    db/dt with t = s^2.
    """
    s_grid = [float(s) for s in s_grid]
    if any(s <= 0 for s in s_grid) or any(b <= a for a, b in zip(s_grid, s_grid[1:])):
        raise ValueError("s_grid must be ascending positive scalars")
    k = model.k
    cols = (
        ("s",)
        + tuple(f"b_{i+1}" for i in range(k))
        + ("b0", "loss", "residual_norm")
        + tuple(f"db_dt_{i+1}" for i in range(k))
    )
    table = SweepTable(cols)
    base = model.S_gg
    for s in s_grid:
        scaled = model.scale_gamma_variance(s * s)
        sol = solve_signaling(scaled)
        deriv = stakes_derivative(scaled, base, sol.b)
        table.append([s, *sol.b, sol.b0, sol.receiver_loss, sol.residual_norm, *deriv])
    return table
