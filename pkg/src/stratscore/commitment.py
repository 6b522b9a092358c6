"""Screening, the quartic sensitivity norm, and the three-regime comparison.

Under screening the receiver commits to the decision rule, so the loss is
minimized without equilibrium or obedience constraints. The simple setting
(eta_i = theta + eps_i, independent eps and gamma, diagonal ability variance)
admits a scalar reduction: each slope solves a monotone cubic in a common
scalar K, found by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from numpy.typing import NDArray

from . import covmodel as cm
from ._newton import minimize_newton
from .covmodel import CovarianceModel
from .cubic import monotone_cubic_root
from .errors import AssumptionViolated, ModelError
from .scoring import ex_post_best_response, solve_scoring
from .signaling import Coefficients, make_coefficients, receiver_loss, signaling_residual, solve_signaling
from .tables import SweepTable

Array = NDArray[np.float64]

K_BISECT_ITERS = 200


def norm4gamma(model: CovarianceModel, b) -> float:
    """[(b o b)' Sigma_gg (b o b)]^(1/4): how strongly decisions reward distortion."""
    b = np.asarray(b, dtype=float)
    bb = b * b
    return float(max(bb @ model.S_gg @ bb, 0.0) ** 0.25)


def screening_foc(model: CovarianceModel, b) -> Array:
    """Half the gradient of the screening loss."""
    return 0.5 * (cm.score_var_grad(model, b) - 2.0 * cm.score_cov_grad(model, b))


def screening_loss(model: CovarianceModel, b) -> float:
    return receiver_loss(model, b)


def solve_screening(model: CovarianceModel) -> Coefficients:
    rep = cm.assumption_report(model)
    if not (rep.assumption_A_relaxed and rep.assumption_B):
        raise AssumptionViolated("screening loss is convex only under the covariance assumptions")
    if not np.any(model.S_gg):
        b, _ = cm.beta(model)
        return make_coefficients(model, b, "screen", float(np.max(np.abs(screening_foc(model, b)))))
    b, _ = minimize_newton(
        lambda z: receiver_loss(model, z),
        lambda z: cm.score_var_grad(model, z) - 2.0 * cm.score_cov_grad(model, z),
        lambda z: cm.score_var_hess(model, z) - 2.0 * cm.score_cov_hess(model, z),
        np.zeros(model.k),
        tol=1e-11,
        stop=lambda z: float(np.max(np.abs(screening_foc(model, z)))),
    )
    return make_coefficients(model, b, "screen", float(np.max(np.abs(screening_foc(model, b)))))


# ---------------------------------------------------------------------------
# simple setting


@dataclass(frozen=True)
class SimpleSetting:
    sigma_eps2: Array
    sigma_gam2: Array

    def __post_init__(self) -> None:
        e = np.array(self.sigma_eps2, dtype=float).reshape(-1)
        g = np.array(self.sigma_gam2, dtype=float).reshape(-1)
        if e.shape != g.shape or e.size == 0:
            raise ModelError("sigma_eps2 and sigma_gam2 must be nonempty and equally long")
        if np.any(e < 0) or np.any(g < 0):
            raise ModelError("simple-setting variances must be nonnegative")
        e.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "sigma_eps2", e)
        object.__setattr__(self, "sigma_gam2", g)

    @property
    def k(self) -> int:
        return int(self.sigma_eps2.size)

    def to_dict(self) -> dict[str, Any]:
        return {"sigma_eps2": self.sigma_eps2.tolist(), "sigma_gam2": self.sigma_gam2.tolist()}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SimpleSetting":
        extra = set(d) - {"k", "sigma_eps2", "sigma_gam2"}
        if extra:
            raise ModelError(f"unknown simple-setting keys: {sorted(extra)}")
        missing = {"sigma_eps2", "sigma_gam2"} - set(d)
        if missing:
            raise ModelError(f"missing simple-setting keys: {sorted(missing)}")
        s = cls(d["sigma_eps2"], d["sigma_gam2"])
        if "k" in d and int(d["k"]) != s.k:
            raise ModelError("k does not match the variance vectors")
        return s

    def with_gamma_var(self, index: int, value: float) -> "SimpleSetting":
        g = self.sigma_gam2.copy()
        g[index] = value
        return SimpleSetting(self.sigma_eps2, g)


def build_simple_setting(s: SimpleSetting) -> CovarianceModel:
    """theta with unit variance, eta_i = theta + eps_i, independent gamma_i."""
    k = s.k
    model = CovarianceModel(
        k=k,
        mu_theta=0.0,
        mu_eta=np.zeros(k),
        mu_gamma=4.0 * np.sqrt(s.sigma_gam2),
        sigma_theta2=1.0,
        Sigma_eta_theta=np.ones(k),
        Sigma_gamma_theta=np.zeros(k),
        Sigma_eta_eta=np.ones((k, k)) + np.diag(s.sigma_eps2),
        Sigma_eta_gamma=np.zeros((k, k)),
        Sigma_gamma_gamma=np.diag(s.sigma_gam2),
    )
    cm.validate(model)
    return model


def _slopes_given_K(s: SimpleSetting, c: float, K: float) -> Array:
    return np.array(
        [monotone_cubic_root(e, c * g, K) for e, g in zip(s.sigma_eps2, s.sigma_gam2)]
    )


def _scalar_K(s: SimpleSetting, c: float, total: float) -> Array:
    """Solve sigma_eps2_i b_i + c sigma_gam2_i b_i^3 = K with K = total - sum(b)."""
    lo, hi = 0.0, total
    for _ in range(K_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if mid - (total - _slopes_given_K(s, c, mid).sum()) > 0:
            hi = mid
        else:
            lo = mid
    return _slopes_given_K(s, c, 0.5 * (lo + hi))


def _simple_obedience(s: SimpleSetting, b: Array) -> float:
    bb = b * b
    var = b.sum() ** 2 + b @ (s.sigma_eps2 * b) + bb @ (s.sigma_gam2 * bb)
    return var - b.sum()


def solve_simple_setting(s: SimpleSetting, regime: str) -> Coefficients:
    """Scalar-K solution of the simple setting.

    ``regime`` is "signal" or "screen"; "score" nests a bisection on the
    multiplier lambda (K = lambda - sum(b)) and serves as a cross-check of
    the general scoring solver.
    """
    if np.any(s.sigma_eps2 <= 0):
        raise ModelError("scalar-K method needs sigma_eps2 > 0")
    model = build_simple_setting(s)
    if regime == "signal":
        b = _scalar_K(s, 1.0, 1.0)
        res = float(np.max(np.abs(signaling_residual(model, b))))
    elif regime == "screen":
        b = _scalar_K(s, 2.0, 1.0)
        res = float(np.max(np.abs(screening_foc(model, b))))
    elif regime == "score":
        lo, hi = 1.0, 2.0
        for _ in range(K_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if _simple_obedience(s, _scalar_K(s, 2.0, mid)) > 0:
                hi = mid
            else:
                lo = mid
        b = _scalar_K(s, 2.0, 0.5 * (lo + hi))
        res = abs(_simple_obedience(s, b))
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return make_coefficients(model, b, regime, res)


# ---------------------------------------------------------------------------
# comparison across regimes


@dataclass(frozen=True)
class CommitmentReport:
    beta: Array
    b_signal: Coefficients
    b_score: Coefficients
    b_screen: Coefficients
    norms: tuple[float, float, float, float]
    losses: tuple[float, float, float]
    ordering_ok: bool | None
    lambda_: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "beta": self.beta.tolist(),
            "b_signal": self.b_signal.to_dict(),
            "b_score": self.b_score.to_dict(),
            "b_screen": self.b_screen.to_dict(),
            "lambda": self.lambda_,
            "norms": {
                "beta": self.norms[0],
                "signal": self.norms[1],
                "score": self.norms[2],
                "screen": self.norms[3],
            },
            "losses": {"signal": self.losses[0], "score": self.losses[1], "screen": self.losses[2]},
            "ordering_ok": self.ordering_ok,
        }


def norm_ordering_holds(norms: Sequence[float], margin: float = 1e-9) -> bool:
    """||beta|| > ||signal|| >= ||score|| > ||screen|| with strict parts by ``margin``."""
    n_beta, n_sig, n_score, n_screen = norms
    return bool(
        n_beta - n_sig > margin
        and n_sig - n_score >= -margin
        and n_score - n_screen > margin
    )


def commitment_report(model: CovarianceModel) -> CommitmentReport:
    beta, _ = cm.beta(model)
    sig = solve_signaling(model)
    score = solve_scoring(model)
    screen = solve_screening(model)
    norms = tuple(norm4gamma(model, b) for b in (beta, sig.b, score.b, screen.b))
    losses = (sig.receiver_loss, score.loss, screen.receiver_loss)
    pd = cm.assumption_report(model).gamma_gamma_pd
    ok = norm_ordering_holds(norms) if pd else None
    return CommitmentReport(beta, sig, score.coeffs, screen, norms, losses, ok, score.lambda_)


def sweep_feature_weights(base: SimpleSetting, vary_index: int, grid: Sequence[float]) -> SweepTable:
    """Vary one ability variance (0-based ``vary_index``) and record all regimes.

    The ``expost`` columns hold the receiver's best response to the scoring
    slopes if features were observed directly.
    """
    k = base.k
    if not 0 <= vary_index < k:
        raise ValueError(f"vary_index must lie in 0..{k-1}")
    grid = [float(g) for g in grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be ascending")
    names = ["varied_param"]
    for tag in ("signal", "score", "screen", "expost"):
        names += [f"{tag}_b_{i+1}" for i in range(k)]
    names += ["loss_signal", "loss_score", "loss_screen"]
    names += ["norm_beta", "norm_signal", "norm_score", "norm_screen"]
    table = SweepTable(tuple(names))
    for g in grid:
        model = build_simple_setting(base.with_gamma_var(vary_index, g))
        rep = commitment_report(model)
        score = solve_scoring(model)
        expost = ex_post_best_response(model, score)
        table.append(
            [g, *rep.b_signal.b, *rep.b_score.b, *rep.b_screen.b, *expost, *rep.losses, *rep.norms]
        )
    return table
