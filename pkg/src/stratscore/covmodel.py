"""Covariance model of (theta, eta, gamma) and the regression primitives.

Every solver in the package consumes a :class:`CovarianceModel`. The model
stores first and second moments only; the elliptical radial density never
enters the equilibrium conditions, so no density is carried around.

Notation used in variable names::

    S_tt  var(theta)            S_et  cov(eta, theta)     S_gt  cov(gamma, theta)
    S_ee  var(eta)              S_eg  cov(eta, gamma)     S_gg  var(gamma)

``S_eg[i, j]`` is ``cov(eta_i, gamma_j)``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .errors import (
    Degenerate,
    DimensionMismatch,
    ModelError,
    NegativeAbilityMean,
    NoInformation,
    NotPositiveSemidefinite,
    NotSymmetric,
    SingularMatrix,
    SupportWarning,
)

Array = NDArray[np.float64]

EIG_TOL = 1e-10
PINV_TOL = 1e-12
SYM_TOL = 1e-12

MODEL_KEYS = (
    "k",
    "mu_theta",
    "mu_eta",
    "mu_gamma",
    "sigma_theta2",
    "sigma_eta_theta",
    "sigma_gamma_theta",
    "sigma_eta_eta",
    "sigma_eta_gamma",
    "sigma_gamma_gamma",
    "v",
)


def _frozen(x: Any, shape: tuple[int, ...], name: str) -> Array:
    arr = np.array(x, dtype=float)
    if arr.shape != shape:
        raise DimensionMismatch(f"{name}: expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CovarianceModel:
    """First and second moments of (theta, eta, gamma).

    Arrays are copied and made read-only on construction. Only shapes are
    checked here; call :func:`validate` for the PSD and nondegeneracy tests.
    """

    k: int
    mu_theta: float
    mu_eta: Array
    mu_gamma: Array
    sigma_theta2: float
    Sigma_eta_theta: Array
    Sigma_gamma_theta: Array
    Sigma_eta_eta: Array
    Sigma_eta_gamma: Array
    Sigma_gamma_gamma: Array
    v: Array = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        k = int(self.k)
        if k < 1:
            raise DimensionMismatch(f"k must be >= 1, got {self.k}")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "mu_theta", float(self.mu_theta))
        object.__setattr__(self, "sigma_theta2", float(self.sigma_theta2))
        vec = {"mu_eta", "mu_gamma", "Sigma_eta_theta", "Sigma_gamma_theta"}
        mat = {"Sigma_eta_eta", "Sigma_eta_gamma", "Sigma_gamma_gamma"}
        for name in vec:
            object.__setattr__(self, name, _frozen(getattr(self, name), (k,), name))
        for name in mat:
            object.__setattr__(self, name, _frozen(getattr(self, name), (k, k), name))
        v = np.zeros(k) if self.v is None else self.v
        object.__setattr__(self, "v", _frozen(v, (k,), "v"))

    # short aliases used throughout the solvers
    @property
    def S_et(self) -> Array:
        return self.Sigma_eta_theta

    @property
    def S_gt(self) -> Array:
        return self.Sigma_gamma_theta

    @property
    def S_ee(self) -> Array:
        return self.Sigma_eta_eta

    @property
    def S_eg(self) -> Array:
        return self.Sigma_eta_gamma

    @property
    def S_gg(self) -> Array:
        return self.Sigma_gamma_gamma

    @property
    def dim(self) -> int:
        return 1 + 2 * self.k

    def mean(self) -> Array:
        return np.concatenate([[self.mu_theta], self.mu_eta, self.mu_gamma])

    def joint_cov(self) -> Array:
        """The (1+2k) x (1+2k) variance matrix of (theta, eta, gamma)."""
        k = self.k
        S = np.empty((1 + 2 * k, 1 + 2 * k))
        S[0, 0] = self.sigma_theta2
        S[0, 1 : k + 1] = S[1 : k + 1, 0] = self.S_et
        S[0, k + 1 :] = S[k + 1 :, 0] = self.S_gt
        S[1 : k + 1, 1 : k + 1] = self.S_ee
        S[1 : k + 1, k + 1 :] = self.S_eg
        S[k + 1 :, 1 : k + 1] = self.S_eg.T
        S[k + 1 :, k + 1 :] = self.S_gg
        return S

    def replace(self, **changes: Any) -> "CovarianceModel":
        d = {name: getattr(self, name) for name in self.__dataclass_fields__}
        d.update(changes)
        return CovarianceModel(**d)

    def scale_gamma_variance(self, factor: float) -> "CovarianceModel":
        return self.replace(Sigma_gamma_gamma=factor * self.S_gg)

    @property
    def gamma_is_constant(self) -> bool:
        return not np.any(self.S_gg) and not np.any(self.S_eg) and not np.any(self.S_gt)

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "mu_theta": self.mu_theta,
            "mu_eta": self.mu_eta.tolist(),
            "mu_gamma": self.mu_gamma.tolist(),
            "sigma_theta2": self.sigma_theta2,
            "sigma_eta_theta": self.S_et.tolist(),
            "sigma_gamma_theta": self.S_gt.tolist(),
            "sigma_eta_eta": self.S_ee.tolist(),
            "sigma_eta_gamma": self.S_eg.tolist(),
            "sigma_gamma_gamma": self.S_gg.tolist(),
            "v": self.v.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CovarianceModel":
        unknown = set(d) - set(MODEL_KEYS)
        if unknown:
            raise ModelError(f"unknown model keys: {sorted(unknown)}")
        missing = set(MODEL_KEYS[:-1]) - set(d)
        if missing:
            raise ModelError(f"missing model keys: {sorted(missing)}")
        return cls(
            k=d["k"],
            mu_theta=d["mu_theta"],
            mu_eta=d["mu_eta"],
            mu_gamma=d["mu_gamma"],
            sigma_theta2=d["sigma_theta2"],
            Sigma_eta_theta=d["sigma_eta_theta"],
            Sigma_gamma_theta=d["sigma_gamma_theta"],
            Sigma_eta_eta=d["sigma_eta_eta"],
            Sigma_eta_gamma=d["sigma_eta_gamma"],
            Sigma_gamma_gamma=d["sigma_gamma_gamma"],
            v=d.get("v"),
        )


def independent_model(
    Sigma_eta_theta,
    Sigma_eta_eta,
    Sigma_gamma_gamma,
    sigma_theta2: float,
    *,
    Sigma_gamma_theta=None,
    mu_theta: float = 0.0,
    mu_eta=None,
    mu_gamma=None,
) -> CovarianceModel:
    """Build a model with cov(eta, gamma) = 0.

    ``mu_gamma`` defaults to four standard deviations of gamma so that the
    support check in :func:`validate` stays quiet.
    """
    S_et = np.atleast_1d(np.asarray(Sigma_eta_theta, dtype=float))
    k = S_et.size
    S_ee = np.asarray(Sigma_eta_eta, dtype=float).reshape(k, k)
    S_gg = np.asarray(Sigma_gamma_gamma, dtype=float).reshape(k, k)
    S_gt = np.zeros(k) if Sigma_gamma_theta is None else np.asarray(Sigma_gamma_theta, float)
    if mu_gamma is None:
        mu_gamma = 4.0 * np.sqrt(np.clip(np.diag(S_gg), 0.0, None))
    return CovarianceModel(
        k=k,
        mu_theta=mu_theta,
        mu_eta=np.zeros(k) if mu_eta is None else mu_eta,
        mu_gamma=mu_gamma,
        sigma_theta2=sigma_theta2,
        Sigma_eta_theta=S_et,
        Sigma_gamma_theta=S_gt,
        Sigma_eta_eta=S_ee,
        Sigma_eta_gamma=np.zeros((k, k)),
        Sigma_gamma_gamma=S_gg,
    )


def load_model(path: str | Path) -> CovarianceModel:
    with open(path) as fh:
        return CovarianceModel.from_dict(json.load(fh))


def dump_model(model: CovarianceModel, path: str | Path) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(model.to_dict(), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class AssumptionReport:
    assumption_A: bool
    assumption_A_relaxed: bool
    assumption_B: bool
    gamma_gamma_pd: bool
    details: tuple[str, ...] = ()


def _is_symmetric(M: Array, tol: float = SYM_TOL) -> bool:
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    return bool(np.all(np.abs(M - M.T) <= tol * scale))


def _min_eig_ok(M: Array, strict: bool) -> bool:
    w = np.linalg.eigvalsh(M)
    top = max(float(np.max(np.abs(w))), 1e-300)
    return bool(w[0] > EIG_TOL * top) if strict else bool(w[0] >= -EIG_TOL * top)


def conditional_eta_var(model: CovarianceModel) -> Array:
    """Sigma_ee - Sigma_eg pinv(Sigma_gg) Sigma_ge, proportional to E[var(eta | gamma)]."""
    return model.S_ee - model.S_eg @ pinv(model.S_gg) @ model.S_eg.T


def assumption_report(model: CovarianceModel) -> AssumptionReport:
    details = []
    for i in range(model.k):
        if model.S_gt[i] != 0:
            details.append(f"cov(gamma_{i+1}, theta) = {model.S_gt[i]:g}")
        for j in range(model.k):
            if model.S_eg[i, j] != 0:
                details.append(f"cov(eta_{i+1}, gamma_{j+1}) = {model.S_eg[i, j]:g}")
            if model.S_gg[i, j] < 0:
                details.append(f"cov(gamma_{i+1}, gamma_{j+1}) = {model.S_gg[i, j]:g} < 0")
    no_eg = not np.any(model.S_eg)
    A = no_eg and not np.any(model.S_gt)
    A_rel = no_eg and bool(np.all(model.S_gt <= 0))
    B = bool(np.all(model.S_gg >= 0))
    pd = _min_eig_ok(model.S_gg, strict=True)
    return AssumptionReport(A, A_rel, B, pd, tuple(details))


def validate(model: CovarianceModel) -> AssumptionReport:
    """Check the standing nondegeneracy conditions and report the covariance assumptions.

    Raises for structural problems (asymmetry, joint variance not PSD,
    degenerate var(eta | gamma), no information about theta). Violations of
    assumptions A and B are only reported: the general solvers accept them.
    """
    if not (_is_symmetric(model.S_ee) and _is_symmetric(model.S_gg)):
        raise NotSymmetric("Sigma_eta_eta and Sigma_gamma_gamma must be symmetric")
    if model.sigma_theta2 < 0:
        raise NotPositiveSemidefinite("sigma_theta2 must be nonnegative")
    if not _min_eig_ok(model.joint_cov(), strict=False):
        raise NotPositiveSemidefinite("joint variance of (theta, eta, gamma) is not PSD")
    if not _min_eig_ok(conditional_eta_var(model), strict=True):
        raise Degenerate("var(eta | gamma) does not have full rank")
    if not (np.any(model.S_et) or np.any(model.S_gt)):
        raise NoInformation("(eta, gamma) carries no information about theta")
    if np.any(model.mu_gamma < 0):
        raise NegativeAbilityMean("mu_gamma entries must be nonnegative")
    sd = np.sqrt(np.clip(np.diag(model.S_gg), 0.0, None))
    low = np.flatnonzero(model.mu_gamma < 3.0 * sd)
    if low.size:
        warnings.warn(
            f"mu_gamma below 3 sd for features {(low + 1).tolist()}; "
            "gamma >= 0 on the support is doubtful",
            SupportWarning,
            stacklevel=2,
        )
    return assumption_report(model)


# ---------------------------------------------------------------------------
# linear algebra and regression


def pinv(M) -> Array:
    """Moore-Penrose pseudoinverse of a symmetric matrix via eigendecomposition."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or not _is_symmetric(M, 1e-10):
        raise NotSymmetric("pinv expects a square symmetric matrix")
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    if w.size == 0:
        return M.copy()
    top = float(np.max(np.abs(w)))
    keep = np.abs(w) > PINV_TOL * top if top > 0 else np.zeros_like(w, dtype=bool)
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    return (V * inv) @ V.T


def _solve(A: Array, y: Array) -> Array:
    try:
        return np.linalg.solve(A, y)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(str(exc)) from exc


def beta(model: CovarianceModel) -> tuple[Array, float]:
    """Coefficients of the regression of theta on eta: (beta, beta0)."""
    b = _solve(model.S_ee, model.S_et)
    return b, model.mu_theta - float(b @ model.mu_eta)


def feature_var(model: CovarianceModel, b) -> Array:
    """var(eta + b o gamma)."""
    D = np.diag(b)
    return model.S_ee + model.S_eg @ D + D @ model.S_eg.T + D @ model.S_gg @ D


def feature_cov(model: CovarianceModel, b) -> Array:
    """cov(eta + b o gamma, theta + v'(b o gamma))."""
    b = np.asarray(b, dtype=float)
    bv = b * model.v
    return model.S_et + b * model.S_gt + model.S_eg @ bv + b * (model.S_gg @ bv)


def reg_theta_given_features(model: CovarianceModel, b) -> Array:
    """Receiver best response to the sender distortion b o gamma."""
    b = np.asarray(b, dtype=float)
    return _solve(feature_var(model, b), feature_cov(model, b))


def intercept(model: CovarianceModel, b) -> float:
    """b0 making the decision unbiased once the sender plays d = b o gamma."""
    b = np.asarray(b, dtype=float)
    return model.mu_theta - float(b @ (model.mu_eta + b * model.mu_gamma))


# ---------------------------------------------------------------------------
# moments of the score s = b'eta + (b o b)'gamma, with derivatives in b


def score_var(model: CovarianceModel, b) -> float:
    b = np.asarray(b, dtype=float)
    bb = b * b
    return float(b @ model.S_ee @ b + 2.0 * b @ model.S_eg @ bb + bb @ model.S_gg @ bb)


def score_var_grad(model: CovarianceModel, b) -> Array:
    b = np.asarray(b, dtype=float)
    bb = b * b
    return (
        2.0 * model.S_ee @ b
        + 2.0 * model.S_eg @ bb
        + 4.0 * b * (model.S_eg.T @ b)
        + 4.0 * b * (model.S_gg @ bb)
    )


def score_var_hess(model: CovarianceModel, b) -> Array:
    b = np.asarray(b, dtype=float)
    D = np.diag(b)
    S_eg, S_gg = model.S_eg, model.S_gg
    return (
        2.0 * model.S_ee
        + 4.0 * (S_eg @ D + D @ S_eg.T + np.diag(S_eg.T @ b))
        + 8.0 * D @ S_gg @ D
        + 4.0 * np.diag(S_gg @ (b * b))
    )


def score_cov(model: CovarianceModel, b) -> float:
    """cov(s, theta)."""
    b = np.asarray(b, dtype=float)
    return float(b @ model.S_et + (b * b) @ model.S_gt)


def score_cov_grad(model: CovarianceModel, b) -> Array:
    return model.S_et + 2.0 * np.asarray(b, dtype=float) * model.S_gt


def score_cov_hess(model: CovarianceModel, b=None) -> Array:
    return 2.0 * np.diag(model.S_gt)


def normalize_productive(x0, A, B, model: CovarianceModel) -> CovarianceModel:
    """Rewrite x = x0 + A eta + B d as B^{-1}x = B^{-1}(x0 + A eta) + d.

    The returned model has intrinsic level B^{-1}(x0 + A eta); gamma blocks
    and the distortion weights v are unchanged.
    """
    k = model.k
    A = np.asarray(A, dtype=float).reshape(k, k)
    B = np.asarray(B, dtype=float).reshape(k, k)
    x0 = np.asarray(x0, dtype=float).reshape(k)
    for name, M in (("A", A), ("B", B)):
        if np.linalg.matrix_rank(M) < k:
            raise SingularMatrix(f"{name} is rank deficient")
    Binv = np.linalg.inv(B)
    M = Binv @ A
    S_ee = M @ model.S_ee @ M.T
    return model.replace(
        mu_eta=Binv @ (x0 + A @ model.mu_eta),
        Sigma_eta_eta=0.5 * (S_ee + S_ee.T),
        Sigma_eta_theta=M @ model.S_et,
        Sigma_eta_gamma=M @ model.S_eg,
    )
