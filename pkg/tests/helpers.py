"""Random model factories and independent oracles shared by the tests."""

from __future__ import annotations

import numpy as np

from stratscore.commitment import SimpleSetting
from stratscore.covmodel import CovarianceModel


def random_ab_model(
    rng: np.random.Generator, k: int, *, relaxed: bool = False, pd: bool = True, informative: bool = False
) -> CovarianceModel:
    """Model with cov(eta, gamma) = 0 and Sigma_gg entrywise nonnegative.

    ``informative`` rescales cov(eta, theta) to a norm in [0.5, 2] so that
    regime differences are not lost below absolute tolerances.
    """
    W = rng.standard_normal((k, k))
    S_ee = W @ W.T + 0.5 * np.eye(k)
    F = np.abs(rng.standard_normal((k, k)))
    S_gg = F @ F.T + (0.05 * np.eye(k) if pd else 0.0)
    S_et = rng.standard_normal(k)
    if informative:
        S_et *= rng.uniform(0.5, 2.0) / np.linalg.norm(S_et)
    S_gt = -np.abs(rng.standard_normal(k)) * 0.3 if relaxed else np.zeros(k)
    # sigma_theta2 above the explained variance keeps the joint matrix PD
    explained = S_et @ np.linalg.solve(S_ee, S_et) + S_gt @ np.linalg.solve(S_gg + 1e-9 * np.eye(k), S_gt)
    return CovarianceModel(
        k=k,
        mu_theta=float(rng.standard_normal()),
        mu_eta=rng.standard_normal(k),
        mu_gamma=4.0 * np.sqrt(np.diag(S_gg)),
        sigma_theta2=float(explained + 1.0),
        Sigma_eta_theta=S_et,
        Sigma_gamma_theta=S_gt,
        Sigma_eta_eta=S_ee,
        Sigma_eta_gamma=np.zeros((k, k)),
        Sigma_gamma_gamma=S_gg,
    )


def random_general_model(rng: np.random.Generator, k: int) -> CovarianceModel:
    """Model drawn from a random PD joint covariance; no assumption is imposed."""
    d = 1 + 2 * k
    M = rng.standard_normal((d, d))
    S = M @ M.T + 0.3 * np.eye(d)
    return CovarianceModel(
        k=k,
        mu_theta=0.0,
        mu_eta=np.zeros(k),
        mu_gamma=4.0 * np.sqrt(np.diag(S)[k + 1 :]),
        sigma_theta2=S[0, 0],
        Sigma_eta_theta=S[0, 1 : k + 1],
        Sigma_gamma_theta=S[0, k + 1 :],
        Sigma_eta_eta=S[1 : k + 1, 1 : k + 1],
        Sigma_eta_gamma=S[1 : k + 1, k + 1 :],
        Sigma_gamma_gamma=S[k + 1 :, k + 1 :],
    )


def random_asymmetric_model(rng: np.random.Generator, k: int) -> CovarianceModel:
    """A/B model with Sigma_gg PD and no built-in symmetry."""
    return random_ab_model(rng, k)


def random_simple_setting(rng: np.random.Generator, k: int) -> SimpleSetting:
    return SimpleSetting(rng.uniform(0.2, 3.0, k), rng.uniform(0.1, 6.0, k))


# ---------------------------------------------------------------------------
# oracles built from the joint covariance rather than the block formulas


def joint_var_of_linear(model: CovarianceModel, L: np.ndarray) -> float:
    return float(L @ model.joint_cov() @ L)


def score_loadings(model: CovarianceModel, b: np.ndarray) -> np.ndarray:
    """Loadings of b'eta + (b o b)'gamma on (theta, eta, gamma)."""
    return np.concatenate([[0.0], b, b * b])


def oracle_receiver_loss(model: CovarianceModel, b: np.ndarray) -> float:
    L = score_loadings(model, b)
    L[0] = -1.0
    return joint_var_of_linear(model, L)


def oracle_best_response(model: CovarianceModel, b: np.ndarray) -> np.ndarray:
    """Regression of theta + v'(b o gamma) on eta + b o gamma via loadings matrices."""
    k = model.k
    S = model.joint_cov()
    X = np.zeros((k, 1 + 2 * k))
    X[:, 1 : k + 1] = np.eye(k)
    X[:, k + 1 :] = np.diag(b)
    y = np.zeros(1 + 2 * k)
    y[0] = 1.0
    y[k + 1 :] = model.v * b
    return np.linalg.solve(X @ S @ X.T, X @ S @ y)


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g
