"""Optimal scoring: an intermediary commits to a score the receiver then obeys.

The noise-free program maximizes cov(s, theta) over slopes b subject to the
obedience condition var(s) = cov(s, theta), where s = b'eta + (b o b)'gamma
is the score induced by the sender's distortion. Its solution is found on the
one-parameter family b(lam) = argmin 0.5 var(s) - lam cov(s, theta), with lam
chosen by bisection so that b(lam) is obedient.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import minimize

from . import covmodel as cm
from ._newton import minimize_newton
from .covmodel import CovarianceModel
from .cubic import real_roots
from .errors import (
    AssumptionViolated,
    BracketFailure,
    DegenerateAbilityMean,
    HeuristicWarning,
    InvalidWeight,
    NoConvergence,
    UnsupportedDimension,
)
from .signaling import (
    Coefficients,
    make_coefficients,
    receiver_loss,
    signaling_jacobian,
    signaling_residual,
    solve_signaling,
    solve_signaling_general,
)

Array = NDArray[np.float64]

LAMBDA_HI = 2.0 - 1e-9
BISECT_ITERS = 100
OBEDIENCE_TOL = 1e-8


@dataclass(frozen=True)
class ScoringSolution:
    """A score with its multiplier and optional noise.

    ``lambda_`` is None for solutions not found on the lambda family (noisy
    or efficient-scoring branches). ``method`` records which branch produced
    the result; ``"heuristic"`` marks the local-search fallback.
    """

    coeffs: Coefficients
    lambda_: float | None
    t: float
    obedience_residual: float
    noise_ratio: float
    method: str = "lambda"

    @property
    def b(self) -> Array:
        return self.coeffs.b

    @property
    def loss(self) -> float:
        return self.coeffs.receiver_loss

    def to_dict(self) -> dict[str, Any]:
        return {
            "b0": self.coeffs.b0,
            "b": self.coeffs.b.tolist(),
            "lambda": self.lambda_,
            "t": self.t,
            "noise_ratio": self.noise_ratio,
            "obedience_residual": self.obedience_residual,
            "loss": self.coeffs.receiver_loss,
        }


def obedience_residual(model: CovarianceModel, b, t: float = 0.0) -> float:
    """var(s) + t^2 - cov(s, theta); zero when the score is obeyed."""
    if t < 0:
        raise ValueError("noise level t must be nonnegative")
    return cm.score_var(model, b) + t * t - cm.score_cov(model, b)


def _package(model: CovarianceModel, b, t2: float, lam: float | None, method: str) -> ScoringSolution:
    b = np.asarray(b, dtype=float)
    t2 = max(float(t2), 0.0)
    var_s = cm.score_var(model, b)
    res = var_s + t2 - cm.score_cov(model, b)
    coeffs = Coefficients(
        b0=cm.intercept(model, b),
        b=b,
        regime="score",
        residual_norm=abs(res),
        receiver_loss=receiver_loss(model, b) + t2,
    )
    total = var_s + t2
    ratio = t2 / total if t2 > 0 and total > 0 else 0.0
    return ScoringSolution(coeffs, lam, float(np.sqrt(t2)), res, ratio, method)


def _require_convex(model: CovarianceModel) -> cm.AssumptionReport:
    rep = cm.assumption_report(model)
    if not (rep.assumption_A_relaxed and rep.assumption_B):
        raise AssumptionViolated(
            "scoring solver needs cov(gamma, eta) = 0, cov(gamma, theta) <= 0 and "
            "Sigma_gamma_gamma >= 0 entrywise"
        )
    if np.any(model.v):
        raise AssumptionViolated("scoring assumes no productive distortion (v = 0)")
    return rep


# ---------------------------------------------------------------------------
# lambda family


def lambda_path_point(model: CovarianceModel, lam: float, x0=None) -> Array:
    """argmin_b 0.5 var(s) - lam cov(s, theta); strictly convex under the assumptions."""
    start = np.zeros(model.k) if x0 is None else np.asarray(x0, dtype=float)
    b, _ = minimize_newton(
        lambda z: 0.5 * cm.score_var(model, z) - lam * cm.score_cov(model, z),
        lambda z: 0.5 * cm.score_var_grad(model, z) - lam * cm.score_cov_grad(model, z),
        lambda z: 0.5 * cm.score_var_hess(model, z) - lam * cm.score_cov_hess(model, z),
        start,
        tol=1e-13 * max(1.0, float(np.max(np.abs(model.S_et)))),
    )
    return b


def _bisect_lambda(model: CovarianceModel, lo: float, hi: float) -> tuple[float, Array] | None:
    b_lo = lambda_path_point(model, lo)
    r_lo = obedience_residual(model, b_lo)
    b_hi = lambda_path_point(model, hi, b_lo)
    r_hi = obedience_residual(model, b_hi)
    if r_lo > 0 or r_hi < 0:
        return None
    if r_lo == 0:
        return lo, b_lo
    b = b_hi
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        b = lambda_path_point(model, mid, b)
        r = obedience_residual(model, b)
        if r > 0:
            hi, r_hi = mid, r
        else:
            lo, r_lo = mid, r
        if hi - lo <= 1e-15 * hi or abs(r) <= 1e-15:
            break
    lam = 0.5 * (lo + hi)
    return lam, lambda_path_point(model, lam, b)


def solve_scoring(model: CovarianceModel) -> ScoringSolution:
    """Noise-free optimal score via bisection on the lambda family.

    Under assumption A the multiplier lies in [1, 2). When cov(gamma, theta) is
    merely nonpositive the upper end of the bracket is doubled until the
    obedience residual changes sign.
    """
    rep = _require_convex(model)
    if not np.any(model.S_gg):
        b, _ = cm.beta(model)
        return _package(model, b, 0.0, 1.0, "closed-form")
    if not np.any(model.S_et) and rep.assumption_A_relaxed:
        return _package(model, np.zeros(model.k), 0.0, 1.0, "closed-form")
    found = _bisect_lambda(model, 1.0, LAMBDA_HI)
    hi = 2.0
    while found is None and not rep.assumption_A and hi < 2.0**12:
        hi *= 2.0
        found = _bisect_lambda(model, 1.0, hi)
    if found is None:
        warnings.warn("no sign change on the lambda bracket; widening to [0.5, 2]", HeuristicWarning, stacklevel=2)
        found = _bisect_lambda(model, 0.5, 2.0)
    if found is None:
        raise BracketFailure("obedience residual has no sign change on the lambda bracket")
    lam, b = found
    return _package(model, b, 0.0, lam, "lambda")


def solve_scoring_heuristic(model: CovarianceModel, seed: int = 0) -> ScoringSolution:
    """Local search for the noise-free score when the convex reformulation is unavailable.

    Starts from every signaling equilibrium (each is obedient) and from the
    obedient points on a fan of rays, then refines with SLSQP. The result is
    a best-found point, not a certified optimum.
    """
    warnings.warn("scoring solved by local search; optimality not certified", HeuristicWarning, stacklevel=2)
    starts: list[Array] = []
    if model.k <= 4:
        starts.extend(s.b for s in solve_signaling_general(model, seed=seed).solutions)
    rng = np.random.Generator(np.random.Philox(seed))
    for u in rng.standard_normal((64, model.k)):
        u /= np.linalg.norm(u)
        for r in obedient_radii(model, u):
            starts.append(r * u)
    best = None
    cons = {
        "type": "eq",
        "fun": lambda z: np.array([obedience_residual(model, z)]),
        "jac": lambda z: (cm.score_var_grad(model, z) - cm.score_cov_grad(model, z))[None, :],
    }
    for x0 in starts:
        out = minimize(
            lambda z: -cm.score_cov(model, z),
            x0,
            jac=lambda z: -cm.score_cov_grad(model, z),
            constraints=[cons],
            method="SLSQP",
            options={"ftol": 1e-15, "maxiter": 500},
        )
        if abs(obedience_residual(model, out.x)) > OBEDIENCE_TOL:
            continue
        if best is None or cm.score_cov(model, out.x) > cm.score_cov(model, best):
            best = out.x
    if best is None:
        best = np.zeros(model.k)
    return _package(model, best, 0.0, None, "heuristic")


# ---------------------------------------------------------------------------
# noise


def _noise_candidate(model: CovarianceModel) -> Array | None:
    """Unconstrained maximizer of cov(s, theta) if it exists, else None."""
    S_et, S_gt = model.S_et, model.S_gt
    flat = S_gt == 0
    if np.any(S_gt > 0) or np.any(flat & (S_et != 0)):
        return None
    b = np.zeros(model.k)
    b[~flat] = -S_et[~flat] / (2.0 * S_gt[~flat])
    return b


def solve_scoring_noisy(model: CovarianceModel) -> ScoringSolution:
    """Optimal score when independent noise may be added to it.

    With noise the obedience constraint is slack, so b must maximize
    cov(s, theta) without constraint. That needs cov(gamma_i, theta) < 0 for
    every feature carrying information. When the maximizer leaves positive
    slack, the slack is filled with noise; otherwise the noise-free optimum
    is returned.
    """
    if np.any(model.S_eg) or np.any(model.v):
        warnings.warn("noisy scoring outside the independence assumption", HeuristicWarning, stacklevel=2)
    b = _noise_candidate(model)
    if b is not None and np.any(b):
        slack = cm.score_cov(model, b) - cm.score_var(model, b)
        if slack >= 0:
            return _package(model, b, slack, None, "stationary")
    rep = cm.assumption_report(model)
    if rep.assumption_A_relaxed and rep.assumption_B and not np.any(model.v):
        return solve_scoring(model)
    return solve_scoring_heuristic(model)


def _efficient_candidate(model: CovarianceModel, pi: float) -> Array:
    denom = pi * model.mu_gamma - 2.0 * (1.0 - pi) * model.S_gt
    return (1.0 - pi) * model.S_et / denom


def solve_efficient_scoring(model: CovarianceModel, pi: float) -> ScoringSolution:
    """Score maximizing pi * (sender welfare) + (1 - pi) * (receiver welfare).

    The sender's expected distortion cost is 0.5 (b o b)'mu_gamma. On the
    obedient set the receiver's loss is sigma_theta2 - cov(s, theta), so the
    program is convex: minimize pi * cost - (1 - pi) * cov subject to
    var(s) <= cov(s, theta), with noise filling any slack.
    """
    if not (0.0 <= pi <= 1.0) or not np.isfinite(pi):
        raise InvalidWeight(f"pi must lie in [0, 1], got {pi}")
    if pi == 0.0:
        return solve_scoring(model)
    _require_convex(model)
    if np.any(model.mu_gamma <= 0):
        raise DegenerateAbilityMean("efficient scoring with pi > 0 needs mu_gamma > 0")
    if pi == 1.0:
        return _package(model, np.zeros(model.k), 0.0, None, "efficient")
    b_hat = _efficient_candidate(model, pi)
    slack = cm.score_cov(model, b_hat) - cm.score_var(model, b_hat)
    if slack >= 0:
        return _package(model, b_hat, slack, None, "efficient")

    mu = model.mu_gamma

    def weighted(w: float, x0: Array) -> Array:
        a = 1.0 - w
        b, _ = minimize_newton(
            lambda z: a * (0.5 * pi * z @ (mu * z) - (1 - pi) * cm.score_cov(model, z))
            + w * (cm.score_var(model, z) - cm.score_cov(model, z)),
            lambda z: a * (pi * mu * z - (1 - pi) * cm.score_cov_grad(model, z))
            + w * (cm.score_var_grad(model, z) - cm.score_cov_grad(model, z)),
            lambda z: a * (pi * np.diag(mu) - (1 - pi) * cm.score_cov_hess(model))
            + w * (cm.score_var_hess(model, z) - cm.score_cov_hess(model)),
            x0,
            tol=1e-13 * max(1.0, float(np.max(np.abs(model.S_et)))),
        )
        return b

    lo, hi = 0.0, 1.0
    b = b_hat
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        b = weighted(mid, b)
        r = obedience_residual(model, b)
        if r > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 or abs(r) <= 1e-15:
            break
    return _package(model, b, 0.0, None, "efficient")


def noise_cutoff(model: CovarianceModel, iters: int = 200) -> float:
    """Largest Pareto weight pi at which efficient scoring is still noise-free."""
    _require_convex(model)
    if np.any(model.mu_gamma <= 0):
        raise DegenerateAbilityMean("noise cutoff needs mu_gamma > 0")

    def slack(pi: float) -> float:
        b = _efficient_candidate(model, pi)
        return cm.score_cov(model, b) - cm.score_var(model, b)

    lo, hi = 0.0, 1.0
    tiny = 1e-12
    if slack(tiny) >= 0:
        return 0.0
    lo = tiny
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if slack(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15:
            break
    return 0.5 * (lo + hi)


def pi_sweep(model: CovarianceModel, pis: Sequence[float]):
    """Efficient scoring over a grid of Pareto weights."""
    from .tables import SweepTable

    k = model.k
    table = SweepTable(
        ("pi",) + tuple(f"b_{i+1}" for i in range(k)) + ("b0", "loss", "t", "noise_ratio", "obedience_residual")
    )
    for pi in pis:
        sol = solve_efficient_scoring(model, float(pi))
        table.append([pi, *sol.b, sol.coeffs.b0, sol.loss, sol.t, sol.noise_ratio, sol.obedience_residual])
    return table


# ---------------------------------------------------------------------------
# diagnostics around the scoring solution


def asymmetry_test(model: CovarianceModel, tol: float = 1e-9) -> bool:
    """True when the signaling slopes are not a scalar multiple of the regression slopes."""
    if model.k == 1:
        return False
    b = solve_signaling(model).b
    bt, _ = cm.beta(model)
    nb, nt = np.linalg.norm(b), np.linalg.norm(bt)
    if nb == 0 or nt == 0:
        return False
    cos = float(np.clip(b @ bt / (nb * nt), -1.0, 1.0))
    return bool(np.sqrt(max(0.0, 1.0 - cos * cos)) > tol)


def ex_post_best_response(model: CovarianceModel, sol: ScoringSolution) -> Array:
    """Receiver's regression on raw features if the sender kept playing the scoring slopes."""
    return cm.reg_theta_given_features(model, sol.coeffs.b)


def solve_partial_disclosure(model: CovarianceModel, observed: Iterable[int]) -> Coefficients:
    """Optimal score when the receiver also sees the features in ``observed`` (0-based).

    Observed features must satisfy their own equilibrium condition; the score
    as a whole must be obeyed. Among such b the receiver loss is minimized.
    """
    observed = sorted(set(int(i) for i in observed))
    k = model.k
    if any(i < 0 or i >= k for i in observed):
        raise ValueError(f"observed indices must lie in 0..{k-1}")
    if len(observed) == k:
        sol = solve_signaling(model)
        return sol
    score = solve_scoring(model)
    if not observed:
        c = score.coeffs
        return Coefficients(c.b0, c.b, "custom", c.residual_norm, c.receiver_loss)
    I = np.array(observed)
    sig = solve_signaling(model).b

    def constraints(z: Array) -> Array:
        return np.concatenate([signaling_residual(model, z)[I], [obedience_residual(model, z)]])

    def constraints_jac(z: Array) -> Array:
        return np.vstack([signaling_jacobian(model, z)[I], cm.score_var_grad(model, z) - cm.score_cov_grad(model, z)])

    # b_J = 0 with the observed block in equilibrium is the other feasible branch
    drop = np.zeros(k)
    drop[I] = _observed_only_equilibrium(model, I)
    best = None
    for x0 in (sig, score.b, 0.5 * (sig + score.b), drop):
        out = minimize(
            lambda z: -cm.score_cov(model, z),
            x0,
            jac=lambda z: -cm.score_cov_grad(model, z),
            constraints=[{"type": "eq", "fun": constraints, "jac": constraints_jac}],
            method="SLSQP",
            options={"ftol": 1e-16, "maxiter": 1000},
        )
        z = _polish_partial(model, out.x, I)
        if np.max(np.abs(constraints(z))) > OBEDIENCE_TOL:
            continue
        if best is None or cm.score_cov(model, z) > cm.score_cov(model, best):
            best = z
    if best is None:
        raise NoConvergence("partial disclosure: no feasible point found")
    return make_coefficients(model, best, "custom", float(np.max(np.abs(constraints(best)))))


def _observed_only_equilibrium(model: CovarianceModel, I: Array) -> Array:
    idx = list(I)
    sub = model.replace(
        k=len(idx),
        mu_eta=model.mu_eta[idx],
        mu_gamma=model.mu_gamma[idx],
        Sigma_eta_theta=model.S_et[idx],
        Sigma_gamma_theta=model.S_gt[idx],
        Sigma_eta_eta=model.S_ee[np.ix_(idx, idx)],
        Sigma_eta_gamma=model.S_eg[np.ix_(idx, idx)],
        Sigma_gamma_gamma=model.S_gg[np.ix_(idx, idx)],
        v=model.v[idx],
    )
    return solve_signaling(sub).b


def _polish_partial(model: CovarianceModel, z: Array, I: Array, steps: int = 5) -> Array:
    """Gauss-Newton steps pulling a near-feasible point onto the constraint set."""
    z = np.array(z, dtype=float)
    for _ in range(steps):
        c = np.concatenate([signaling_residual(model, z)[I], [obedience_residual(model, z)]])
        if np.max(np.abs(c)) <= 1e-14:
            break
        A = np.vstack([signaling_jacobian(model, z)[I], cm.score_var_grad(model, z) - cm.score_cov_grad(model, z)])
        z = z - np.linalg.lstsq(A, c, rcond=None)[0]
    return z


# ---------------------------------------------------------------------------
# the obedient set traced along rays


def obedient_radii(model: CovarianceModel, u) -> Array:
    """Positive r with obedience_residual(r u) = 0, ascending."""
    u = np.asarray(u, dtype=float)
    uu = u * u
    c3 = float(uu @ model.S_gg @ uu)
    c2 = float(2.0 * u @ model.S_eg @ uu)
    c1 = float(u @ model.S_ee @ u - uu @ model.S_gt)
    c0 = -float(u @ model.S_et)
    roots = real_roots(c3, c2, c1, c0) if (c3 or c2 or c1) else np.array([])
    return roots[roots > 0]


def trace_obedient_curve(model: CovarianceModel, n_angles: int = 720) -> Array:
    """Closed obedient curve for k = 2: rows (angle, radius, b_1, b_2).

    Rays without a positive root contribute the origin.
    """
    if model.k != 2:
        raise UnsupportedDimension("obedient curve tracing needs k = 2")
    out = np.zeros((n_angles, 4))
    for n, ang in enumerate(np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)):
        u = np.array([np.cos(ang), np.sin(ang)])
        r = obedient_radii(model, u)
        rad = float(r[-1]) if r.size else 0.0
        out[n] = (ang, rad, rad * u[0], rad * u[1])
    return out
