"""Monte Carlo verification with concrete elliptical distributions.

Draws are ``mu + Z @ S`` where ``S`` is the symmetric square root of the joint
variance and ``Z`` is spherical with identity covariance. Column order is
(theta, eta_1..eta_k, gamma_1..gamma_k).
"""

from __future__ import annotations

import re
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .covmodel import CovarianceModel
from .errors import InvalidDof, InvalidFamily, SupportWarning
from .signaling import Coefficients
from .tables import write_csv

Array = NDArray[np.float64]

FAMILIES = ("gaussian", "uniform_ellipsoid", "student")
SCLB_MAGIC = b"SCLB"
SCLB_VERSION = 1
MIN_CHECK_N = 100


def parse_family(family: str, dof: float | None = None) -> tuple[str, float | None]:
    """Accept "student" with ``dof`` or the inline forms "student(5)" and "student:5"."""
    m = re.fullmatch(r"student[(:]\s*([0-9.eE+-]+)\s*\)?", family.strip())
    if m:
        family, dof = "student", float(m.group(1))
    if family not in FAMILIES:
        raise InvalidFamily(f"unknown family {family!r}; expected one of {FAMILIES}")
    if family == "student":
        if dof is None or not np.isfinite(dof) or dof <= 2:
            raise InvalidDof(f"student family needs dof > 2, got {dof}")
        return family, float(dof)
    return family, None


@dataclass(frozen=True)
class SampleBatch:
    n: int
    family: str
    seed: int
    draws: Array
    k: int
    dof: float | None = None

    @property
    def theta(self) -> Array:
        return self.draws[:, 0]

    @property
    def eta(self) -> Array:
        return self.draws[:, 1 : self.k + 1]

    @property
    def gamma(self) -> Array:
        return self.draws[:, self.k + 1 :]

    def features(self, b) -> Array:
        """x = eta + b o gamma, the features once the sender distorts by d = b o gamma."""
        return self.eta + np.asarray(b, dtype=float) * self.gamma

    def moments_consistent(self, model: CovarianceModel, z: float = 5.0) -> bool | None:
        """Mean and covariance within ``z`` standard errors of the model; None when n is small."""
        if self.n < MIN_CHECK_N:
            return None
        X = self.draws
        mean = X.mean(axis=0)
        se_mean = X.std(axis=0, ddof=1) / np.sqrt(self.n)
        if np.any(np.abs(mean - model.mean()) > z * se_mean + 1e-12):
            return False
        C = X - mean
        prods = C[:, :, None] * C[:, None, :]
        cov = prods.mean(axis=0)
        se_cov = prods.std(axis=0, ddof=1) / np.sqrt(self.n)
        return bool(np.all(np.abs(cov - model.joint_cov()) <= z * se_cov + 1e-12))


def sqrt_psd(S: Array, tol: float = 1e-12) -> Array:
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    top = max(float(np.max(np.abs(w))), 0.0)
    w = np.where(w > tol * top, w, 0.0)
    return (V * np.sqrt(w)) @ V.T


def _spherical(rng: np.random.Generator, family: str, n: int, d: int, dof: float | None) -> Array:
    Z = rng.standard_normal((n, d))
    if family == "gaussian":
        return Z
    if family == "uniform_ellipsoid":
        Z /= np.linalg.norm(Z, axis=1, keepdims=True)
        radius = rng.random(n) ** (1.0 / d) * np.sqrt(d + 2.0)
        return Z * radius[:, None]
    chi2 = rng.chisquare(dof, size=n)
    return Z * np.sqrt((dof - 2.0) / chi2)[:, None]


def sample(
    model: CovarianceModel, family: str, n: int, seed: int, dof: float | None = None
) -> SampleBatch:
    """Draw ``n`` rows from an elliptical law with the model's mean and variance.

    The stream comes from a Philox generator keyed by ``seed``, so batches are
    reproducible bit for bit.
    """
    family, dof = parse_family(family, dof)
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    Z = _spherical(rng, family, int(n), model.dim, dof)
    draws = model.mean() + Z @ sqrt_psd(model.joint_cov())
    draws.setflags(write=False)
    neg = float(np.mean(np.any(draws[:, model.k + 1 :] < 0, axis=1)))
    if neg > 0:
        warnings.warn(
            f"{neg:.4%} of draws have a negative ability component",
            SupportWarning,
            stacklevel=2,
        )
    return SampleBatch(int(n), family, int(seed), draws, model.k, dof)


# ---------------------------------------------------------------------------
# regression checks


def _ols_hc0(X: Array, y: Array) -> tuple[Array, Array, Array]:
    """OLS coefficients, heteroskedasticity-robust standard errors and residuals."""
    XtX_inv = np.linalg.inv(X.T @ X)
    coef = XtX_inv @ (X.T @ y)
    resid = y - X @ coef
    meat = (X * resid[:, None] ** 2).T @ X
    cov = XtX_inv @ meat @ XtX_inv
    return coef, np.sqrt(np.diag(cov)), resid


def _orthogonality_t(resid: Array, f: Array) -> float:
    f = f - f.mean()
    sd = f.std()
    if sd == 0:
        return 0.0
    prod = resid * (f / sd)
    se = prod.std(ddof=1) / np.sqrt(prod.size)
    return float(prod.mean() / se) if se > 0 else 0.0


@dataclass(frozen=True)
class LCEReport:
    skipped: bool
    slope: float = float("nan")
    slope_se: float = float("nan")
    intercept: float = float("nan")
    vector_coef: Array | None = None
    vector_se: Array | None = None
    square_t: float = float("nan")
    cube_t: float = float("nan")


def check_lce(batch: SampleBatch, b) -> LCEReport:
    """Regress theta on the score b'(eta + b o gamma) and on the feature vector.

    ``square_t`` and ``cube_t`` are t-statistics for the correlation of the
    scalar-regression residual with the squared and cubed score; both should
    be near zero when conditional expectations are linear.
    """
    b = np.asarray(b, dtype=float)
    x = batch.features(b)
    s = x @ b
    if not np.any(b) or np.std(s) == 0:
        return LCEReport(skipped=True)
    ones = np.ones(batch.n)
    coef, se, resid = _ols_hc0(np.column_stack([ones, s]), batch.theta)
    zs = (s - s.mean()) / s.std()
    vcoef, vse, _ = _ols_hc0(np.column_stack([ones, x]), batch.theta)
    return LCEReport(
        skipped=False,
        slope=float(coef[1]),
        slope_se=float(se[1]),
        intercept=float(coef[0]),
        vector_coef=vcoef[1:],
        vector_se=vse[1:],
        square_t=_orthogonality_t(resid, zs**2),
        cube_t=_orthogonality_t(resid, zs**3),
    )


def _sq_errors(batch: SampleBatch, coeffs: Coefficients) -> Array:
    x = batch.features(coeffs.b)
    return (coeffs.b0 + x @ coeffs.b - batch.theta) ** 2


def empirical_loss(batch: SampleBatch, coeffs: Coefficients) -> float:
    """Mean squared error of the decision b0 + b'x against theta."""
    return float(_sq_errors(batch, coeffs).mean())


def empirical_loss_se(batch: SampleBatch, coeffs: Coefficients) -> tuple[float, float]:
    e = _sq_errors(batch, coeffs)
    return float(e.mean()), float(e.std(ddof=1) / np.sqrt(e.size))


# ---------------------------------------------------------------------------
# serialization


def column_names(k: int) -> list[str]:
    return ["theta"] + [f"eta_{i+1}" for i in range(k)] + [f"gamma_{i+1}" for i in range(k)]


def write_sclb(batch: SampleBatch, path: str | Path) -> None:
    """Binary column file.

    Layout (little-endian): magic "SCLB", u8 version, u32 k, u64 n, u64 seed,
    u16 family-name length, family name in UTF-8, f64 dof (NaN unless
    student), then the 1 + 2k columns of f64 values one after another.
    """
    name = batch.family.encode("utf-8")
    dof = float("nan") if batch.dof is None else batch.dof
    header = SCLB_MAGIC + struct.pack(
        "<BIQQH", SCLB_VERSION, batch.k, batch.n, batch.seed & (2**64 - 1), len(name)
    ) + name + struct.pack("<d", dof)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.asfortranarray(batch.draws, dtype="<f8").tobytes(order="F"))


def read_sclb(path: str | Path) -> SampleBatch:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != SCLB_MAGIC:
        raise ValueError("not an SCLB file")
    version, k, n, seed, name_len = struct.unpack_from("<BIQQH", raw, 4)
    if version != SCLB_VERSION:
        raise ValueError(f"unsupported SCLB version {version}")
    off = 4 + struct.calcsize("<BIQQH")
    family = raw[off : off + name_len].decode("utf-8")
    off += name_len
    (dof,) = struct.unpack_from("<d", raw, off)
    off += 8
    d = 1 + 2 * k
    data = np.frombuffer(raw, dtype="<f8", count=n * d, offset=off).reshape((n, d), order="F")
    draws = np.array(data, dtype=float)
    draws.setflags(write=False)
    return SampleBatch(n, family, seed, draws, k, None if np.isnan(dof) else dof)


def write_batch_csv(batch: SampleBatch, path: str | Path) -> None:
    write_csv(path, column_names(batch.k), batch.draws)
