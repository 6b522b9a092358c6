"""Bundled scenarios used by the ``example`` subcommand and the test suite."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .commitment import SimpleSetting, build_simple_setting
from .covmodel import CovarianceModel, independent_model


def example1() -> CovarianceModel:
    """Single feature, theta = eta, unit variances."""
    return independent_model([1.0], [[1.0]], [[1.0]], 1.0)


def nonmonotone(gamma2_var: float = 1.0) -> CovarianceModel:
    """Two correlated features where more ability variance on feature 2 lowers the loss."""
    return independent_model(
        [4.0, 1.0], [[2.0, 1.0], [1.0, 2.0]], np.diag([1.0, gamma2_var]), 9.0
    )


def symmetric_pair() -> SimpleSetting:
    return SimpleSetting([1.0, 1.0], [1.5, 1.5])


def asymmetric_pair() -> SimpleSetting:
    return SimpleSetting([1.0, 1.0], [1.5, 6.0])


def noisy_1d() -> CovarianceModel:
    """theta = eta - 2 gamma with independent unit-variance eta and gamma."""
    return independent_model([1.0], [[1.0]], [[1.0]], 5.0, Sigma_gamma_theta=[-2.0])


def three_equilibria_1d(sign: float = 1.0) -> CovarianceModel:
    """Single feature with three equilibria; ``sign`` flips cov(eta, theta)."""
    return independent_model([0.2 * sign], [[1.0]], [[1.0]], 5.0, Sigma_gamma_theta=[2.0])


def three_equilibria_2d() -> CovarianceModel:
    S = [[1.0, 0.5], [0.5, 1.0]]
    return independent_model([0.4, 0.2], S, S, 5.0, Sigma_gamma_theta=[0.4, 1.2])


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str  # "model" or "simple"
    build: Callable[[], object]
    action: str  # what the example command runs

    def model(self) -> CovarianceModel:
        obj = self.build()
        return build_simple_setting(obj) if isinstance(obj, SimpleSetting) else obj


SCENARIOS: dict[str, Scenario] = {
    "example1": Scenario("example1", "model", example1, "signal"),
    "nonmonotone": Scenario("nonmonotone", "model", nonmonotone, "nonmonotone"),
    "fig5-sym": Scenario("fig5-sym", "simple", symmetric_pair, "all"),
    "fig5-asym": Scenario("fig5-asym", "simple", asymmetric_pair, "all"),
    "noisy-1d": Scenario("noisy-1d", "model", noisy_1d, "noisy"),
    "appendixB5-1d": Scenario("appendixB5-1d", "model", three_equilibria_1d, "general"),
    "appendixB5-2d": Scenario("appendixB5-2d", "model", three_equilibria_2d, "general"),
}
