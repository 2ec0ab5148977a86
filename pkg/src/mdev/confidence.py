"""Moderate-deviation versus normal-approximation confidence intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .models import ParametricFamily
from .numerics import RngStream, map_chunks, normal_quantile

__all__ = [
    "IntervalSpec",
    "md_quantile",
    "normal_quantile_two_sided",
    "md_half_width",
    "normal_half_width",
    "half_width",
    "sample_size_ratio",
    "quantile_table",
    "coverage_sim",
    "CoverageResult",
]

METHODS = ("moderate_deviation", "normal")


def _check(sigma: float, n: int, alpha: float) -> None:
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    if not sigma > 0 or not math.isfinite(sigma):
        raise DomainError(f"sigma must be positive, got {sigma!r}")


def md_quantile(alpha: float) -> float:
    """``sqrt(2 |ln(alpha/2)|)``: the multiplier from the Gaussian exponent alone."""
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    return math.sqrt(2.0 * abs(math.log(alpha / 2.0)))


def normal_quantile_two_sided(alpha: float) -> float:
    """``x`` with ``Phi(-x) = alpha / 2``."""
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    return -normal_quantile(alpha / 2.0)


def md_half_width(sigma: float, n: int, alpha: float) -> float:
    _check(sigma, n, alpha)
    return md_quantile(alpha) * sigma / math.sqrt(n)


def normal_half_width(sigma: float, n: int, alpha: float) -> float:
    _check(sigma, n, alpha)
    return normal_quantile_two_sided(alpha) * sigma / math.sqrt(n)


def half_width(method: str, sigma: float, n: int, alpha: float) -> float:
    if method == "moderate_deviation":
        return md_half_width(sigma, n, alpha)
    if method == "normal":
        return normal_half_width(sigma, n, alpha)
    raise DomainError(f"unknown interval method {method!r}; expected one of {METHODS}")


def sample_size_ratio(alpha: float) -> float:
    """Factor by which ``n`` must grow for the moderate-deviation interval
    to be as narrow as the normal one."""
    return (md_quantile(alpha) / normal_quantile_two_sided(alpha)) ** 2


def quantile_table(alphas=(0.1, 0.05, 0.01)) -> list[dict]:
    return [
        {"alpha": a, "md_quantile": md_quantile(a), "normal_quantile": normal_quantile_two_sided(a)}
        for a in alphas
    ]


@dataclass(frozen=True)
class IntervalSpec:
    center: float
    half_width: float
    alpha: float
    method: str

    def __post_init__(self):
        if not self.half_width > 0:
            raise DomainError("half_width must be positive")
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        if self.method not in METHODS:
            raise DomainError(f"unknown interval method {self.method!r}")

    @property
    def bounds(self) -> tuple[float, float]:
        return self.center - self.half_width, self.center + self.half_width

    def covers(self, value: float) -> bool:
        # open interval
        return abs(value - self.center) < self.half_width


@dataclass
class CoverageResult:
    coverage: float
    std_error: float
    n_trials: int
    half_width: float
    method: str
    alpha: float

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "method": self.method,
            "half_width": self.half_width,
            "coverage": self.coverage,
            "std_error": self.std_error,
            "n_trials": self.n_trials,
        }


def coverage_sim(
    family: ParametricFamily,
    theta,
    n: int,
    alpha: float,
    method: str,
    n_trials: int,
    stream: RngStream,
    *,
    threads: int | None = None,
) -> CoverageResult:
    """Fraction of simulated samples whose interval around the sample mean
    covers the true mean ``E_theta[X]``. ``sigma`` is the known standard
    deviation of one observation. Uses the exact law of the sample mean.
    """
    if family.param_dim != 1:
        raise DomainError("coverage_sim supports one-dimensional families")
    sigma = math.sqrt(float(family.variance(theta)))
    hw = half_width(method, sigma, n, alpha)
    target = float(family.mean(theta))

    def run(size: int, sub: RngStream):
        xbar = family.sample_mean(theta, n, size, sub.rng)[:, 0]
        return int(np.count_nonzero(np.abs(xbar - target) < hw))

    hits = sum(map_chunks(run, n_trials, stream, threads=threads))
    cov = hits / n_trials
    se = math.sqrt(max(cov * (1 - cov), 0.0) / n_trials)
    return CoverageResult(cov, se, n_trials, hw, method, alpha)
