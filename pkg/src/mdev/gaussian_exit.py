"""Probability that a standard Gaussian vector leaves a scaled convex body.

``P(zeta not in t * body)`` is evaluated four ways: exactly (balls, via the
chi-squared tail), by the sharp asymptotic formulas for balls and
ellipsoids, by plain Monte Carlo, and by importance sampling with the
proposal mean shifted onto the boundary points nearest the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ive, logsumexp

from .errors import DomainError
from .geometry import Ball, ConvexBody, Ellipsoid
from .numerics import (
    DEFAULT_CHUNK,
    RngStream,
    chisq_log_upper_tail,
    log_gamma,
    map_chunks,
)

__all__ = [
    "ExitProbEstimate",
    "exit_ball_exact",
    "exit_ball_asymptotic",
    "exit_ellipsoid_asymptotic",
    "exit_mc",
    "exit_is",
    "exit_probability",
    "REGIME_GUARD",
]

REGIME_GUARD = 3.0
NEAR_TIE_RTOL = 1e-3
METHODS = ("exact", "asymptotic", "mc", "is")
_UNDERFLOW = 1e-300


@dataclass
class ExitProbEstimate:
    value: float
    log_value: float
    method: str
    std_error: float = 0.0
    n_samples: int = 0
    seed: int | None = None
    warnings: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}")

    @classmethod
    def from_log(cls, log_value: float, method: str, **kw) -> "ExitProbEstimate":
        value = math.exp(log_value) if log_value > math.log(_UNDERFLOW) else 0.0
        return cls(value=value, log_value=float(log_value), method=method, **kw)

    @property
    def relative_error(self) -> float:
        return self.std_error / self.value if self.value > 0 else math.inf

    def to_dict(self) -> dict:
        out = {
            "value": self.value,
            "log_value": self.log_value,
            "method": self.method,
            "std_error": self.std_error,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "warnings": list(self.warnings),
        }
        if self.metadata:
            out["metadata"] = self.metadata
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ExitProbEstimate":
        return cls(
            value=float(d["value"]),
            log_value=float(d["log_value"]),
            method=d["method"],
            std_error=float(d.get("std_error", 0.0)),
            n_samples=int(d.get("n_samples", 0)),
            seed=d.get("seed"),
            warnings=list(d.get("warnings", [])),
            metadata=dict(d.get("metadata", {})),
        )


def _check_positive(name: str, x: float, *, allow_zero: bool = False) -> float:
    x = float(x)
    ok = x >= 0 if allow_zero else x > 0
    if not ok or not math.isfinite(x):
        raise DomainError(f"{name} must be {'non-negative' if allow_zero else 'positive'} and finite, got {x!r}")
    return x


def exit_ball_exact(d: int, t: float, r: float) -> ExitProbEstimate:
    """``P(|zeta| >= t r)`` for ``zeta ~ N(0, I_d)``."""
    s = _check_positive("t", t, allow_zero=True) * _check_positive("r", r)
    return ExitProbEstimate.from_log(chisq_log_upper_tail(d, s * s), "exact")


def _log_ball_asymptotic(k: int, s: float) -> float:
    # ln of 2^{1-k/2} Gamma(k/2)^{-1} s^{k-2} exp(-s^2/2)
    return (1.0 - 0.5 * k) * math.log(2.0) - log_gamma(0.5 * k) + (k - 2) * math.log(s) - 0.5 * s * s


def exit_ball_asymptotic(d: int, t: float, r: float, *, guard: float = REGIME_GUARD) -> ExitProbEstimate:
    """Leading-order tail of the chi distribution: ``2^{1-d/2} s^{d-2} e^{-s^2/2} / Gamma(d/2)``, ``s = t r``."""
    if int(d) != d or d < 1:
        raise DomainError(f"d must be a positive integer, got {d!r}")
    s = _check_positive("t", t) * _check_positive("r", r)
    warnings = []
    if s < guard:
        warnings.append(f"t*r = {s:.6g} is below the asymptotic regime guard {guard:g}")
    return ExitProbEstimate.from_log(_log_ball_asymptotic(int(d), s), "asymptotic", warnings=warnings)


def ellipsoid_constant(sigma) -> tuple[int, float, list[str]]:
    """Multiplicity ``k`` of the top weight and the constant ``C_k`` for ``sigma_1 = 1`` scaling."""
    body = Ellipsoid(sigma, 1.0)
    s = body.sigma
    k = body.multiplicity
    warnings = []
    ratios = (s[k:] / s[0]) ** 2
    if k < s.size and s[k] >= s[0] * (1.0 - NEAR_TIE_RTOL):
        warnings.append(
            f"sigma_{k + 1} = {s[k]!r} nearly ties sigma_1 = {s[0]!r}; the asymptotic constant jumps with k"
        )
    log_prod = -0.5 * float(np.sum(np.log1p(-ratios)))
    log_c = (1.0 - 0.5 * k) * math.log(2.0) - log_gamma(0.5 * k) + log_prod
    return k, math.exp(log_c), warnings


def exit_ellipsoid_asymptotic(sigma, r: float, t: float, *, guard: float = REGIME_GUARD) -> ExitProbEstimate:
    """Sharp asymptotic of ``P(sum sigma_i^2 zeta_i^2 >= (t r)^2)``.

    With ``k`` the multiplicity of the largest weight ``sigma_1`` and
    ``s = t r / sigma_1`` the distance to the nearest boundary point,

        C_k s^{k-2} exp(-s^2/2),
        C_k = 2^{1-k/2} / Gamma(k/2) * prod_{i>k} (1 - sigma_i^2/sigma_1^2)^{-1/2}.

    For ``sigma_1 = 1`` this is exactly the textbook ellipsoid formula; for
    other ``sigma_1`` the distance ``r / sigma_1`` is used in place of ``r``.
    """
    r = _check_positive("r", r)
    t = _check_positive("t", t)
    k, c_k, warnings = ellipsoid_constant(sigma)
    sigma1 = float(np.asarray(sigma, dtype=float)[0])
    s = t * r / sigma1
    if s < guard:
        warnings.append(f"t*r/sigma_1 = {s:.6g} is below the asymptotic regime guard {guard:g}")
    log_value = math.log(c_k) + (k - 2) * math.log(s) - 0.5 * s * s
    return ExitProbEstimate.from_log(
        log_value, "asymptotic", warnings=warnings, metadata={"k": k, "C_k": c_k}
    )


def _finish_mc(total: float, total_sq: float, n: int, method: str, seed, extra=None) -> ExitProbEstimate:
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0)
    se = math.sqrt(var / (n - 1)) if n > 1 else math.inf
    log_value = math.log(mean) if mean > 0 else -math.inf
    warnings = [] if mean > 0 else ["no exits observed; estimate is 0"]
    return ExitProbEstimate(
        value=mean,
        log_value=log_value,
        method=method,
        std_error=se,
        n_samples=n,
        seed=seed,
        warnings=warnings,
        metadata=extra or {},
    )


def _outside(body: ConvexBody, z: np.ndarray, t: float) -> np.ndarray:
    """Rows of ``z`` outside ``t * body``."""
    if isinstance(body, (Ball, Ellipsoid)):
        return body.gauge(z) >= t
    # one membership call per point instead of a radial bisection
    return ~np.asarray(body.contains(z / t), dtype=bool)


def exit_mc(
    body: ConvexBody,
    t: float,
    n_samples: int,
    stream: RngStream,
    *,
    threads: int | None = None,
    chunk: int = DEFAULT_CHUNK,
) -> ExitProbEstimate:
    """Fraction of standard Gaussian draws outside ``t * body``."""
    t = _check_positive("t", t, allow_zero=True)
    if n_samples < 1000:
        raise DomainError(f"exit_mc needs at least 1000 samples, got {n_samples}")
    d = body.dim

    def run(size: int, sub: RngStream):
        z = sub.rng.standard_normal((size, d))
        out = np.ones(size, dtype=bool) if t == 0 else _outside(body, z, t)
        hits = float(np.count_nonzero(out))
        return hits, hits

    parts = map_chunks(run, n_samples, stream, chunk=chunk, threads=threads)
    total = sum(p[0] for p in parts)
    return _finish_mc(total, total, n_samples, "mc", stream.master_seed)


def _log_sphere_mixture_ratio(s: np.ndarray, mu: float, k: int) -> np.ndarray:
    """``ln E_u[exp(mu u.x - mu^2/2)]`` for ``u`` uniform on the unit sphere of R^k, ``s = |x|``.

    Equals ``-mu^2/2 + ln 0F1(; k/2; (mu s)^2/4)``; ``k = 1`` gives the
    antipodal pair (``cosh``).
    """
    z = mu * s
    nu = 0.5 * k - 1.0
    out = np.empty_like(z)
    small = z < 1e-8
    out[small] = 0.0
    zb = z[~small]
    # 0F1(; nu+1; z^2/4) = Gamma(nu+1) (z/2)^{-nu} I_nu(z); ive removes e^{z}
    out[~small] = log_gamma(nu + 1.0) - nu * np.log(0.5 * zb) + np.log(ive(nu, zb)) + zb
    return out - 0.5 * mu * mu


def exit_is(
    body: ConvexBody,
    t: float,
    n_samples: int,
    stream: RngStream,
    *,
    threads: int | None = None,
    chunk: int = DEFAULT_CHUNK,
) -> ExitProbEstimate:
    """Importance sampling with the mean shifted to ``t`` times the nearest boundary set.

    Antipodal pairs get a 50/50 mixture of the two shifts; when the nearest
    set is a sphere in the leading ``k`` coordinates (balls, tied ellipsoid
    weights), the shift direction is uniform on that sphere and the
    likelihood ratio uses the closed-form sphere average.
    """
    t = _check_positive("t", t)
    nb = body.nearest_boundary()
    if not nb.min_distance > 0:
        raise DomainError("degenerate body: nearest boundary point is at the origin")
    d = body.dim
    mu = t * nb.min_distance
    pts = nb.representative_points

    if isinstance(body, (Ball, Ellipsoid)):
        k = nb.component_dimension + 1
        axes = slice(0, k)

        def draw(size, rng):
            u = rng.standard_normal((size, k))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            z = rng.standard_normal((size, d))
            z[:, axes] += mu * u
            return z

        def log_lr(z):
            s = np.linalg.norm(z[:, axes], axis=1)
            return -_log_sphere_mixture_ratio(s, mu, k)

        proposal = {"type": "sphere", "k": k, "shift": mu}
    else:
        shifts = t * pts

        def draw(size, rng):
            which = rng.integers(0, len(shifts), size=size)
            return rng.standard_normal((size, d)) + shifts[which]

        def log_lr(z):
            expo = z @ shifts.T - 0.5 * np.sum(shifts**2, axis=1)
            return -(logsumexp(expo, axis=1) - math.log(len(shifts)))

        proposal = {"type": "points", "n_points": len(shifts), "shift": mu}

    def run(size: int, sub: RngStream):
        z = draw(size, sub.rng)
        exits = _outside(body, z, t)
        w = np.where(exits, np.exp(log_lr(z)), 0.0)
        return float(np.sum(w)), float(np.sum(w * w))

    parts = map_chunks(run, n_samples, stream, chunk=chunk, threads=threads)
    total = sum(p[0] for p in parts)
    total_sq = sum(p[1] for p in parts)
    return _finish_mc(total, total_sq, n_samples, "is", stream.master_seed, {"proposal": proposal})


def exit_probability(
    body: ConvexBody,
    t: float,
    method: str,
    *,
    n_samples: int = 1_000_000,
    stream: RngStream | None = None,
    threads: int | None = None,
) -> ExitProbEstimate:
    """Dispatch on ``method``; used by the CLI."""
    if method == "exact":
        if not isinstance(body, Ball):
            raise DomainError("exact exit probabilities are available for balls only")
        return exit_ball_exact(body.dim, t, body.r)
    if method == "asymptotic":
        if isinstance(body, Ball):
            return exit_ball_asymptotic(body.dim, t, body.r)
        if isinstance(body, Ellipsoid):
            return exit_ellipsoid_asymptotic(body.sigma, body.r, t)
        raise DomainError("asymptotic exit probabilities need a ball or an ellipsoid")
    if method in ("mc", "is"):
        if stream is None:
            raise DomainError(f"method {method!r} needs a random stream")
        fn = exit_mc if method == "mc" else exit_is
        return fn(body, t, n_samples, stream, threads=threads)
    raise DomainError(f"unknown method {method!r}; expected one of {METHODS}")
