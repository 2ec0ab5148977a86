"""Parametric families: densities, samplers, scores, Fisher information,
Hellinger distances, maximum likelihood, and numeric checks of the local
smoothness conditions (Hellinger expansion, root-density differentiability,
score moments, Fisher continuity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.laguerre import laggauss
from scipy import integrate

from .errors import ConvergenceError, DomainError
from .numerics import as_spd, cholesky, spd_inverse

__all__ = [
    "ParametricFamily",
    "GaussianLocation",
    "GaussianMeanVector",
    "Bernoulli",
    "ExponentialRate",
    "CustomFamily",
    "MLEResult",
    "EstimatorSpec",
    "A2Report",
    "builtin",
    "family_from_spec",
    "hellinger",
    "check_a2",
    "mle",
]

CLIP_MARGIN = 1e-6


@dataclass
class MLEResult:
    theta: np.ndarray | float
    clipped: bool = False
    iterations: int = 0


class ParametricFamily:
    """Base class. Parameters are floats for ``param_dim == 1``, arrays otherwise.

    Subclasses override the analytic pieces they know; everything else
    falls back to numerics built on :meth:`logpdf` and :meth:`expect`.
    """

    name = "family"
    param_dim = 1
    lam = 1.0
    measure = "lebesgue"
    theta_low: np.ndarray
    theta_high: np.ndarray

    # --- parameter handling
    def _theta(self, theta) -> np.ndarray:
        t = np.atleast_1d(np.asarray(theta, dtype=float))
        if t.shape != (self.param_dim,):
            raise DomainError(f"{self.name}: parameter must have dimension {self.param_dim}, got shape {t.shape}")
        if not self.in_domain(t):
            raise DomainError(f"{self.name}: parameter {t.tolist()} is outside the domain")
        return t

    def in_domain(self, theta) -> bool:
        t = np.atleast_1d(np.asarray(theta, dtype=float))
        return bool(np.all(t > self.theta_low) and np.all(t < self.theta_high))

    def _out(self, t: np.ndarray):
        return float(t[0]) if self.param_dim == 1 else t

    # --- to be provided by subclasses
    def logpdf(self, x, theta) -> np.ndarray:
        raise NotImplementedError

    def sample(self, theta, size, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def expect(self, fn: Callable[[np.ndarray], np.ndarray], theta) -> np.ndarray:
        """Deterministic ``E_theta[fn(X)]`` by a family-specific quadrature."""
        raise NotImplementedError

    def mean(self, theta):
        t = self._theta(theta)
        return self._out(np.atleast_1d(self.expect(lambda x: x, t)))

    def variance(self, theta):
        m = np.atleast_1d(self.mean(theta))
        v = self.expect(lambda x: (np.reshape(x, (len(x), -1)) - m) ** 2, theta)
        return self._out(np.atleast_1d(v))

    # --- generic machinery
    def pdf(self, x, theta) -> np.ndarray:
        return np.exp(self.logpdf(x, theta))

    def score(self, x, theta) -> np.ndarray:
        """Score vectors, shape ``(n, d)``; central differences of ``ln f``."""
        t = self._theta(theta)
        x = np.asarray(x)
        out = np.empty((len(x), self.param_dim))
        for i in range(self.param_dim):
            step = 1e-6 * (1.0 + abs(t[i]))
            e = np.zeros(self.param_dim)
            e[i] = step
            out[:, i] = (self.logpdf(x, t + e) - self.logpdf(x, t - e)) / (2 * step)
        return out

    def fisher(self, theta) -> np.ndarray:
        t = self._theta(theta)

        def outer(x):
            s = self.score(x, t)
            return (s[:, :, None] * s[:, None, :]).reshape(len(s), -1)

        info = np.asarray(self.expect(outer, t)).reshape(self.param_dim, self.param_dim)
        return as_spd(0.5 * (info + info.T))

    def hellinger2(self, theta1, theta2) -> float:
        """Squared Hellinger distance ``int (f1^{1/2} - f2^{1/2})^2 dnu``."""
        t1, t2 = self._theta(theta1), self._theta(theta2)

        def integrand(x):
            with np.errstate(divide="ignore", invalid="ignore"):
                half = 0.5 * (self.logpdf(x, t2) - self.logpdf(x, t1))
                return np.where(np.isfinite(half), np.expm1(half) ** 2, 0.0)

        return float(self.expect(integrand, t1)) + self.singular_mass(t1, t2)

    def singular_mass(self, theta, theta_u) -> float:
        """Mass of ``P_{theta_u}`` on the set where ``f(., theta) = 0``."""

        def mask(x):
            with np.errstate(divide="ignore"):
                return (~np.isfinite(self.logpdf(x, theta))).astype(float)

        return float(self.expect(mask, theta_u))

    def sample_mean(self, theta, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
        """``size`` draws of the mean of ``n`` observations, shape ``(size, d_x)``."""
        out = []
        for _ in range(size):
            x = np.asarray(self.sample(theta, n, rng), dtype=float)
            out.append(np.reshape(x, (n, -1)).mean(axis=0))
        return np.asarray(out)

    def mle_from_mean(self, xbar) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized MLE as a function of the sample mean (exponential families)."""
        raise DomainError(f"{self.name}: the MLE is not a function of the sample mean")

    def mle(self, samples, *, theta0=None, tol: float = 1e-10, max_iter: int = 100) -> MLEResult:
        """Fisher scoring on the score equation."""
        x = np.asarray(samples)
        if len(x) == 0:
            raise DomainError("mle needs at least one observation")
        t = self._theta(theta0 if theta0 is not None else 0.5 * (np.clip(self.theta_low, -1e6, None) + np.clip(self.theta_high, None, 1e6)))
        trace = []
        for it in range(1, max_iter + 1):
            grad = self.score(x, t).mean(axis=0)
            step = spd_inverse(self.fisher(t)) @ grad
            while not self.in_domain(t + step):
                step *= 0.5
                if np.linalg.norm(step) < 1e-300:
                    break
            t = t + step
            trace.append((t.copy(), float(np.linalg.norm(grad))))
            if np.linalg.norm(step) <= tol * (1.0 + np.linalg.norm(t)):
                return MLEResult(self._out(t), False, it)
        raise ConvergenceError(f"{self.name}: MLE did not converge in {max_iter} iterations", trace)


def _clip_open(values: np.ndarray, low: float, high: float):
    lo = low + CLIP_MARGIN if math.isfinite(low) else -np.inf
    hi = high - CLIP_MARGIN if math.isfinite(high) else np.inf
    clipped = (values < lo) | (values > hi)
    return np.clip(values, lo, hi), clipped


class GaussianLocation(ParametricFamily):
    name = "gaussian_location"
    GH_ORDER = 80

    def __init__(self, sigma2: float = 1.0):
        if not sigma2 > 0 or not math.isfinite(sigma2):
            raise DomainError(f"sigma2 must be positive, got {sigma2!r}")
        self.sigma2 = float(sigma2)
        self.sigma = math.sqrt(self.sigma2)
        self.theta_low = np.array([-np.inf])
        self.theta_high = np.array([np.inf])
        self._gh = hermegauss(self.GH_ORDER)

    def spec(self) -> dict:
        return {"family": self.name, "sigma2": self.sigma2}

    def logpdf(self, x, theta):
        t = float(np.atleast_1d(theta)[0])
        x = np.asarray(x, dtype=float).reshape(-1)
        return -0.5 * (x - t) ** 2 / self.sigma2 - 0.5 * math.log(2 * math.pi * self.sigma2)

    def sample(self, theta, size, rng):
        return self._theta(theta)[0] + self.sigma * rng.standard_normal(size)

    def expect(self, fn, theta):
        t = self._theta(theta)[0]
        z, w = self._gh
        vals = np.asarray(fn(t + self.sigma * z), dtype=float)
        return np.tensordot(w, vals, axes=(0, 0)) / math.sqrt(2 * math.pi)

    def mean(self, theta):
        return float(self._theta(theta)[0])

    def variance(self, theta):
        self._theta(theta)
        return self.sigma2

    def score(self, x, theta):
        t = self._theta(theta)[0]
        return ((np.asarray(x, dtype=float).reshape(-1) - t) / self.sigma2)[:, None]

    def fisher(self, theta):
        self._theta(theta)
        return np.array([[1.0 / self.sigma2]])

    def hellinger2(self, theta1, theta2):
        u = self._theta(theta2)[0] - self._theta(theta1)[0]
        return -2.0 * math.expm1(-u * u / (8.0 * self.sigma2))

    def singular_mass(self, theta, theta_u):
        return 0.0

    def sample_mean(self, theta, n, size, rng):
        return (self._theta(theta)[0] + self.sigma / math.sqrt(n) * rng.standard_normal(size))[:, None]

    def mle_from_mean(self, xbar):
        xbar = np.asarray(xbar, dtype=float).reshape(-1)
        return xbar[:, None], np.zeros(len(xbar), dtype=bool)

    def mle(self, samples, **kw):
        x = np.asarray(samples, dtype=float)
        if x.size == 0:
            raise DomainError("mle needs at least one observation")
        return MLEResult(float(np.mean(x)))


class GaussianMeanVector(ParametricFamily):
    name = "gaussian_mean_vector"

    def __init__(self, cov=None, d: int | None = None):
        if cov is None:
            if d is None:
                raise DomainError("give cov or d")
            cov = np.eye(int(d))
        self.cov = as_spd(cov)
        self.param_dim = self.cov.shape[0]
        if d is not None and int(d) != self.param_dim:
            raise DomainError(f"d = {d} does not match the covariance dimension {self.param_dim}")
        self._chol = cholesky(self.cov)
        self._prec = spd_inverse(self.cov)
        self._logdet = 2.0 * float(np.sum(np.log(np.diag(self._chol))))
        self.theta_low = np.full(self.param_dim, -np.inf)
        self.theta_high = np.full(self.param_dim, np.inf)
        order = max(6, min(60, int(2e5 ** (1.0 / self.param_dim))))
        self._gh = hermegauss(order)

    def spec(self) -> dict:
        return {"family": self.name, "cov": self.cov.tolist()}

    def logpdf(self, x, theta):
        t = np.atleast_1d(np.asarray(theta, dtype=float))
        c = np.atleast_2d(np.asarray(x, dtype=float)) - t
        q = np.einsum("ni,ij,nj->n", c, self._prec, c)
        return -0.5 * q - 0.5 * self._logdet - 0.5 * self.param_dim * math.log(2 * math.pi)

    def sample(self, theta, size, rng):
        return self._theta(theta) + rng.standard_normal((size, self.param_dim)) @ self._chol.T

    def expect(self, fn, theta):
        t = self._theta(theta)
        z1, w1 = self._gh
        grids = np.meshgrid(*([z1] * self.param_dim), indexing="ij")
        z = np.stack([g.ravel() for g in grids], axis=1)
        wg = np.meshgrid(*([w1] * self.param_dim), indexing="ij")
        w = np.prod(np.stack([g.ravel() for g in wg], axis=1), axis=1) / (2 * math.pi) ** (0.5 * self.param_dim)
        vals = np.asarray(fn(t + z @ self._chol.T), dtype=float)
        return np.tensordot(w, vals, axes=(0, 0))

    def mean(self, theta):
        return self._theta(theta)

    def variance(self, theta):
        self._theta(theta)
        return np.diag(self.cov).copy()

    def score(self, x, theta):
        t = self._theta(theta)
        return (np.atleast_2d(np.asarray(x, dtype=float)) - t) @ self._prec

    def fisher(self, theta):
        self._theta(theta)
        return self._prec.copy()

    def hellinger2(self, theta1, theta2):
        u = self._theta(theta2) - self._theta(theta1)
        return -2.0 * math.expm1(-float(u @ self._prec @ u) / 8.0)

    def singular_mass(self, theta, theta_u):
        return 0.0

    def sample_mean(self, theta, n, size, rng):
        return self._theta(theta) + rng.standard_normal((size, self.param_dim)) @ (self._chol.T / math.sqrt(n))

    def mle_from_mean(self, xbar):
        xbar = np.atleast_2d(np.asarray(xbar, dtype=float))
        return xbar, np.zeros(len(xbar), dtype=bool)

    def mle(self, samples, **kw):
        x = np.atleast_2d(np.asarray(samples, dtype=float))
        if x.size == 0:
            raise DomainError("mle needs at least one observation")
        return MLEResult(x.mean(axis=0))


class Bernoulli(ParametricFamily):
    name = "bernoulli"
    measure = "counting"

    def __init__(self):
        self.theta_low = np.array([0.0])
        self.theta_high = np.array([1.0])

    def spec(self) -> dict:
        return {"family": self.name}

    def logpdf(self, x, theta):
        p = float(np.atleast_1d(theta)[0])
        x = np.asarray(x, dtype=float).reshape(-1)
        with np.errstate(divide="ignore"):
            return np.where(x == 1, math.log(p) if p > 0 else -np.inf, math.log1p(-p) if p < 1 else -np.inf)

    def sample(self, theta, size, rng):
        return (rng.uniform(size=size) < self._theta(theta)[0]).astype(float)

    def expect(self, fn, theta):
        p = self._theta(theta)[0]
        vals = np.asarray(fn(np.array([0.0, 1.0])), dtype=float)
        return (1.0 - p) * vals[0] + p * vals[1]

    def mean(self, theta):
        return float(self._theta(theta)[0])

    def variance(self, theta):
        p = self._theta(theta)[0]
        return p * (1.0 - p)

    def score(self, x, theta):
        p = self._theta(theta)[0]
        return ((np.asarray(x, dtype=float).reshape(-1) - p) / (p * (1.0 - p)))[:, None]

    def fisher(self, theta):
        p = self._theta(theta)[0]
        return np.array([[1.0 / (p * (1.0 - p))]])

    def hellinger2(self, theta1, theta2):
        p1, p2 = self._theta(theta1)[0], self._theta(theta2)[0]
        q1, q2 = 1.0 - p1, 1.0 - p2
        # differences of square roots written to avoid cancellation
        a = (p1 - p2) / (math.sqrt(p1) + math.sqrt(p2))
        b = (q1 - q2) / (math.sqrt(q1) + math.sqrt(q2))
        return a * a + b * b

    def singular_mass(self, theta, theta_u):
        return 0.0

    def sample_mean(self, theta, n, size, rng):
        return (rng.binomial(n, self._theta(theta)[0], size=size) / n)[:, None]

    def mle_from_mean(self, xbar):
        est, clipped = _clip_open(np.asarray(xbar, dtype=float).reshape(-1), 0.0, 1.0)
        return est[:, None], clipped

    def mle(self, samples, **kw):
        x = np.asarray(samples, dtype=float).reshape(-1)
        if x.size == 0:
            raise DomainError("mle needs at least one observation")
        if np.any((x != 0) & (x != 1)):
            raise DomainError("bernoulli observations must be 0 or 1")
        est, clipped = self.mle_from_mean([x.mean()])
        return MLEResult(float(est[0, 0]), bool(clipped[0]))


class ExponentialRate(ParametricFamily):
    name = "exponential_rate"
    LAGUERRE_ORDER = 120

    def __init__(self):
        self.theta_low = np.array([0.0])
        self.theta_high = np.array([np.inf])
        self._gl = laggauss(self.LAGUERRE_ORDER)

    def spec(self) -> dict:
        return {"family": self.name}

    def logpdf(self, x, theta):
        t = float(np.atleast_1d(theta)[0])
        x = np.asarray(x, dtype=float).reshape(-1)
        with np.errstate(divide="ignore"):
            return np.where(x >= 0, math.log(t) - t * x, -np.inf)

    def sample(self, theta, size, rng):
        return rng.exponential(1.0 / self._theta(theta)[0], size=size)

    def expect(self, fn, theta):
        t = self._theta(theta)[0]
        y, w = self._gl
        vals = np.asarray(fn(y / t), dtype=float)
        return np.tensordot(w, vals, axes=(0, 0))

    def mean(self, theta):
        return 1.0 / self._theta(theta)[0]

    def variance(self, theta):
        return 1.0 / self._theta(theta)[0] ** 2

    def score(self, x, theta):
        t = self._theta(theta)[0]
        return (1.0 / t - np.asarray(x, dtype=float).reshape(-1))[:, None]

    def fisher(self, theta):
        return np.array([[1.0 / self._theta(theta)[0] ** 2]])

    def hellinger2(self, theta1, theta2):
        a, b = self._theta(theta1)[0], self._theta(theta2)[0]
        # 2 - 4 sqrt(ab)/(a+b) == 2 (sqrt(a) - sqrt(b))^2 / (a + b)
        diff = (a - b) / (math.sqrt(a) + math.sqrt(b))
        return 2.0 * diff * diff / (a + b)

    def singular_mass(self, theta, theta_u):
        return 0.0

    def sample_mean(self, theta, n, size, rng):
        return (rng.gamma(n, 1.0 / (n * self._theta(theta)[0]), size=size))[:, None]

    def mle_from_mean(self, xbar):
        xbar = np.asarray(xbar, dtype=float).reshape(-1)
        with np.errstate(divide="ignore"):
            est, clipped = _clip_open(1.0 / xbar, 0.0, np.inf)
        return est[:, None], clipped

    def mle(self, samples, **kw):
        x = np.asarray(samples, dtype=float).reshape(-1)
        if x.size == 0:
            raise DomainError("mle needs at least one observation")
        est, clipped = self.mle_from_mean([x.mean()])
        return MLEResult(float(est[0, 0]), bool(clipped[0]))


class CustomFamily(ParametricFamily):
    """A user-defined family with a one-dimensional sample space.

    ``logpdf(x, theta)`` must be vectorized in ``x``; ``sampler(theta, size,
    rng)`` draws observations. Expectations use adaptive quadrature over
    ``support`` (or exact sums over ``atoms`` for counting measure). The
    smoothness exponent ``lam`` has no default and must be declared.
    """

    name = "custom"

    def __init__(
        self,
        logpdf: Callable,
        sampler: Callable,
        *,
        lam: float,
        param_dim: int = 1,
        theta_low=None,
        theta_high=None,
        support: tuple[float, float] = (-np.inf, np.inf),
        atoms=None,
        name: str = "custom",
    ):
        if not 0 < lam <= 1:
            raise DomainError(f"lam must lie in (0, 1], got {lam!r}")
        self._logpdf = logpdf
        self._sampler = sampler
        self.lam = float(lam)
        self.param_dim = int(param_dim)
        self.theta_low = np.full(self.param_dim, -np.inf) if theta_low is None else np.atleast_1d(np.asarray(theta_low, float))
        self.theta_high = np.full(self.param_dim, np.inf) if theta_high is None else np.atleast_1d(np.asarray(theta_high, float))
        self.support = support
        self.atoms = None if atoms is None else np.asarray(atoms, dtype=float)
        self.measure = "counting" if atoms is not None else "lebesgue"
        self.name = name

    def logpdf(self, x, theta):
        t = np.atleast_1d(np.asarray(theta, dtype=float))
        return np.asarray(self._logpdf(np.asarray(x, dtype=float).reshape(-1), self._out(t)), dtype=float)

    def sample(self, theta, size, rng):
        return np.asarray(self._sampler(self._out(self._theta(theta)), size, rng))

    def expect(self, fn, theta):
        t = self._theta(theta)
        if self.atoms is not None:
            p = np.exp(self.logpdf(self.atoms, t))
            return np.tensordot(p, np.asarray(fn(self.atoms), dtype=float), axes=(0, 0))
        probe = np.atleast_1d(np.asarray(fn(np.array([0.5 * (max(self.support[0], -1.0) + min(self.support[1], 1.0))])), float))
        shape = probe.shape[1:]
        out = np.empty(int(np.prod(shape)) if shape else 1)
        for i in range(len(out)):

            def integrand(x, i=i):
                fx = np.asarray(fn(np.array([x])), dtype=float).reshape(-1)
                with np.errstate(divide="ignore"):
                    dens = math.exp(self.logpdf([x], t)[0])
                return fx[i] * dens if dens > 0 else 0.0

            val, err = integrate.quad(integrand, *self.support, epsabs=1e-13, epsrel=1e-10, limit=400)
            out[i] = val
        return out.reshape(shape) if shape else out[0]


# --- registry ----------------------------------------------------------------------

_BUILTINS = {
    "gaussian_location": GaussianLocation,
    "gaussian_mean_vector": GaussianMeanVector,
    "bernoulli": Bernoulli,
    "exponential_rate": ExponentialRate,
}


def builtin(name: str, **params) -> ParametricFamily:
    try:
        cls = _BUILTINS[name]
    except KeyError:
        raise DomainError(f"unknown family {name!r}; built-ins are {sorted(_BUILTINS)}") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise DomainError(f"bad parameters for {name}: {exc}") from None


def family_from_spec(spec: dict) -> ParametricFamily:
    spec = dict(spec)
    name = spec.pop("family", None)
    if name is None:
        raise DomainError("family spec needs a 'family' field")
    return builtin(name, **spec)


def hellinger(family: ParametricFamily, theta1, theta2) -> float:
    return math.sqrt(max(family.hellinger2(theta1, theta2), 0.0))


def mle(family: ParametricFamily, samples) -> MLEResult:
    return family.mle(samples)


@dataclass
class EstimatorSpec:
    """``sample_mean``, ``mle`` or ``plugin`` (a function of the full sample)."""

    kind: str = "sample_mean"
    fn: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("sample_mean", "mle", "plugin"):
            raise DomainError(f"unknown estimator kind {self.kind!r}")
        if self.kind == "plugin" and self.fn is None:
            raise DomainError("plugin estimators need a function")

    @property
    def linear(self) -> bool:
        return self.kind == "sample_mean"

    def from_mean(self, family: ParametricFamily, xbar) -> tuple[np.ndarray, np.ndarray]:
        """Estimates from sample means, shape ``(m, d)``, plus clipping flags."""
        xbar = np.asarray(xbar, dtype=float)
        if self.kind == "sample_mean":
            xbar = xbar.reshape(len(xbar), -1)
            return xbar, np.zeros(len(xbar), dtype=bool)
        if self.kind == "mle":
            return family.mle_from_mean(xbar)
        raise DomainError("plugin estimators need the full sample")

    def from_samples(self, family: ParametricFamily, samples) -> np.ndarray:
        if self.kind == "plugin":
            return np.atleast_1d(np.asarray(self.fn(samples), dtype=float))
        if self.kind == "sample_mean":
            return np.atleast_1d(np.mean(np.asarray(samples, dtype=float), axis=0))
        return np.atleast_1d(family.mle(samples).theta)


# --- smoothness checks ----------------------------------------------------------------


@dataclass
class A2Report:
    theta0: list
    lam: float
    u_norms: list
    a1_pass: bool
    constants: dict
    residuals: dict
    passes: dict
    singular_mass: float
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.a1_pass and all(self.passes.values())

    def to_dict(self) -> dict:
        return {
            "theta0": self.theta0,
            "lambda": self.lam,
            "u_norms": self.u_norms,
            "a1": "pass" if self.a1_pass else "fail",
            "constants": self.constants,
            "residuals": self.residuals,
            "pass": {k: ("pass" if v else "fail") for k, v in self.passes.items()},
            "singular_mass_max": self.singular_mass,
            "all_pass": self.passed,
            "notes": self.notes,
        }


def _u_vectors(family: ParametricFamily, u_grid) -> np.ndarray:
    u = np.asarray(u_grid, dtype=float)
    if u.ndim == 1:
        direction = np.ones(family.param_dim) / math.sqrt(family.param_dim)
        return u[:, None] * direction
    if u.shape[1] != family.param_dim:
        raise DomainError("u_grid rows must match the parameter dimension")
    return u


def _no_blowup(u_norms: np.ndarray, q: np.ndarray, floor: float = 1e-6) -> bool:
    """Normalized residuals at the small-|u| half stay within 10x of the large-|u| half."""
    if not np.all(np.isfinite(q)):
        return False
    order = np.argsort(u_norms)
    half = max(1, len(order) // 2)
    small, large = q[order[:half]], q[order[half:]] if len(order) > 1 else q
    return bool(small.max() <= 10.0 * max(large.max(), floor))


def check_a2(family: ParametricFamily, theta0, u_grid) -> A2Report:
    """Fit the constants of the four local smoothness inequalities on ``theta0 + u``.

    Residuals are divided by ``|u|^{2+lam}`` (``|u|^lam`` for Fisher
    continuity); each constant is the maximum of that ratio and an
    inequality passes when the ratio is finite and does not blow up as
    ``|u| -> 0``.
    """
    t0 = family._theta(theta0)
    us = _u_vectors(family, u_grid)
    norms = np.linalg.norm(us, axis=1)
    if np.any(norms == 0):
        raise DomainError("u_grid must not contain 0")
    for u in us:
        if not family.in_domain(t0 + u):
            raise DomainError(f"theta0 + u = {(t0 + u).tolist()} leaves the parameter domain")
    lam = family.lam
    info0 = family.fisher(t0)
    notes = []

    a1 = True
    for u in us:
        try:
            as_spd(family.fisher(t0 + u))
        except DomainError:
            a1 = False

    # Hellinger expansion
    r22 = np.array([abs(4.0 * family.hellinger2(t0, t0 + u) - float(u @ info0 @ u)) for u in us])
    q22 = r22 / norms ** (2 + lam)

    # root-density differentiability and singular part
    r21 = np.empty(len(us))
    sing = np.empty(len(us))
    for i, u in enumerate(us):

        def sq(x, u=u):
            with np.errstate(divide="ignore", invalid="ignore"):
                g = np.expm1(0.5 * (family.logpdf(x, t0 + u) - family.logpdf(x, t0)))
                lin = 0.5 * family.score(x, t0) @ u
                return np.where(np.isfinite(g), (g - lin) ** 2, 0.0)

        r21[i] = float(family.expect(sq, t0))
        sing[i] = family.singular_mass(t0, t0 + u)
    q21 = (r21 + sing) / norms ** (2 + lam)

    # score moment of order 2 + lam at theta0 and along the grid
    def moment(theta):
        return float(family.expect(lambda x: np.linalg.norm(family.score(x, theta), axis=1) ** (2 + lam), theta))

    m23 = np.array([moment(t0)] + [moment(t0 + u) for u in us])

    # Fisher continuity: largest eigenvalue of I(theta0) - I(theta0 + u)
    r24 = np.array([max(float(np.linalg.eigvalsh(info0 - family.fisher(t0 + u)).max()), 0.0) for u in us])
    q24 = r24 / norms**lam

    constants = {
        "root_density": float(q21.max()),
        "hellinger": float(q22.max()),
        "score_moment": float(m23.max()),
        "fisher_continuity": float(q24.max()),
    }
    passes = {
        "root_density": _no_blowup(norms, q21),
        "hellinger": _no_blowup(norms, q22),
        "score_moment": bool(np.all(np.isfinite(m23))),
        "fisher_continuity": bool(np.all(np.isfinite(q24))),
    }
    residuals = {
        "root_density": r21.tolist(),
        "hellinger": r22.tolist(),
        "score_moment": m23.tolist(),
        "fisher_continuity": r24.tolist(),
    }
    if family.param_dim == 1:
        notes.append("in one dimension Fisher continuity follows from the Hellinger expansion")
    return A2Report(
        theta0=t0.tolist(),
        lam=lam,
        u_norms=norms.tolist(),
        a1_pass=a1,
        constants=constants,
        residuals=residuals,
        passes=passes,
        singular_mass=float(sing.max()),
        notes=notes,
    )
