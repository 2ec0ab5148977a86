"""Exponential tilting (conjugate distributions) of centered random vectors.

For a centered law ``F`` with moment generating function ``phi(h)`` the
tilted law is ``F_h(dx) = exp(h.x) F(dx) / phi(h)``, with mean ``m(h)`` and
covariance ``sigma(h)``. :func:`solve_tilt` inverts ``m(h) = v`` by damped
Newton and returns the Legendre rate ``h.v - ln phi(h)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import linprog
from scipy.special import logsumexp

from .errors import ConvergenceError, DomainError, NoSolutionError
from .numerics import RngStream, as_spd, cholesky

__all__ = [
    "TiltableDistribution",
    "GaussianLaw",
    "DiscreteLaw",
    "BoxDensityLaw",
    "TiltSolution",
    "WeightedSample",
    "mgf",
    "tilted_mean",
    "tilted_cov",
    "solve_tilt",
    "sample_tilted",
    "sample_tilted_sum",
    "distribution_from_spec",
]

MAX_NEWTON = 50


def _vec(h, dim: int) -> np.ndarray:
    a = np.atleast_1d(np.asarray(h, dtype=float))
    if a.shape != (dim,):
        raise DomainError(f"expected a vector of length {dim}, got shape {a.shape}")
    return a


class TiltableDistribution:
    """A centered law with a finite moment generating function.

    ``offset`` is the mean removed at construction; every method works on
    the centered variable ``X - offset``.
    """

    kind = "abstract"
    dim: int
    offset: np.ndarray
    mgf_domain: float = math.inf
    support_radius: float = math.inf

    def log_mgf(self, h) -> float:
        raise NotImplementedError

    def mean_cov(self, h) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def interior_contains(self, v) -> bool:
        raise NotImplementedError

    def sample(self, h, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draws from the tilted law ``F_h`` (``h = 0`` gives ``F``)."""
        raise NotImplementedError

    def sample_sum(self, h, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
        """``size`` draws of the sum of ``n`` i.i.d. ``F_h`` variables."""
        out = np.empty((size, self.dim))
        for i in range(size):
            out[i] = self.sample(h, n, rng).sum(axis=0)
        return out

    @property
    def covariance(self) -> np.ndarray:
        return self.mean_cov(np.zeros(self.dim))[1]

    def _check_h(self, h) -> np.ndarray:
        h = _vec(h, self.dim)
        if np.linalg.norm(h) > self.mgf_domain:
            raise DomainError(f"|h| = {np.linalg.norm(h):.6g} exceeds the mgf domain {self.mgf_domain:g}")
        return h


class GaussianLaw(TiltableDistribution):
    kind = "gaussian"

    def __init__(self, mean, cov):
        self.cov = as_spd(cov)
        self.dim = self.cov.shape[0]
        self.offset = _vec(mean, self.dim)
        self._chol = cholesky(self.cov)

    def log_mgf(self, h) -> float:
        h = self._check_h(h)
        return 0.5 * float(h @ self.cov @ h)

    def mean_cov(self, h):
        h = self._check_h(h)
        return self.cov @ h, self.cov.copy()

    def interior_contains(self, v) -> bool:
        return True

    def sample(self, h, size, rng):
        h = self._check_h(h)
        return rng.standard_normal((size, self.dim)) @ self._chol.T + self.cov @ h

    def sample_sum(self, h, n, size, rng):
        h = self._check_h(h)
        return rng.standard_normal((size, self.dim)) @ (math.sqrt(n) * self._chol.T) + n * (self.cov @ h)

    def to_spec(self) -> dict:
        return {"kind": "gaussian", "mean": self.offset.tolist(), "cov": self.cov.tolist()}


class DiscreteLaw(TiltableDistribution):
    """Finitely many atoms; they must span the space so the covariance is SPD."""

    kind = "discrete"

    def __init__(self, points, probs):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        p = np.asarray(probs, dtype=float).ravel()
        if len(p) != len(pts) or len(p) < 2:
            raise DomainError("need at least two atoms with matching probabilities")
        if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-9:
            raise DomainError("atom probabilities must be positive and sum to 1")
        p = p / p.sum()
        self.dim = pts.shape[1]
        self.offset = p @ pts
        self.points = pts - self.offset
        self.probs = p
        self._logp = np.log(p)
        self.support_radius = float(np.max(np.linalg.norm(self.points, axis=1)))
        as_spd(self.mean_cov(np.zeros(self.dim))[1])

    def _tilted_probs(self, h) -> tuple[np.ndarray, float]:
        logits = self._logp + self.points @ h
        lz = float(logsumexp(logits))
        return np.exp(logits - lz), lz

    def log_mgf(self, h) -> float:
        return self._tilted_probs(self._check_h(h))[1]

    def mean_cov(self, h):
        q, _ = self._tilted_probs(self._check_h(h))
        m = q @ self.points
        c = self.points - m
        return m, (c * q[:, None]).T @ c

    def interior_contains(self, v) -> bool:
        v = _vec(v, self.dim)
        if self.dim == 1:
            return bool(self.points.min() < v[0] < self.points.max())
        # maximize eps subject to lam >= eps, sum lam = 1, points' lam = v
        k = len(self.points)
        c = np.zeros(k + 1)
        c[-1] = -1.0
        a_eq = np.zeros((self.dim + 1, k + 1))
        a_eq[: self.dim, :k] = self.points.T
        a_eq[self.dim, :k] = 1.0
        b_eq = np.append(v, 1.0)
        a_ub = np.hstack([-np.eye(k), np.ones((k, 1))])
        res = linprog(c, A_ub=a_ub, b_ub=np.zeros(k), A_eq=a_eq, b_eq=b_eq, bounds=[(None, None)] * (k + 1))
        return bool(res.status == 0 and -res.fun > 1e-12)

    def sample(self, h, size, rng):
        q, _ = self._tilted_probs(self._check_h(h))
        return self.points[rng.choice(len(q), size=size, p=q)]

    def sample_sum(self, h, n, size, rng):
        q, _ = self._tilted_probs(self._check_h(h))
        counts = rng.multinomial(n, q, size=size)
        return counts @ self.points

    def to_spec(self) -> dict:
        pts = self.points + self.offset
        atoms = [[(x[0] if self.dim == 1 else x.tolist()), float(p)] for x, p in zip(pts, self.probs)]
        return {"kind": "discrete", "atoms": atoms}


class BoxDensityLaw(TiltableDistribution):
    """A density on a bounded box, given as a callable or as a table on a regular grid.

    Integrals use composite Gauss-Legendre rules whose cells are refined
    (doubled per axis) until successive mgf values agree to ``tol``. Table
    densities are interpolated linearly, so cells are aligned with the grid.
    """

    kind = "density"
    ORDER = 8
    MAX_NODES = 2_000_000

    def __init__(self, box, density=None, *, table=None, tol: float = 1e-8, density_max: float | None = None):
        b = np.asarray(box, dtype=float)
        if b.ndim == 1:
            b = b[None, :]
        if b.shape[1] != 2 or np.any(b[:, 1] <= b[:, 0]):
            raise DomainError("box must be a list of [low, high] pairs with low < high")
        self.dim = b.shape[0]
        self.tol = tol
        if (density is None) == (table is None):
            raise DomainError("give exactly one of a density callable or a table")
        if table is not None:
            tab = np.asarray(table, dtype=float)
            if tab.ndim != self.dim or np.any(tab < 0):
                raise DomainError("table must be a non-negative array with one axis per box dimension")
            grids = [np.linspace(lo, hi, n) for (lo, hi), n in zip(b, tab.shape)]
            interp = RegularGridInterpolator(grids, tab)
            self._raw = lambda x: interp(x)
            self._base_cells = [n - 1 for n in tab.shape]
            self._raw_max = float(tab.max())
            self._table = tab
        else:
            self._raw = lambda x: np.asarray(density(x), dtype=float)
            self._base_cells = [4] * self.dim
            self._raw_max = density_max
            self._table = None
        self._raw_box = b
        self._rule = self._converged_rule()
        nodes, wts, fvals = self._rule
        z = float(np.sum(wts * fvals))
        if not z > 0:
            raise DomainError("density integrates to zero")
        self._norm = z
        self.offset = (wts * fvals) @ nodes / z
        self.box = b - self.offset[:, None]
        if self._raw_max is None:
            self._raw_max = 1.25 * float(fvals.max())
        self.support_radius = float(np.linalg.norm(np.max(np.abs(self.box), axis=1)))
        as_spd(self.mean_cov(np.zeros(self.dim))[1])

    def _rule_for(self, cells: list[int]):
        x1, w1 = leggauss(self.ORDER)
        axes_x, axes_w = [], []
        for (lo, hi), nc in zip(self._raw_box, cells):
            edges = np.linspace(lo, hi, nc + 1)
            half = 0.5 * np.diff(edges)
            mid = 0.5 * (edges[:-1] + edges[1:])
            axes_x.append((mid[:, None] + half[:, None] * x1[None, :]).ravel())
            axes_w.append((half[:, None] * w1[None, :]).ravel())
        mesh = np.meshgrid(*axes_x, indexing="ij")
        wmesh = np.meshgrid(*axes_w, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=1)
        wts = np.prod(np.stack([w.ravel() for w in wmesh], axis=1), axis=1)
        return nodes, wts, np.maximum(self._raw(nodes), 0.0)

    def _converged_rule(self):
        cells = list(self._base_cells)
        prev = None
        probe = np.ones(self.dim)
        while True:
            nodes, wts, f = self._rule_for(cells)
            z = np.sum(wts * f)
            val = np.sum(wts * f * np.exp(nodes @ probe)) / z
            if prev is not None and abs(val - prev) <= self.tol * abs(val):
                return nodes, wts, f
            if len(nodes) * 2**self.dim > self.MAX_NODES:
                raise ConvergenceError(f"density quadrature did not reach tolerance {self.tol:g}")
            prev = val
            cells = [2 * c for c in cells]

    def density(self, x) -> np.ndarray:
        """Normalized density of the centered variable."""
        x = np.atleast_2d(x) + self.offset
        inside = np.all((x >= self._raw_box[:, 0]) & (x <= self._raw_box[:, 1]), axis=1)
        out = np.zeros(len(x))
        out[inside] = np.maximum(self._raw(x[inside]), 0.0) / self._norm
        return out

    def _weights(self, h):
        nodes, wts, f = self._rule
        c = nodes - self.offset
        with np.errstate(divide="ignore"):
            logs = np.log(wts * f / self._norm) + c @ h
        lz = float(logsumexp(logs))
        return c, np.exp(logs - lz), lz

    def log_mgf(self, h) -> float:
        return self._weights(self._check_h(h))[2]

    def mean_cov(self, h):
        c, q, _ = self._weights(self._check_h(h))
        m = q @ c
        dc = c - m
        return m, (dc * q[:, None]).T @ dc

    def interior_contains(self, v) -> bool:
        v = _vec(v, self.dim)
        return bool(np.all((self.box[:, 0] < v) & (v < self.box[:, 1])))

    def sample(self, h, size, rng):
        # rejection from the uniform law on the box; envelope raw_max * exp(max_box h.x)
        h = self._check_h(h)
        top = float(np.sum(np.maximum(h * self.box[:, 0], h * self.box[:, 1])))
        out = np.empty((0, self.dim))
        while len(out) < size:
            want = max(2 * (size - len(out)), 1024)
            x = rng.uniform(self.box[:, 0], self.box[:, 1], size=(want, self.dim))
            f = np.maximum(self._raw(x + self.offset), 0.0)
            accept = rng.uniform(size=want) * self._raw_max * math.exp(top) < f * np.exp(x @ h)
            out = np.vstack([out, x[accept]])
        return out[:size]

    def to_spec(self) -> dict:
        if self._table is None:
            raise DomainError("callable densities have no serialized form")
        return {"kind": "density", "box": self._raw_box.tolist(), "table": self._table.tolist()}


def distribution_from_spec(spec: dict) -> TiltableDistribution:
    """``{"kind": "gaussian", "mean", "cov"}``, ``{"kind": "discrete", "atoms": [[x, p], ...]}``
    or ``{"kind": "density", "box": [[lo, hi], ...], "table": nested list}``."""
    kind = spec.get("kind")
    try:
        if kind == "gaussian":
            cov = np.atleast_2d(np.asarray(spec["cov"], dtype=float))
            return GaussianLaw(spec.get("mean", np.zeros(cov.shape[0])), cov)
        if kind == "discrete":
            atoms = spec["atoms"]
            return DiscreteLaw([a[0] for a in atoms], [a[1] for a in atoms])
        if kind == "density":
            return BoxDensityLaw(spec["box"], table=spec["table"], tol=float(spec.get("tol", 1e-8)))
    except KeyError as exc:
        raise DomainError(f"{kind} spec is missing field {exc.args[0]!r}") from None
    raise DomainError(f"unknown distribution kind {kind!r}")


def mgf(dist: TiltableDistribution, h) -> float:
    return math.exp(dist.log_mgf(h))


def tilted_mean(dist: TiltableDistribution, h) -> np.ndarray:
    return dist.mean_cov(h)[0]


def tilted_cov(dist: TiltableDistribution, h) -> np.ndarray:
    return dist.mean_cov(h)[1]


@dataclass
class TiltSolution:
    v: np.ndarray
    h: np.ndarray
    phi: float
    log_phi: float
    tilted_cov: np.ndarray
    rate: float
    iterations: int
    residual: float
    trace: list = field(default_factory=list, repr=False)

    @property
    def lambda_value(self) -> float:
        """``-(h, v) + ln phi(h)``: the negated rate."""
        return -self.rate

    def to_dict(self) -> dict:
        return {
            "v": self.v.tolist(),
            "h": self.h.tolist(),
            "phi": self.phi,
            "log_phi": self.log_phi,
            "tilted_cov": self.tilted_cov.tolist(),
            "rate": self.rate,
            "lambda": self.lambda_value,
            "iterations": self.iterations,
            "residual": self.residual,
        }


def solve_tilt(dist: TiltableDistribution, v, *, max_iter: int = MAX_NEWTON) -> TiltSolution:
    """Solve ``m(h) = v`` by damped Newton started at ``h = v``."""
    v = _vec(v, dist.dim)
    if not dist.interior_contains(v):
        raise NoSolutionError(f"v = {v.tolist()} is not strictly inside the support hull")
    tol = 1e-10 * (1.0 + np.linalg.norm(v))
    h = v.copy()
    m, cov = dist.mean_cov(h)
    res = np.linalg.norm(v - m)
    trace = [(h.copy(), res)]
    it = 0
    while res > tol:
        if it >= max_iter:
            raise ConvergenceError(f"Newton did not converge in {max_iter} iterations (residual {res:.3e})", trace)
        step = np.linalg.solve(cov, v - m)
        lam = 1.0
        while True:
            cand = h + lam * step
            m_c, cov_c = dist.mean_cov(cand)
            res_c = np.linalg.norm(v - m_c)
            if res_c < res or lam < 1e-12:
                break
            lam *= 0.5
        if res_c >= res:
            raise ConvergenceError("damped Newton step failed to reduce the residual", trace)
        h, m, cov, res = cand, m_c, cov_c, res_c
        it += 1
        trace.append((h.copy(), res))
    log_phi = dist.log_mgf(h)
    return TiltSolution(
        v=v,
        h=h,
        phi=math.exp(log_phi),
        log_phi=log_phi,
        tilted_cov=as_spd(cov),
        rate=float(h @ v) - log_phi,
        iterations=it,
        residual=float(res),
        trace=trace,
    )


@dataclass
class WeightedSample:
    """Draws from ``F_h`` with log likelihood ratios ``ln dF/dF_h = ln phi(h) - h.x``."""

    points: np.ndarray
    log_weights: np.ndarray

    def estimate(self, g) -> tuple[float, float]:
        """Unbiased estimate of ``E_F[g(X)]`` and its standard error."""
        vals = np.exp(self.log_weights) * np.asarray(g(self.points), dtype=float)
        n = len(vals)
        return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


def sample_tilted(dist: TiltableDistribution, h, n: int, stream: RngStream) -> WeightedSample:
    h = _vec(h, dist.dim)
    x = dist.sample(h, n, stream.rng)
    return WeightedSample(x, dist.log_mgf(h) - x @ h)


def sample_tilted_sum(dist: TiltableDistribution, h, n: int, size: int, rng: np.random.Generator):
    """Sums of ``n`` tilted draws and their log likelihood ratios ``n ln phi(h) - h.S``."""
    h = _vec(h, dist.dim)
    s = dist.sample_sum(h, n, size, rng)
    return s, n * dist.log_mgf(h) - s @ h
