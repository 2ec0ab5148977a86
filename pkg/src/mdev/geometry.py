"""Central-symmetric convex deviation sets.

Three kinds are supported: balls, axis-aligned ellipsoids
``{x : sum(sigma_i**2 * x_i**2) < r**2}`` and generic bodies given by a
membership oracle plus a support-function oracle. All bodies are open
(interior convention), contain the origin and are immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .errors import DimensionError, DomainError

__all__ = [
    "ConvexBody",
    "Ball",
    "Ellipsoid",
    "GenericBody",
    "BoundaryPointSet",
    "AssumptionReport",
    "body_from_spec",
    "validate_b_assumptions",
]

MULTIPLICITY_RTOL = 1e-9


@dataclass(frozen=True)
class BoundaryPointSet:
    """Points of the boundary closest to the origin."""

    min_distance: float
    representative_points: np.ndarray
    component_dimension: int

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.representative_points, dtype=float))
        object.__setattr__(self, "representative_points", pts)


class ConvexBody:
    """Common interface; subclasses provide ``gauge`` and friends."""

    kind: str = "abstract"
    dim: int

    def _check_points(self, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float)
        if pts.shape[-1:] != (self.dim,):
            raise DimensionError(
                f"point dimension {pts.shape[-1] if pts.ndim else 0} does not match body dimension {self.dim}"
            )
        return pts

    def gauge(self, x) -> np.ndarray:
        """Minkowski functional: ``x`` lies inside iff ``gauge(x) < 1``."""
        raise NotImplementedError

    def contains(self, x):
        """Membership of one point (returns bool) or of each row of an array."""
        pts = self._check_points(x)
        inside = np.asarray(self.gauge(pts)) < 1.0
        return bool(inside) if pts.ndim == 1 else inside

    def scale(self, t: float) -> "ConvexBody":
        raise NotImplementedError

    def radial_distance(self, u) -> float:
        """Distance from the origin to the boundary along direction ``u``."""
        u = self._check_points(u)
        u = u / np.linalg.norm(u)
        return float(1.0 / self.gauge(u))

    def nearest_boundary(self) -> BoundaryPointSet:
        raise NotImplementedError

    def extent(self) -> float:
        """An upper bound on ``|x|`` over the body."""
        raise NotImplementedError

    def to_spec(self) -> dict:
        raise NotImplementedError


class Ball(ConvexBody):
    kind = "ball"

    def __init__(self, dim: int, r: float):
        if int(dim) != dim or dim < 1:
            raise DomainError(f"dim must be a positive integer, got {dim!r}")
        if not r > 0 or not math.isfinite(r):
            raise DomainError(f"ball radius must be positive and finite, got {r!r}")
        self.dim = int(dim)
        self.r = float(r)

    def __repr__(self):
        return f"Ball(dim={self.dim}, r={self.r!r})"

    def __eq__(self, other):
        return isinstance(other, Ball) and (self.dim, self.r) == (other.dim, other.r)

    def gauge(self, x):
        return np.linalg.norm(x, axis=-1) / self.r

    def scale(self, t: float) -> "Ball":
        _check_scale(t)
        return Ball(self.dim, self.r * t)

    def nearest_boundary(self) -> BoundaryPointSet:
        eye = np.eye(self.dim) * self.r
        return BoundaryPointSet(self.r, np.vstack([eye, -eye]), self.dim - 1)

    def extent(self) -> float:
        return self.r

    def curvature_bounds(self) -> tuple[float, float]:
        return (1.0 / self.r, 1.0 / self.r)

    def to_spec(self) -> dict:
        return {"kind": "ball", "dim": self.dim, "r": self.r}


class Ellipsoid(ConvexBody):
    """``{x : sum(sigma_i**2 x_i**2) < r**2}`` with ``sigma`` sorted descending."""

    kind = "ellipsoid"

    def __init__(self, sigma, r: float):
        s = np.asarray(sigma, dtype=float).ravel()
        if s.size < 1:
            raise DomainError("sigma must be non-empty")
        if np.any(~np.isfinite(s)) or np.any(s <= 0):
            raise DomainError(f"sigma entries must be positive and finite, got {s.tolist()}")
        if np.any(np.diff(s) > 0):
            raise DomainError(f"sigma must be sorted in descending order, got {s.tolist()}")
        if not r > 0 or not math.isfinite(r):
            raise DomainError(f"ellipsoid level r must be positive and finite, got {r!r}")
        self.sigma = s
        self.sigma.setflags(write=False)
        self.r = float(r)
        self.dim = s.size

    def __repr__(self):
        return f"Ellipsoid(sigma={self.sigma.tolist()}, r={self.r!r})"

    def __eq__(self, other):
        return (
            isinstance(other, Ellipsoid)
            and self.r == other.r
            and np.array_equal(self.sigma, other.sigma)
        )

    @property
    def multiplicity(self) -> int:
        """Number of weights tied with the largest one (relative tolerance 1e-9)."""
        return int(np.sum(self.sigma >= self.sigma[0] * (1.0 - MULTIPLICITY_RTOL)))

    @property
    def semi_axes(self) -> np.ndarray:
        return self.r / self.sigma

    def gauge(self, x):
        return np.sqrt(np.sum((np.asarray(x) * self.sigma) ** 2, axis=-1)) / self.r

    def scale(self, t: float) -> "Ellipsoid":
        _check_scale(t)
        return Ellipsoid(self.sigma, self.r * t)

    def nearest_boundary(self) -> BoundaryPointSet:
        k = self.multiplicity
        dist = self.r / self.sigma[0]
        eye = np.eye(self.dim)[:k] * dist
        return BoundaryPointSet(dist, np.vstack([eye, -eye]), k - 1)

    def extent(self) -> float:
        return float(self.r / self.sigma[-1])

    def curvature_bounds(self) -> tuple[float, float]:
        # principal curvatures of an ellipsoid with semi-axes a_i lie in
        # [a_min / a_max**2, a_max / a_min**2]
        a = self.semi_axes
        if self.dim == 1:
            return (0.0, 0.0)
        return (float(a.min() / a.max() ** 2), float(a.max() / a.min() ** 2))

    def to_spec(self) -> dict:
        return {"kind": "ellipsoid", "sigma": self.sigma.tolist(), "r": self.r}


class GenericBody(ConvexBody):
    """A body known only through oracles.

    ``membership(x)`` answers for a single point; ``support(u)`` returns
    ``sup_{y in body} u.y`` for a unit vector ``u``. Both must be pure.
    """

    kind = "generic"

    def __init__(
        self,
        dim: int,
        membership: Callable[[np.ndarray], bool],
        support: Callable[[np.ndarray], float],
        *,
        n_directions: int = 2000,
        tol: float = 1e-10,
        seed: int = 20240601,
    ):
        if int(dim) != dim or dim < 1:
            raise DomainError(f"dim must be a positive integer, got {dim!r}")
        self.dim = int(dim)
        self.membership = membership
        self.support = support
        self.n_directions = n_directions
        self.tol = tol
        self.seed = seed

    def __repr__(self):
        return f"GenericBody(dim={self.dim})"

    def contains(self, x):
        pts = self._check_points(x)
        if pts.ndim == 1:
            return bool(self.membership(pts))
        flat = pts.reshape(-1, self.dim)
        out = np.fromiter((bool(self.membership(p)) for p in flat), dtype=bool, count=len(flat))
        return out.reshape(pts.shape[:-1])

    def gauge(self, x):
        pts = np.asarray(x, dtype=float)
        if pts.ndim == 1:
            n = np.linalg.norm(pts)
            return 0.0 if n == 0 else n / self._radial(pts / n)
        return np.array([self.gauge(p) for p in pts.reshape(-1, self.dim)]).reshape(pts.shape[:-1])

    def _radial(self, u: np.ndarray) -> float:
        """Bisection for the boundary crossing along unit direction ``u``."""
        if not self.membership(np.zeros(self.dim)):
            raise DomainError("generic body must contain the origin")
        hi = float(self.support(u))
        if not math.isfinite(hi):
            raise DomainError("generic body is unbounded (infinite support value)")
        if hi <= 0:
            raise DomainError("generic body must contain the origin in its interior")
        hi *= 1.0 + 1e-9
        if self.membership(hi * u):
            raise DomainError("support oracle is inconsistent with the membership oracle")
        lo = 0.0
        while hi - lo > self.tol * max(hi, 1e-300) * 1e-2:
            mid = 0.5 * (lo + hi)
            if self.membership(mid * u):
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def scale(self, t: float) -> "GenericBody":
        _check_scale(t)
        member, supp = self.membership, self.support
        return GenericBody(
            self.dim,
            lambda x: member(np.asarray(x) / t),
            lambda u: t * supp(u),
            n_directions=self.n_directions,
            tol=self.tol,
            seed=self.seed,
        )

    def nearest_boundary(self) -> BoundaryPointSet:
        if self.dim == 1:
            dirs = np.array([[1.0], [-1.0]])
        else:
            rng = np.random.default_rng(self.seed)
            dirs = rng.standard_normal((self.n_directions, self.dim))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        dists = np.array([self._radial(u) for u in dirs])
        best = dirs[int(np.argmin(dists))]
        if self.dim > 1:
            res = minimize(
                lambda v: self._radial(v / np.linalg.norm(v)),
                best,
                method="Nelder-Mead",
                options={"xatol": 1e-9, "fatol": 1e-13, "maxiter": 4000},
            )
            cand = res.x / np.linalg.norm(res.x)
            if self._radial(cand) < self._radial(best):
                best = cand
        dist = self._radial(best)
        y = dist * best
        return BoundaryPointSet(dist, np.vstack([y, -y]), 0)

    def extent(self) -> float:
        rng = np.random.default_rng(self.seed)
        dirs = rng.standard_normal((200, self.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return float(max(self.support(u) for u in np.vstack([dirs, np.eye(self.dim), -np.eye(self.dim)])))

    def to_spec(self) -> dict:
        raise DomainError("generic bodies have no serialized form")


def _check_scale(t: float) -> None:
    if not t > 0 or not math.isfinite(t):
        raise DomainError(f"scale factor must be positive and finite, got {t!r}")


def body_from_spec(spec: dict) -> ConvexBody:
    """Build a body from ``{"kind": "ball", "dim": d, "r": r}`` or
    ``{"kind": "ellipsoid", "sigma": [...], "r": r}``."""
    kind = spec.get("kind")
    try:
        if kind == "ball":
            return Ball(int(spec["dim"]), float(spec["r"]))
        if kind == "ellipsoid":
            return Ellipsoid(spec["sigma"], float(spec["r"]))
    except KeyError as exc:
        raise DomainError(f"{kind} spec is missing field {exc.args[0]!r}") from None
    raise DomainError(f"unknown body kind {kind!r}")


@dataclass
class AssumptionReport:
    b1: str
    b2: str
    b3: str
    curvature_bounds: tuple[float, float] | None
    strictly_convex: bool | None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "b1": self.b1,
            "b2": self.b2,
            "b3": self.b3,
            "curvature_bounds": list(self.curvature_bounds) if self.curvature_bounds else None,
            "strictly_convex": self.strictly_convex,
            "details": self.details,
        }


def validate_b_assumptions(body: ConvexBody, *, n_probe: int = 10_000, seed: int = 7) -> AssumptionReport:
    """Probe symmetry/convexity and report boundary smoothness and curvature.

    Curvatures are reported as magnitudes; ``strictly_convex`` is the flag
    that stands in for the sign condition on principal curvatures.
    """
    rng = np.random.default_rng(seed)
    box = 1.5 * body.extent()
    pts = rng.uniform(-box, box, size=(n_probe, body.dim))
    inside = np.asarray(body.contains(pts))
    mirrored = np.asarray(body.contains(-pts))
    asym = int(np.sum(inside != mirrored))

    interior = pts[inside]
    convex_violations = 0
    if len(interior) >= 2:
        i = rng.integers(0, len(interior), size=n_probe)
        j = rng.integers(0, len(interior), size=n_probe)
        lam = rng.uniform(size=(n_probe, 1))
        combo = lam * interior[i] + (1.0 - lam) * interior[j]
        convex_violations = int(np.sum(~np.asarray(body.contains(combo))))
    details = {
        "symmetry_violations": asym,
        "convexity_violations": convex_violations,
        "n_probe": n_probe,
        "contains_origin": bool(body.contains(np.zeros(body.dim))),
    }
    b1 = "pass" if asym == 0 and convex_violations == 0 and details["contains_origin"] else "fail"

    if isinstance(body, (Ball, Ellipsoid)):
        lo, hi = body.curvature_bounds()
        strictly = lo > 0 or body.dim == 1
        return AssumptionReport(b1, "pass", "pass" if strictly else "fail", (lo, hi), strictly, details)
    return AssumptionReport(b1, "unknown", "unknown", None, None, details)
