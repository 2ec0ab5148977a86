import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdev.errors import DimensionError, DomainError
from mdev.geometry import Ball, Ellipsoid, GenericBody, body_from_spec, validate_b_assumptions


def box_body(half_widths):
    """Axis-aligned box: a symmetric convex body with a closed-form support function."""
    h = np.asarray(half_widths, dtype=float)
    return GenericBody(
        len(h),
        lambda x: bool(np.all(np.abs(x) < h)),
        lambda u: float(np.abs(u) @ h),
        n_directions=400,
    )


def test_contains_examples():
    assert Ball(3, 1.0).contains(np.zeros(3))
    ell = Ellipsoid([1.0, 0.5], 1.0)
    assert not ell.contains(np.array([0.0, 2.0001]))
    assert ell.contains(np.array([0.0, 1.9999]))
    # interior convention: the boundary itself is outside
    assert not ell.contains(np.array([1.0, 0.0]))


def test_ball_symmetry():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1.5, 1.5, size=(1000, 4))
    b = Ball(4, 1.0)
    assert np.array_equal(b.contains(x), b.contains(-x))


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        Ball(3, 1.0).contains(np.zeros(2))


@pytest.mark.parametrize("bad", [dict(sigma=[0.5, 1.0], r=1.0), dict(sigma=[1.0, -1.0], r=1.0), dict(sigma=[1.0], r=0.0)])
def test_ellipsoid_validation(bad):
    with pytest.raises(DomainError):
        Ellipsoid(**bad)


def test_scale():
    assert Ball(2, 1.0).scale(3.0) == Ball(2, 3.0)
    assert Ellipsoid([1.0, 0.5], 2.0).scale(1.5) == Ellipsoid([1.0, 0.5], 3.0)
    with pytest.raises(DomainError):
        Ball(2, 1.0).scale(0.0)


def test_generic_scale_equivalence():
    body = box_body([1.0, 0.4, 2.0])
    rng = np.random.default_rng(3)
    for _ in range(1000):
        x = rng.uniform(-3, 3, size=3)
        t = rng.uniform(0.2, 3.0)
        assert body.scale(t).contains(x) == body.contains(x / t)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-5, 5), min_size=2, max_size=2),
    st.floats(0.1, 10),
)
def test_scaling_consistency(x, t):
    x = np.asarray(x)
    for body in (Ball(2, 1.3), Ellipsoid([2.0, 0.7], 1.1)):
        assert body.scale(t).contains(t * x) == body.contains(x)
        assert body.scale(t).nearest_boundary().min_distance == pytest.approx(
            t * body.nearest_boundary().min_distance, rel=1e-10
        )


def test_nearest_boundary_examples():
    nb = Ball(3, 2.0).nearest_boundary()
    assert nb.min_distance == 2.0 and nb.component_dimension == 2
    nb = Ellipsoid([1.0, 0.5], 1.0).nearest_boundary()
    assert nb.min_distance == pytest.approx(1.0)
    assert nb.component_dimension == 0
    assert {tuple(p) for p in nb.representative_points} == {(1.0, 0.0), (-1.0, 0.0)}
    nb = Ellipsoid([1.0, 1.0, 0.5], 1.0).nearest_boundary()
    assert nb.min_distance == pytest.approx(1.0) and nb.component_dimension == 1
    assert np.all(nb.representative_points[:, 2] == 0)


@pytest.mark.parametrize(
    "body",
    [Ball(3, 2.0), Ellipsoid([2.0, 1.0, 0.3], 1.0), Ellipsoid([1.0, 1.0, 0.5], 1.5), box_body([1.0, 0.4, 2.0])],
    ids=["ball", "ellipsoid", "ellipsoid-k2", "box"],
)
def test_boundary_sandwich_and_negation(body):
    nb = body.nearest_boundary()
    pts = nb.representative_points
    for y in pts:
        assert np.linalg.norm(y) == pytest.approx(nb.min_distance, rel=1e-9)
        assert body.contains((1 - 1e-9) * y)
        assert not body.contains((1 + 1e-9) * y)
    negated = {tuple(np.round(-p, 12)) for p in pts}
    assert negated == {tuple(np.round(p, 12)) for p in pts}


def test_generic_nearest_boundary_box():
    nb = box_body([1.0, 0.4, 2.0]).nearest_boundary()
    assert nb.min_distance == pytest.approx(0.4, rel=1e-8)
    assert abs(abs(nb.representative_points[0, 1]) - 0.4) < 1e-8


def test_generic_errors():
    unbounded = GenericBody(2, lambda x: True, lambda u: math.inf)
    with pytest.raises(DomainError):
        unbounded.nearest_boundary()
    shifted = GenericBody(2, lambda x: bool(np.linalg.norm(x - 3) < 1), lambda u: float(u @ np.full(2, 3.0) + 1))
    with pytest.raises(DomainError):
        shifted.nearest_boundary()


def test_validate_examples():
    rep = validate_b_assumptions(Ball(3, 2.0))
    assert (rep.b1, rep.b2, rep.b3) == ("pass", "pass", "pass")
    assert rep.curvature_bounds == (0.5, 0.5)
    rep = validate_b_assumptions(Ellipsoid([1.0, 0.5], 1.0))
    assert (rep.b1, rep.b2, rep.b3) == ("pass", "pass", "pass")
    # semi-axes a = (1, 2): normal curvature ranges over [a_min / a_max^2, a_max / a_min^2]
    assert rep.curvature_bounds == pytest.approx((0.25, 2.0))


def test_validate_generic_asymmetric():
    # intersection of half-spaces x < 1, y < 1, x + y > -0.5: contains 0 but is not symmetric
    def member(x):
        return bool(x[0] < 1 and x[1] < 1 and x[0] + x[1] > -0.5)

    def support(u):
        verts = np.array([[1.0, 1.0], [1.0, -1.5], [-1.5, 1.0]])
        return float(np.max(verts @ u))

    rep = validate_b_assumptions(GenericBody(2, member, support))
    assert rep.b1 == "fail"
    assert rep.b2 == "unknown" and rep.b3 == "unknown"
    assert validate_b_assumptions(box_body([1.0, 0.5])).b1 == "pass"


def test_spec_roundtrip():
    for body in (Ball(2, 1.5), Ellipsoid([1.0, 0.5, 0.5], 2.0)):
        assert body_from_spec(body.to_spec()) == body
    with pytest.raises(DomainError):
        body_from_spec({"kind": "cube"})
    with pytest.raises(DomainError):
        body_from_spec({"kind": "ball", "dim": 2})
