import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import sample_pair
from manivar import (
    SPD,
    Circle,
    CutLocusError,
    Euclidean,
    InvalidPointError,
    Point,
    Power,
    Product,
    Rotations3,
    Sphere2,
    TagMismatchError,
    TangentVector,
    ValidationError,
    distance,
    exp,
    geodesic_point,
    inner,
    log,
    parse_tag,
    reflect,
)


def pt(man, coords):
    return Point(man, np.atleast_1d(np.asarray(coords, float)).ravel())


class TestDistance:
    def test_circle_arc(self):
        assert distance(pt(Circle(), 0.0), pt(Circle(), np.pi / 2)) == pytest.approx(
            np.pi / 2, abs=1e-15)

    def test_sphere_identity(self):
        p = pt(Sphere2(), [0, 0, 1])
        assert distance(p, p) == 0.0

    def test_spd3_unit_step(self):
        # affine-invariant distance from I to diag(e, 1, 1) is 1; cross-check
        # by quadrature of the curve speed gamma(t) = diag(e^t, 1, 1)
        man = SPD(3)
        x = pt(man, np.eye(3).ravel())
        y = pt(man, np.diag([np.e, 1.0, 1.0]).ravel())
        assert distance(x, y) == pytest.approx(1.0, abs=1e-12)
        ts = np.linspace(0.0, 1.0, 201)
        h = ts[1] - ts[0]
        curve = np.stack([np.diag([np.exp(t), 1.0, 1.0]).ravel() for t in ts])
        speed = [
            float(man.norm(curve[k], (curve[k + 1] - curve[k - 1]) / (2 * h)))
            for k in range(1, len(ts) - 1)
        ]
        # central-difference speeds at interior nodes; endpoints contribute h/2 each
        assert (sum(speed) + 1.0) * h == pytest.approx(1.0, rel=1e-3)

    def test_symmetry_and_separation(self, manifold, rng):
        x, y = sample_pair(manifold, rng, n=8)
        d_xy = manifold.dist(x, y)
        d_yx = manifold.dist(y, x)
        assert np.allclose(d_xy, d_yx, atol=1e-12)
        assert np.all(d_xy > 0)
        assert np.allclose(manifold.dist(x, x), 0.0, atol=1e-12)

    def test_tag_mismatch(self):
        with pytest.raises(TagMismatchError):
            distance(pt(Circle(), 0.0), pt(Euclidean(1), 0.0))

    def test_power_distance_decomposes(self, rng):
        base = SPD(2)
        man = Power(base, 4)
        x, y = sample_pair(man, rng, n=6)
        parts = [
            base.dist(x[..., 4 * k : 4 * k + 4], y[..., 4 * k : 4 * k + 4]) ** 2
            for k in range(4)
        ]
        assert np.allclose(man.dist(x, y) ** 2, sum(parts), atol=1e-10)


class TestExpLog:
    def test_euclidean_translation(self, rng):
        man = Euclidean(3)
        x = pt(man, [1.0, 2.0, 3.0])
        v = TangentVector(x, [0.5, -1.0, 0.25])
        assert np.allclose(exp(x, v).coords, [1.5, 1.0, 3.25])

    def test_sphere_quarter_circle(self):
        man = Sphere2()
        x = pt(man, [0, 0, 1])
        v = TangentVector(x, [np.pi / 2, 0, 0])
        assert np.allclose(exp(x, v).coords, [1, 0, 0], atol=1e-15)

    def test_spd_exp_at_identity_is_matrix_exponential(self, rng):
        # independent oracle: scaling-and-squaring Taylor series
        man = SPD(2)
        g = rng.normal(0.0, 0.5, (2, 2))
        v = (g + g.T) / 2.0
        x = pt(man, np.eye(2).ravel())
        out = exp(x, TangentVector(x, v.ravel())).coords.reshape(2, 2)
        scaled = v / 16.0
        series = np.eye(2)
        term = np.eye(2)
        for k in range(1, 12):
            term = term @ scaled / k
            series = series + term
        for _ in range(4):
            series = series @ series
        assert np.allclose(out, series, atol=1e-10)

    def test_exp_zero_fixes_point(self, manifold, rng):
        x = manifold.random_point(rng, (5,))
        z = manifold.zero_tangent(x)
        assert np.allclose(manifold.exp(x, z), x, atol=1e-14)

    def test_exp_norm_is_distance_below_injectivity(self, manifold, rng):
        x = manifold.random_point(rng, (8,))
        v = manifold.random_tangent(rng, x, 0.3)
        norms = manifold.norm(x, v)
        assert np.all(norms < manifold.injectivity_radius)
        assert np.allclose(manifold.dist(x, manifold.exp(x, v)), norms, atol=1e-10)

    def test_log_of_self_is_zero(self, manifold, rng):
        x = manifold.random_point(rng, (4,))
        assert np.allclose(manifold.log(x, x), 0.0, atol=1e-14)

    def test_circle_signed_arc(self):
        v = log(pt(Circle(), 0.0), pt(Circle(), np.pi / 2))
        assert v.coords[0] == pytest.approx(np.pi / 2)

    def test_sphere_antipodal_raises(self):
        with pytest.raises(CutLocusError):
            log(pt(Sphere2(), [0, 0, 1]), pt(Sphere2(), [0, 0, -1]))

    def test_circle_cut_locus_raises(self):
        with pytest.raises(CutLocusError) as err:
            log(pt(Circle(), -np.pi / 2), pt(Circle(), np.pi / 2))
        assert err.value.indices is not None

    def test_round_trip(self, manifold, rng):
        x = manifold.random_point(rng, (20,))
        v = manifold.random_tangent(rng, x, 0.4)
        back = manifold.log(x, manifold.exp(x, v))
        assert np.abs(back - v).max() < 1e-9

    def test_exp_log_consistency(self, manifold, rng):
        x, y = sample_pair(manifold, rng, n=10)
        v = manifold.log(x, y)
        assert np.allclose(manifold.exp(x, v), y, atol=1e-10)
        assert np.allclose(manifold.norm(x, v), manifold.dist(x, y), atol=1e-10)


class TestGeodesic:
    def test_endpoints(self, manifold, rng):
        x, y = sample_pair(manifold, rng, n=5)
        assert np.allclose(manifold.geodesic(x, y, 0.0), x, atol=1e-12)
        assert np.allclose(manifold.geodesic(x, y, 1.0), y, atol=1e-10)

    def test_euclidean_midpoint(self):
        man = Euclidean(1)
        out = geodesic_point(pt(man, 0.0), pt(man, 4.0), 0.5)
        assert out.coords[0] == 2.0

    def test_circle_extension_doubles_arc(self):
        man = Circle()
        x, y = pt(man, -np.pi / 4), pt(man, np.pi / 4)
        out = geodesic_point(x, y, 2.0)
        assert out.coords[0] == pytest.approx(3 * np.pi / 4, abs=1e-14)
        via_exp = man.exp(x.coords, 2.0 * man.log(x.coords, y.coords))
        assert out.coords[0] == pytest.approx(via_exp[0], abs=1e-15)

    def test_constant_speed(self, manifold, rng):
        x, y = sample_pair(manifold, rng, n=6)
        h = 1e-3
        a = manifold.geodesic(x, y, 0.37)
        b = manifold.geodesic(x, y, 0.37 + h)
        assert np.allclose(
            manifold.dist(a, b), h * manifold.dist(x, y), atol=1e-8)


class TestInner:
    def test_positive_definite(self, manifold, rng):
        x = manifold.random_point(rng, (6,))
        v = manifold.random_tangent(rng, x, 1.0)
        q = manifold.inner(x, v, v)
        assert np.all(q >= 0)
        assert np.all(q[np.abs(v).max(axis=-1) > 0] > 0)

    def test_euclidean_dot(self):
        man = Euclidean(3)
        x = pt(man, [0, 0, 0])
        v = TangentVector(x, [1, 2, 3])
        w = TangentVector(x, [4, 5, 6])
        assert inner(x, v, w) == 32.0

    def test_spd_identity_is_trace_product(self, rng):
        # polarization of the squared distance recovers the metric at I
        man = SPD(2)
        g1 = rng.normal(0, 0.4, (2, 2))
        g2 = rng.normal(0, 0.4, (2, 2))
        v = (g1 + g1.T) / 2
        w = (g2 + g2.T) / 2
        x = pt(man, np.eye(2).ravel())
        got = inner(x, TangentVector(x, v.ravel()), TangentVector(x, w.ravel()))
        assert got == pytest.approx(np.trace(v @ w), abs=1e-12)
        t = 1e-4
        i4 = np.eye(2).ravel()
        dsum = man.dist(i4, man.exp(i4, t * (v + w).ravel())) ** 2
        dv = man.dist(i4, man.exp(i4, t * v.ravel())) ** 2
        dw = man.dist(i4, man.exp(i4, t * w.ravel())) ** 2
        assert got == pytest.approx(float(dsum - dv - dw) / (2 * t * t), abs=1e-4)

    def test_base_mismatch_raises(self):
        man = Euclidean(2)
        x, y = pt(man, [0, 0]), pt(man, [1, 0])
        v = TangentVector(y, [1, 0])
        with pytest.raises(TagMismatchError):
            inner(x, v, v)


class TestReflect:
    def test_fixes_base(self, manifold, rng):
        p = manifold.random_point(rng, (4,))
        assert np.allclose(manifold.reflect(p, p), p, atol=1e-12)

    def test_euclidean_formula(self):
        man = Euclidean(2)
        out = reflect(pt(man, [1.0, 1.0]), pt(man, [3.0, 0.0]))
        assert np.allclose(out.coords, [-1.0, 2.0])

    def test_circle_sign_flip(self):
        out = reflect(pt(Circle(), 0.0), pt(Circle(), np.pi / 4))
        assert out.coords[0] == pytest.approx(-np.pi / 4)

    def test_isometry(self, manifold, rng):
        p = manifold.random_point(rng, (10,))
        x, y = sample_pair(manifold, rng, n=10)
        lhs = manifold.dist(manifold.reflect(p, x), manifold.reflect(p, y))
        assert np.abs(lhs - manifold.dist(x, y)).max() < 1e-9


class TestInvariantsAndValidation:
    def test_point_validation_sphere(self):
        with pytest.raises(InvalidPointError):
            Point(Sphere2(), np.array([0.0, 0.0, 1.1])).validate()

    def test_point_validation_spd(self):
        with pytest.raises(InvalidPointError):
            Point(SPD(2), np.array([1.0, 0.0, 0.0, -1.0])).validate()
        with pytest.raises(InvalidPointError):
            Point(SPD(2), np.array([1.0, 0.5, 0.2, 1.0])).validate()

    def test_point_validation_rotation(self):
        bad = np.eye(3)
        bad[0, 0] = -1.0  # determinant -1
        with pytest.raises(InvalidPointError):
            Point(Rotations3(), bad.ravel()).validate()

    def test_point_validation_circle_chart(self):
        with pytest.raises(InvalidPointError):
            Point(Circle(), np.array([np.pi])).validate()

    def test_random_points_are_valid(self, manifold, rng):
        x = manifold.random_point(rng, (16,))
        manifold.check_point(x)

    @given(angle=st.floats(-3.0, 3.0), step=st.floats(-2.5, 2.5))
    @settings(max_examples=60, deadline=None)
    def test_circle_round_trip_property(self, angle, step):
        man = Circle()
        x = np.array([angle if angle < np.pi else angle - 2 * np.pi])
        y = man.exp(x, np.array([step]))
        if abs(step) < np.pi - 1e-9:
            assert man.log(x, y)[0] == pytest.approx(step, abs=1e-12)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_spd_round_trip_property(self, seed):
        man = SPD(3)
        local = np.random.default_rng(seed)
        x = man.random_point(local)
        v = man.random_tangent(local, x, 0.5)
        assert np.abs(man.log(x, man.exp(x, v)) - v).max() < 1e-9


class TestTags:
    @pytest.mark.parametrize("expr", [
        "Circle", "Sphere2", "Rotations3", "Euclidean(4)", "SPD(3)",
        "Product(Circle,SPD(2))", "Power(Sphere2,3)",
        "Product(Euclidean(1),Power(Circle,2),Rotations3)",
    ])
    def test_round_trip(self, expr):
        tag = parse_tag(expr)
        assert tag.expression() == expr
        assert parse_tag(tag.expression()) == tag

    @pytest.mark.parametrize("expr", ["Moebius", "SPD(4)", "Power(Circle)",
                                      "Product()", "Euclidean(0)", "SPD(x)"])
    def test_rejects_bad_expressions(self, expr):
        with pytest.raises((ValidationError, InvalidPointError)):
            parse_tag(expr)

    def test_equality_is_structural(self):
        assert SPD(2) == SPD(2)
        assert SPD(2) != SPD(3)
        assert Product([Circle(), SPD(2)]) == Product([Circle(), SPD(2)])
        assert Power(Circle(), 2) != Product([Circle(), Circle()])
