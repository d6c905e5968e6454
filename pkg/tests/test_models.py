import numpy as np
import pytest

import euclidean_reference as ref
from manivar import (
    Circle,
    CutLocusError,
    Euclidean,
    Point,
    Sphere2,
    TagMismatchError,
    ValidationError,
)
from manivar.models import (
    ManifoldImage,
    ModelConfig,
    TangentField,
    data_term,
    forward_differences,
    make_phi,
    model_subgradient,
    objective,
    second_diff,
    second_diff_mixed,
    tgv,
    tgv_terms,
    tv,
    tv2,
    tv_phi,
    tv_tv2,
)

E1, E3, CIRC = Euclidean(1), Euclidean(3), Circle()


def img(man, arr):
    a = np.asarray(arr, float)
    if a.ndim == 2:
        a = a[..., None]
    return ManifoldImage(man, a)


def rand_img(man, rng, n1=5, n2=4, spread=0.4):
    base = man.random_point(rng)
    data = man.exp(
        np.broadcast_to(base, (n1, n2, man.point_size)),
        man.random_tangent(rng, np.broadcast_to(base, (n1, n2, man.point_size)), spread),
    )
    return ManifoldImage(man, data)


class TestDataTerm:
    def test_zero_for_equal(self, rng):
        u = rand_img(Sphere2(), rng)
        assert data_term(u, u) == 0.0

    def test_single_circle_pixel(self):
        assert data_term(img(CIRC, [[0.0]]), img(CIRC, [[np.pi / 2]])) == pytest.approx(
            np.pi**2 / 8)

    def test_two_euclidean_pixels(self):
        assert data_term(img(E1, [[0.0], [0.0]]), img(E1, [[3.0], [4.0]])) == 12.5

    def test_shape_mismatch(self):
        with pytest.raises(TagMismatchError):
            data_term(img(E1, [[0.0]]), img(E1, [[0.0], [1.0]]))


class TestForwardDifferences:
    def test_constant_image_zero_field(self, rng):
        man = Sphere2()
        u = ManifoldImage.constant(Point(man, man.random_point(rng)), 4, 3)
        field = forward_differences(u)
        assert np.allclose(field.xi1, 0.0)
        assert np.allclose(field.xi2, 0.0)

    def test_boundary_rows_are_zero(self, rng):
        u = rand_img(Euclidean(2), rng, 4, 3)
        field = forward_differences(u)
        assert np.allclose(field.xi1[-1], 0.0)
        assert np.allclose(field.xi2[:, -1], 0.0)

    def test_euclidean_ramp(self):
        data = np.array([[float(i)] * 4 for i in range(5)])
        field = forward_differences(img(E1, data))
        assert np.allclose(field.xi1[:-1], 1.0)
        assert np.allclose(field.xi2, 0.0)

    def test_cut_locus_reports_pixel(self):
        data = np.array([[0.0], [np.pi - 1e-15]])[:, None]
        u = ManifoldImage(CIRC, data.reshape(2, 1, 1))
        with pytest.raises(CutLocusError):
            forward_differences(u)


class TestTV:
    def test_constant_is_zero_and_converse(self, manifold, rng):
        u = ManifoldImage.constant(Point(manifold, manifold.random_point(rng)), 3, 3)
        assert tv(u, 1) == pytest.approx(0.0, abs=1e-10)
        v = rand_img(manifold, rng, 3, 3)
        if float(manifold.dist(v.data[0, 0], v.data[0, 1])) > 1e-8:
            assert tv(v, 1) > 1e-8

    def test_examples(self):
        assert tv(img(E1, [[0.0, 1.0]]), 1) == 1.0
        assert tv(img(E1, [[0, 1], [0, 1]]), 2) == 2.0

    def test_norm_ordering(self, manifold, rng):
        u = rand_img(manifold, rng)
        t1, t2 = tv(u, 1), tv(u, 2)
        assert t2 <= t1 + 1e-12
        assert t1 <= np.sqrt(2.0) * t2 + 1e-12

    def test_matches_euclidean_reference(self, rng):
        for p in (1, 2):
            data = rng.normal(0, 1, (6, 5, 3))
            assert tv(ManifoldImage(E3, data), p) == pytest.approx(
                ref.tv_ref(data, p), abs=1e-10)


class TestTVPhi:
    def test_huber_edge(self):
        phi2 = make_phi("phi2", 0.5)
        assert tv_phi(img(E1, [[0.0, 1.0]]), phi2, 1) == pytest.approx(0.375)

    def test_phi1_constant_image(self):
        phi1 = make_phi("phi1", 0.01)
        u = img(CIRC, np.zeros((3, 3)))
        assert tv_phi(u, phi1, 2) == pytest.approx(9 * 0.01)

    def test_phi3_constant_is_zero(self):
        u = img(CIRC, np.zeros((3, 3)))
        assert tv_phi(u, make_phi("phi3", 0.7), 1) == 0.0

    def test_weights_match_table(self):
        phi1 = make_phi("phi1", 1.0)
        assert phi1.weight(0.0) == pytest.approx(0.5)
        phi2 = make_phi("phi2", 0.4)
        assert phi2.weight(1.0) == pytest.approx(0.4 / 2.0)
        assert phi2.weight(0.2) == pytest.approx(0.5)
        phi3 = make_phi("phi3", 1.3)
        t = 0.7
        assert phi3.weight(t) == pytest.approx(1.3**2 * np.exp(-(1.3**2) * t * t))

    def test_weight_is_derivative_over_2t(self):
        for name in ("phi1", "phi2", "phi3"):
            phi = make_phi(name, 0.3)
            for t in (0.05, 0.4, 1.7):
                assert phi.weight(t) == pytest.approx(
                    phi.derivative(t) / (2 * t), rel=1e-12)


class TestSecondDifferences:
    def test_midpoint_is_zero(self, rng):
        man = Sphere2()
        a = man.random_point(rng)
        c = man.exp(a, man.random_tangent(rng, a, 0.8))
        b = man.geodesic(a, c, 0.5)
        assert second_diff(Point(man, a), Point(man, b), Point(man, c)) < 1e-12

    def test_euclidean_identity(self, rng):
        x, y, z = rng.normal(0, 1, 3)
        got = second_diff(Point(E1, [x]), Point(E1, [y]), Point(E1, [z]))
        assert got == pytest.approx(abs(x - 2 * y + z) / 2.0)

    def test_circle_example(self):
        assert second_diff(
            Point(CIRC, [0.0]), Point(CIRC, [0.0]), Point(CIRC, [np.pi / 2]),
        ) == pytest.approx(np.pi / 4)

    def test_mixed_euclidean_identity(self, rng):
        x, y, z, w = rng.normal(0, 1, 4)
        got = second_diff_mixed(
            Point(E1, [x]), Point(E1, [y]), Point(E1, [z]), Point(E1, [w]))
        assert got == pytest.approx(abs((x + z) / 2 - (y + w) / 2))

    def test_antipodal_tie_raises(self):
        man = Sphere2()
        with pytest.raises(CutLocusError):
            second_diff(
                Point(man, [0.0, 0.0, 1.0]),
                Point(man, [1.0, 0.0, 0.0]),
                Point(man, [0.0, 0.0, -1.0]),
            )


class TestTV2:
    def test_examples(self):
        assert tv2(img(E1, [[0.0], [1.0], [0.0]]), 1) == pytest.approx(1.0)
        assert tv2(img(E1, [[0.5]]), 1) == 0.0

    def test_geodesic_ramp_vanishes(self, manifold, rng):
        x = manifold.random_point(rng)
        v = manifold.random_tangent(rng, x, 1.2)
        n = 6
        rows = np.stack([manifold.exp(x, (k / (n - 1)) * v) for k in range(n)])
        data = np.repeat(rows[:, None, :], 4, axis=1)
        assert tv2(ManifoldImage(manifold, data), 1) < 1e-9

    def test_matches_euclidean_reference(self, rng):
        for p in (1, 2):
            data = rng.normal(0, 1, (6, 5, 2))
            assert tv2(ManifoldImage(Euclidean(2), data), p) == pytest.approx(
                ref.tv2_ref(data, p), abs=1e-10)

    def test_coupling(self):
        u = img(E1, [[0.0], [1.0], [0.0]])
        assert tv_tv2(u, 0.5, 1) == pytest.approx(0.5 * 2.0 + 0.5 * 1.0)
        const = img(E1, np.zeros((3, 3)))
        assert tv_tv2(const, 0.5, 1) == 0.0


class TestIsometryInvariance:
    def test_functionals_invariant_under_reflection(self, manifold, rng):
        u = rand_img(manifold, rng, 4, 4)
        f = rand_img(manifold, rng, 4, 4)
        p = manifold.random_point(rng)
        ru = ManifoldImage(manifold, manifold.reflect(
            np.broadcast_to(p, u.data.shape), u.data))
        rf = ManifoldImage(manifold, manifold.reflect(
            np.broadcast_to(p, f.data.shape), f.data))
        assert data_term(ru, rf) == pytest.approx(data_term(u, f), abs=1e-9)
        for pp in (1, 2):
            assert tv(ru, pp) == pytest.approx(tv(u, pp), abs=1e-9)
            assert tv2(ru, pp) == pytest.approx(tv2(u, pp), abs=1e-9)


class TestTGV:
    def test_r1_zero_when_field_is_gradient(self, rng):
        u = rand_img(Sphere2(), rng, 4, 4, spread=0.3)
        field = forward_differences(u)
        r1, _ = tgv_terms(u, field, 1)
        assert r1 == pytest.approx(0.0, abs=1e-12)

    def test_zero_field_gives_tv_and_zero_r2(self, rng):
        u = rand_img(Sphere2(), rng)
        r1, r2 = tgv_terms(u, TangentField.zero(u), 1)
        assert r1 == pytest.approx(tv(u, 1), abs=1e-12)
        assert r2 == pytest.approx(0.0, abs=1e-12)

    def test_constant_field_flat_r2_zero(self, rng):
        man = Euclidean(2)
        u = rand_img(man, rng, 4, 4)
        c = rng.normal(0, 1, 2)
        field = TangentField(
            u,
            np.broadcast_to(c, u.data.shape).copy(),
            np.broadcast_to(c, u.data.shape).copy(),
        )
        _, r2 = tgv_terms(u, field, 1)
        assert r2 == pytest.approx(0.0, abs=1e-12)

    def test_matches_euclidean_reference_terms(self, rng):
        data = rng.normal(0, 1, (5, 4, 2))
        xi1 = rng.normal(0, 1, (5, 4, 2))
        xi2 = rng.normal(0, 1, (5, 4, 2))
        u = ManifoldImage(Euclidean(2), data)
        field = TangentField(u, xi1, xi2)
        for p in (1, 2):
            mine = tgv_terms(u, field, p)
            theirs = ref.tgv_terms_ref(data, xi1, xi2, p)
            assert mine[0] == pytest.approx(theirs[0], abs=1e-10)
            assert mine[1] == pytest.approx(theirs[1], abs=1e-10)

    def test_constant_image_infimum_zero(self, rng):
        man = Sphere2()
        u = ManifoldImage.constant(Point(man, man.random_point(rng)), 4, 4)
        res = tgv(u, 0.5, 1, max_sweeps=30)
        assert res.value == pytest.approx(0.0, abs=1e-12)

    def test_upper_bound_beta_tv(self, rng):
        u = rand_img(Sphere2(), rng, 4, 4)
        for beta in (0.3, 0.7):
            res = tgv(u, beta, 1, max_sweeps=60)
            assert res.value <= beta * tv(u, 1) + 1e-12

    def test_euclidean_ramp_reaches_zero(self):
        sig = img(E1, [[float(k)] for k in range(6)])
        res = tgv(sig, 0.5, 1, max_sweeps=200)
        assert res.value == pytest.approx(0.0, abs=1e-12)
        assert res.converged

    def test_matches_euclidean_reference_value(self, rng):
        data = rng.normal(0, 0.6, (5, 4, 2))
        u = ManifoldImage(Euclidean(2), data)
        for beta in (0.4, 0.6):
            mine = tgv(u, beta, 1, max_sweeps=150)
            theirs, _ = ref.tgv_ref(data, beta, 1, max_sweeps=150)
            assert mine.value == pytest.approx(theirs, abs=1e-10)


class TestConfigAndObjective:
    def test_validation(self):
        with pytest.raises(ValidationError):
            ModelConfig("nope", alpha=1.0)
        with pytest.raises(ValidationError):
            ModelConfig("tv", alpha=0.0)
        with pytest.raises(ValidationError):
            ModelConfig("tvtv2", alpha=1.0, beta=1.0)
        with pytest.raises(ValidationError):
            ModelConfig("tvphi", alpha=1.0)
        with pytest.raises(ValidationError):
            ModelConfig("tv", alpha=1.0, p=3)

    def test_alpha_zero_limit_is_data_term(self, rng):
        u = rand_img(CIRC, rng)
        f = rand_img(CIRC, rng)
        cfg = ModelConfig("tv", alpha=1e-300, p=1)
        assert objective(u, f, cfg) == pytest.approx(data_term(u, f))

    def test_objective_finite_nonneg(self, rng):
        u = rand_img(CIRC, rng)
        f = rand_img(CIRC, rng)
        for cfg in (
            ModelConfig("tv", 0.3, p=2),
            ModelConfig("tvphi", 0.3, p=1, phi=make_phi("phi2", 0.2)),
            ModelConfig("tv2", 0.3, p=1),
            ModelConfig("tvtv2", 0.3, beta=0.4, p=1),
        ):
            val = objective(u, f, cfg)
            assert np.isfinite(val) and val >= 0.0
        assert objective(f, f, ModelConfig("tv", 0.3)) >= 0.0

    def test_subgradient_matches_fd_on_sphere(self, rng):
        man = Sphere2()
        u = rand_img(man, rng, 3, 3, spread=0.3)
        f = rand_img(man, rng, 3, 3, spread=0.3)
        cfg = ModelConfig("tvphi", alpha=0.4, p=2, phi=make_phi("phi1", 0.2))
        g = model_subgradient(u, f, cfg)
        h = 1e-6
        basis = man.basis(u.data)
        for i in range(3):
            for j in range(3):
                for k in range(man.dim):
                    d = basis[i, j, k]
                    up, um = u.copy(), u.copy()
                    up.data[i, j] = man.exp(u.data[i, j], h * d)
                    um.data[i, j] = man.exp(u.data[i, j], -h * d)
                    fd = (objective(up, f, cfg) - objective(um, f, cfg)) / (2 * h)
                    got = float(man.inner(u.data[i, j], g[i, j], d))
                    assert got == pytest.approx(fd, abs=1e-5)
