import logging

import numpy as np
import pytest

from conftest import sample_pair
from manivar import (
    SPD,
    Circle,
    ConvergenceError,
    Euclidean,
    Point,
    ScheduleError,
    Sphere2,
    ValidationError,
)
from manivar.models import (
    ManifoldImage,
    ModelConfig,
    data_subgradient,
    data_term,
    make_phi,
    model_subgradient,
    objective,
)
from manivar.solvers import (
    StepSchedule,
    cppa,
    douglas_rachford,
    half_quadratic,
    karcher_mean,
    karcher_arrays,
    parallel_douglas_rachford,
    reflect_prox,
    solve,
    subgradient_descent,
    tgv_denoise,
    validate_schedule,
)
from manivar.terms import DataTerm, build_terms
from oracles import circle_tv_optimum

E1, CIRC = Euclidean(1), Circle()


def img(man, arr):
    a = np.asarray(arr, float)
    if a.ndim == 2:
        a = a[..., None]
    return ManifoldImage(man, a)


class TestSchedules:
    def test_harmonic_is_admissible(self):
        s = StepSchedule.harmonic(4.0)
        assert s.step(0) == 4.0
        assert s.step(3) == 1.0
        assert s.in_ell2_not_ell1
        assert validate_schedule(s, "diminishing", True)

    def test_constant_rejected_in_guarantee_mode(self):
        s = StepSchedule.constant(0.5)
        with pytest.raises(ScheduleError):
            validate_schedule(s, "diminishing", True)

    def test_constant_warned_in_best_effort(self, caplog):
        s = StepSchedule.constant(0.5)
        with caplog.at_level(logging.WARNING):
            note = validate_schedule(s, "diminishing", False)
        assert "best-effort" in note
        assert any("lapse" in r.getMessage() for r in caplog.records)

    def test_dr_relaxation_rules(self):
        assert StepSchedule.constant(0.9).dr_divergence_ok
        assert not StepSchedule.constant(1.0).dr_divergence_ok
        assert StepSchedule.harmonic(1.0).dr_divergence_ok
        with pytest.raises(ScheduleError):
            validate_schedule(StepSchedule.constant(1.0), "dr", True)

    def test_custom_schedule(self):
        s = StepSchedule.custom([1.0, 0.5, 0.25])
        assert s.step(1) == 0.5
        assert s.step(10) == 0.25
        assert not s.in_ell2_not_ell1


class TestSubgradient:
    def test_zero_subgradient_stops_immediately(self, rng):
        f = img(E1, [[1.0], [2.0]])
        run = subgradient_descent(
            lambda im: data_term(im, f),
            lambda im: data_subgradient(im, f),
            f, StepSchedule.harmonic(1.0), max_iters=50)
        assert run.iterations == 1
        assert run.converged
        assert "zero subgradient" in run.stop_reason

    def test_single_pixel_converges_to_data(self):
        f = img(E1, [[2.0]])
        run = subgradient_descent(
            lambda im: data_term(im, f),
            lambda im: data_subgradient(im, f),
            img(E1, [[0.0]]), StepSchedule.harmonic(1.0), max_iters=500)
        assert abs(run.image.data.ravel()[0] - 2.0) < 1e-3

    def test_circle_signal_reaches_oracle(self, rng):
        f_angles = np.array([0.1, 0.9, 1.1, -0.4])
        f = img(CIRC, f_angles[:, None])
        cfg = ModelConfig("tv", alpha=0.3, p=1)
        run = subgradient_descent(
            lambda im: objective(im, f, cfg),
            lambda im: model_subgradient(im, f, cfg),
            f, StepSchedule.harmonic(1.0), max_iters=8000, rtol=0.0)
        oracle, _ = circle_tv_optimum(f_angles, 0.3)
        assert objective(run.image, f, cfg) <= oracle + 1e-3

    def test_regime_note_present(self):
        f = img(E1, [[0.0]])
        run = subgradient_descent(
            lambda im: data_term(im, f), lambda im: data_subgradient(im, f),
            f, StepSchedule.harmonic(1.0), max_iters=5)
        assert "curvature" in run.notes["subgradient_regime"]


class TestHalfQuadratic:
    def test_weights_spec_example(self):
        assert make_phi("phi1", 1.0).weight(0.0) == pytest.approx(0.5)

    def test_constant_image_is_fixed_point(self, rng):
        man = SPD(2)
        base = Point(man, man.random_point(rng))
        f = ManifoldImage.constant(base, 4, 4)
        cfg = ModelConfig("tvphi", alpha=0.4, p=2, phi=make_phi("phi1", 0.1))
        run = half_quadratic(f, cfg, max_outer=30)
        assert float(np.max(man.dist(run.image.data, f.data))) < 1e-10

    @pytest.mark.parametrize("phi_name", ["phi1", "phi2", "phi3"])
    def test_monotone_objective(self, phi_name, rng):
        man = Sphere2()
        base = man.random_point(rng)
        data = man.exp(
            np.broadcast_to(base, (5, 5, 3)),
            man.random_tangent(rng, np.broadcast_to(base, (5, 5, 3)), 0.25))
        f = ManifoldImage(man, data)
        cfg = ModelConfig("tvphi", alpha=0.4, p=2, phi=make_phi(phi_name, 0.3))
        run = half_quadratic(f, cfg, max_outer=40)
        diffs = np.diff(run.objectives)
        assert np.all(diffs <= 1e-12)

    def test_limit_matches_direct_minimizer(self):
        # 1x3 Euclidean instance against an independent plain gradient descent
        f_vals = np.array([0.0, 1.0, 0.3])
        f = img(E1, f_vals[:, None])
        eps, alpha = 0.15, 0.5
        phi = make_phi("phi1", eps)
        cfg = ModelConfig("tvphi", alpha=alpha, p=2, phi=phi)
        run = half_quadratic(f, cfg, max_outer=4000, rtol=1e-14)

        def smooth_grad(u):
            d1, d2 = u[1] - u[0], u[2] - u[1]
            w1 = d1 / np.sqrt(d1**2 + eps**2)
            w2 = d2 / np.sqrt(d2**2 + eps**2)
            return (u - f_vals) + alpha * np.array([-w1, w1 - w2, w2])

        u = f_vals.copy()
        for _ in range(100000):
            g = smooth_grad(u)
            if np.linalg.norm(g) < 1e-13:
                break
            u = u - 0.2 * g
        assert np.abs(run.image.data.ravel() - u).max() < 1e-6

    def test_objective_increase_is_hard_error(self, rng, monkeypatch):
        # corrupting the half-quadratic weights destroys the majorization
        # property, so the monotonicity guard must trip
        f = img(E1, [[0.0], [1.0]])
        cfg = ModelConfig("tvphi", alpha=0.5, p=2, phi=make_phi("phi1", 0.1))
        import manivar.solvers as solvers_mod

        def broken_weights(man, d, p, phi):
            return {"pixel": -np.ones(d.shape[:2])}

        monkeypatch.setattr(solvers_mod, "_hq_weights", broken_weights)
        with pytest.raises(ConvergenceError):
            half_quadratic(f, cfg, max_outer=10)

    def test_requires_tvphi(self):
        with pytest.raises(ValidationError):
            half_quadratic(img(E1, [[0.0]]), ModelConfig("tv", alpha=1.0))


class TestCPPA:
    def test_alpha_zero_limit_goes_to_data(self):
        f = img(E1, [[0.0], [1.0]])
        cfg = ModelConfig("tv", alpha=1e-12, p=1)
        run = cppa(f, build_terms(f, cfg), StepSchedule.harmonic(4.0),
                   max_sweeps=2000, x0=img(E1, [[0.5], [0.5]]))
        assert np.abs(run.image.data.ravel() - [0.0, 1.0]).max() < 1e-3

    def test_euclidean_pair_shrinkage(self):
        f = img(E1, [[0.0], [1.0]])
        cfg = ModelConfig("tv", alpha=0.2, p=1)
        run = cppa(f, build_terms(f, cfg), StepSchedule.harmonic(4.0),
                   max_sweeps=4000, rtol=1e-12)
        assert np.abs(run.image.data.ravel() - [0.2, 0.8]).max() < 1e-3

    def test_circle_signal_matches_subgradient_and_oracle(self):
        f_angles = np.array([0.1, 0.9, 1.1, -0.4])
        f = img(CIRC, f_angles[:, None])
        cfg = ModelConfig("tv", alpha=0.3, p=1)
        run_c = cppa(f, build_terms(f, cfg), StepSchedule.harmonic(2.0),
                     max_sweeps=20000, rtol=0.0)
        run_s = subgradient_descent(
            lambda im: objective(im, f, cfg),
            lambda im: model_subgradient(im, f, cfg),
            f, StepSchedule.harmonic(1.0), max_iters=8000, rtol=0.0)
        oc = objective(run_c.image, f, cfg)
        os_ = objective(run_s.image, f, cfg)
        oracle, _ = circle_tv_optimum(f_angles, 0.3)
        assert oc <= oracle + 1e-2
        assert abs(oc - os_) < 1e-2
        gap = float(np.sqrt(np.sum(CIRC.dist(
            run_c.image.data, run_s.image.data) ** 2)))
        assert gap < 1e-2

    def test_euclidean_desk_problems_reach_oracle(self, rng):
        # 1x4 Hadamard desk problems: final objective within 1e-4 of the
        # grid optimum (values stay well inside (-pi, pi), so the wrapped
        # dynamic-programming oracle coincides with the Euclidean one)
        for seed in (1, 2, 3):
            local = np.random.default_rng(seed)
            f_vals = local.uniform(-1.0, 1.0, 4)
            f = img(E1, f_vals[:, None])
            cfg = ModelConfig("tv", alpha=0.3, p=1)
            run = cppa(f, build_terms(f, cfg), StepSchedule.harmonic(2.0),
                       max_sweeps=25000, rtol=0.0)
            oracle, _ = circle_tv_optimum(f_vals, 0.3)
            assert objective(run.image, f, cfg) <= oracle + 1e-4

    def test_inexact_variant_converges(self):
        f_angles = np.linspace(-0.8, 0.8, 6)
        f = img(CIRC, f_angles[:, None])
        cfg = ModelConfig("tvtv2", alpha=0.3, beta=0.6, p=1)
        exact = cppa(f, build_terms(f, cfg), StepSchedule.harmonic(2.0),
                     max_sweeps=400, inexact_eps0=None)
        inexact = cppa(f, build_terms(f, cfg), StepSchedule.harmonic(2.0),
                       max_sweeps=400, inexact_eps0=1.0)
        assert abs(exact.final_objective() - inexact.final_objective()) < 1e-3

    def test_lipschitz_note_recorded(self):
        f = img(E1, [[0.0], [1.0]])
        cfg = ModelConfig("tv", alpha=0.2, p=1)
        run = cppa(f, build_terms(f, cfg), StepSchedule.harmonic(4.0), max_sweeps=5)
        assert "satisfied by construction" in run.notes["lipschitz_condition"]

    def test_guarantee_mode_rejects_constant_schedule(self):
        f = img(E1, [[0.0], [1.0]])
        cfg = ModelConfig("tv", alpha=0.2, p=1)
        with pytest.raises(ScheduleError):
            cppa(f, build_terms(f, cfg), StepSchedule.constant(0.1),
                 guarantee_mode=True)

    def test_determinism(self):
        f_angles = np.array([0.1, 0.9, 1.1, -0.4])
        f = img(CIRC, f_angles[:, None])
        cfg = ModelConfig("tv", alpha=0.3, p=1)
        runs = [
            cppa(f, build_terms(f, cfg), StepSchedule.harmonic(2.0), max_sweeps=50)
            for _ in range(2)
        ]
        assert np.array_equal(runs[0].image.data, runs[1].image.data)
        assert runs[0].objectives == runs[1].objectives

    def test_isotropic_tv_splitting_matches_subgradient(self, rng):
        man = Euclidean(2)
        fdata = rng.normal(0, 0.7, (5, 4, 2))
        f = ManifoldImage(man, fdata)
        cfg = ModelConfig("tv", alpha=0.3, p=2)
        obj = lambda arr: objective(ManifoldImage(man, arr), f, cfg)
        run_c = cppa(f, build_terms(f, cfg), StepSchedule.harmonic(2.0),
                     max_sweeps=2500, rtol=0.0, objective_fn=obj)
        run_s = subgradient_descent(
            lambda im: objective(im, f, cfg),
            lambda im: model_subgradient(im, f, cfg),
            f, StepSchedule.harmonic(1.0), max_iters=6000, rtol=0.0)
        oc = obj(run_c.image.data)
        os_ = objective(run_s.image, f, cfg)
        assert abs(oc - os_) / oc < 2e-3

    def test_workers_do_not_change_results(self):
        f_angles = np.linspace(-1.0, 1.0, 8)
        f = img(CIRC, f_angles[:, None])
        cfg = ModelConfig("tv", alpha=0.3, p=1)
        r1 = cppa(f, build_terms(f, cfg), StepSchedule.harmonic(2.0),
                  max_sweeps=30, workers=1)
        r2 = cppa(f, build_terms(f, cfg), StepSchedule.harmonic(2.0),
                  max_sweeps=30, workers=3)
        assert np.array_equal(r1.image.data, r2.image.data)


class TestKarcherMean:
    def test_two_points_give_midpoint(self, manifold, rng):
        x, y = sample_pair(manifold, rng)
        m = karcher_arrays(manifold, np.stack([x[0], y[0]]))
        mid = manifold.geodesic(x[0], y[0], 0.5)
        assert float(manifold.dist(m, mid)) < 1e-9

    def test_circle_symmetric_triple(self):
        pts = [Point(CIRC, [a]) for a in (-0.1, 0.0, 0.1)]
        assert abs(karcher_mean(pts).coords[0]) < 1e-12

    def test_spd_diagonal_example(self):
        man = SPD(2)
        pts = [Point(man, np.array([1.0, 0, 0, 1.0])),
               Point(man, np.array([4.0, 0, 0, 1.0]))]
        m = karcher_mean(pts)
        assert np.allclose(m.coords.reshape(2, 2), np.diag([2.0, 1.0]), atol=1e-10)

    def test_weighted_mean_euclidean(self, rng):
        pts = rng.normal(0, 1, (5, 3))
        w = rng.uniform(0.2, 1.0, 5)
        m = karcher_arrays(Euclidean(3), pts, w)
        assert np.allclose(m, np.average(pts, axis=0, weights=w), atol=1e-12)

    def test_wide_sphere_inputs_warn(self):
        # north pole plus three points well below the equator: whatever local
        # mean the descent finds, some input is farther than pi/2 from it
        man = Sphere2()
        r = np.sqrt(3.0) / 2.0
        pts = [Point(man, np.array([0.0, 0.0, 1.0]))] + [
            Point(man, np.array([r * np.cos(t), r * np.sin(t), -0.5]))
            for t in (0.0, 2 * np.pi / 3, 4 * np.pi / 3)
        ]
        with pytest.warns(RuntimeWarning):
            karcher_mean(pts)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            karcher_mean([])


class TestDouglasRachford:
    def test_reflection_formula_euclidean(self):
        term = DataTerm(E1, np.array([[[1.0]]]))
        x = np.array([[[0.0]]])
        out = reflect_prox(term, 0.5, x, E1)
        p = term.apply_prox(x, 0.5)
        assert np.allclose(out, 2 * p - x)

    def test_prox_fixed_point_is_reflection_fixed_point(self, rng):
        man = SPD(2)
        a = man.random_point(rng)[None, None, :]
        term = DataTerm(man, a)
        out = reflect_prox(term, 0.7, a, man)
        assert float(man.dist(out, a).max()) < 1e-10

    def test_two_quadratics_meet_at_midpoint(self, rng):
        man = SPD(2)
        a = man.random_point(rng)[None, None, :]
        b = man.exp(a, man.random_tangent(rng, a, 0.8))
        f = ManifoldImage(man, a)
        run = douglas_rachford(f, DataTerm(man, a), DataTerm(man, b),
                               eta=0.5, max_iters=800)
        mid = man.geodesic(a, b, 0.5)
        assert float(man.dist(run.image.data, mid).max()) < 1e-6

    def test_matches_cppa_on_pair_problem(self):
        f = img(E1, [[0.0], [1.0]])
        cfg = ModelConfig("tv", alpha=0.2, p=1)
        terms = build_terms(f, cfg)
        assert len(terms) == 2
        run_dr = douglas_rachford(f, terms[0], terms[1], eta=0.35,
                                  max_iters=4000, rtol=1e-14)
        run_cp = cppa(f, terms, StepSchedule.harmonic(4.0), max_sweeps=20000,
                      rtol=1e-14)
        o_dr = objective(run_dr.image, f, cfg)
        o_cp = objective(run_cp.image, f, cfg)
        assert abs(o_dr - o_cp) < 1e-6

    def test_early_exit_at_fixed_point(self, rng):
        man = E1
        a = np.zeros((1, 1, 1))
        f = ManifoldImage(man, a)
        run = douglas_rachford(f, DataTerm(man, a), DataTerm(man, a),
                               eta=0.5, max_iters=100)
        assert run.converged
        assert run.iterations < 100

    def test_iterate_map_nonexpansive_for_distance_reflections(self, rng):
        man = SPD(2)
        y1 = man.random_point(rng)[None, None, :]
        y2 = man.random_point(rng)[None, None, :]
        phi, psi = DataTerm(man, y1), DataTerm(man, y2)
        worst = 0.0
        for _ in range(40):
            a = man.random_point(rng)[None, None, :]
            b = man.random_point(rng)[None, None, :]
            ta = reflect_prox(phi, 0.5, reflect_prox(psi, 0.5, a, man), man)
            tb = reflect_prox(phi, 0.5, reflect_prox(psi, 0.5, b, man), man)
            worst = max(worst, float(
                (man.dist(ta, tb) - man.dist(a, b)).max()))
        assert worst <= 1e-10


class TestParallelDR:
    def test_single_term_converges_to_its_prox_fixed_point(self, rng):
        man = SPD(2)
        a = man.random_point(rng)[None, None, :]
        f = ManifoldImage(man, man.exp(a, man.random_tangent(rng, a, 0.6)))
        run = parallel_douglas_rachford(f, [DataTerm(man, a)], eta=0.5,
                                        max_iters=600)
        assert float(man.dist(run.image.data, a).max()) < 1e-5

    def test_all_data_terms_converge_to_f(self, rng):
        man = SPD(2)
        fdata = man.random_point(rng, (2, 2))
        f = ManifoldImage(man, fdata)
        terms = [DataTerm(man, fdata) for _ in range(3)]
        x0 = ManifoldImage(man, man.exp(
            fdata, man.random_tangent(rng, fdata, 0.5)))
        run = parallel_douglas_rachford(f, terms, eta=0.5, max_iters=600, u0=x0)
        assert float(man.dist(run.image.data, fdata).max()) < 1e-5

    def test_curvature_caveat_flag(self, rng):
        man = SPD(2)
        fdata = man.random_point(rng, (2, 2))
        f = ManifoldImage(man, fdata)
        run = parallel_douglas_rachford(f, [DataTerm(man, fdata)], max_iters=3)
        assert "best-effort" in run.notes["pdr_regime"]

    def test_spd_tv_agreement_with_cppa(self, rng):
        man = SPD(2)
        base = man.random_point(rng)
        fdata = man.exp(
            np.broadcast_to(base, (3, 3, 4)),
            man.random_tangent(rng, np.broadcast_to(base, (3, 3, 4)), 0.35))
        f = ManifoldImage(man, fdata)
        cfg = ModelConfig("tv", alpha=0.25, p=1)
        terms = build_terms(f, cfg)
        run_p = parallel_douglas_rachford(
            f, terms, eta=0.35, max_iters=1500, rtol=1e-12,
            objective_fn=lambda arr: objective(ManifoldImage(man, arr), f, cfg))
        run_c = cppa(f, terms, StepSchedule.harmonic(4.0), max_sweeps=8000,
                     rtol=0.0,
                     objective_fn=lambda arr: objective(ManifoldImage(man, arr), f, cfg))
        op, oc = run_p.final_objective(), objective(run_c.image, f, cfg)
        assert abs(op - oc) / oc < 1e-3


class TestTgvDenoise:
    def test_reduces_objective_on_circle_signal(self):
        angles = np.array([0.0, 0.05, 0.95, 1.0, 1.05])
        f = img(CIRC, angles[:, None])
        cfg = ModelConfig("tgv", alpha=0.4, beta=0.5, p=1)
        run = tgv_denoise(f, cfg, max_outer=25)
        assert run.objectives[-1] <= run.objectives[0] + 1e-12

    def test_requires_tgv_model(self):
        with pytest.raises(ValidationError):
            tgv_denoise(img(E1, [[0.0]]), ModelConfig("tv", alpha=1.0))


class TestSolveDispatcher:
    def test_unknown_solver(self):
        f = img(E1, [[0.0]])
        with pytest.raises(ValidationError):
            solve(f, ModelConfig("tv", alpha=0.1), "nope")

    def test_dr_requires_two_terms(self):
        f = img(E1, [[0.0], [1.0], [2.0]])
        with pytest.raises(ValidationError):
            solve(f, ModelConfig("tv", alpha=0.1), "dr")

    def test_tvphi_has_no_splitting(self):
        f = img(E1, [[0.0], [1.0]])
        cfg = ModelConfig("tvphi", alpha=0.1, phi=make_phi("phi1", 0.1))
        with pytest.raises(ValidationError):
            solve(f, cfg, "cppa")

    def test_isotropic_second_order_rejected_for_cppa(self):
        f = img(E1, [[0.0], [1.0], [0.0]])
        with pytest.raises(ValidationError):
            solve(f, ModelConfig("tv2", alpha=0.1, p=2), "cppa")

    def test_tgv_rejected_for_cppa(self):
        f = img(E1, [[0.0], [1.0], [0.0]])
        with pytest.raises(ValidationError):
            solve(f, ModelConfig("tgv", alpha=0.1, beta=0.5), "cppa")
