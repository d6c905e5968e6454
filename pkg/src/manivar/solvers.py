"""Minimization algorithms: subgradient, half-quadratic, CPPA, Douglas-Rachford.

Every solver returns a :class:`SolverRun` with the final image, the
objective/iterate-change traces, and notes recording which convergence
regime applies on the image's manifold.  All solvers are deterministic; the
iterate reported back is the best-objective one seen, while the iteration
itself follows the displayed update rules exactly.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, ScheduleError, ValidationError
from .manifolds import Manifold, Point
from .models import (
    ManifoldImage,
    ModelConfig,
    TangentField,
    data_term,
    forward_differences,
    model_subgradient,
    objective as model_objective,
    tv_phi,
    tgv_terms,
)
from .prox import prox_point_arrays
from .terms import ProxTerm, apply_term_prox, build_terms, terms_objective

logger = logging.getLogger(__name__)

#: stopping rule: relative objective change below this ...
STOP_RTOL = 1e-8
#: ... for this many consecutive sweeps
STOP_PATIENCE = 5


# ------------------------------------------------------------------ schedules


@dataclass(frozen=True)
class StepSchedule:
    """Step-size or relaxation sequence for the iterative solvers.

    ``harmonic(tau0)`` gives tau_r = tau0 / (r + 1), which is square-summable
    but not summable (the class the diminishing-step convergence theorems
    require); ``constant`` and ``custom`` schedules are accepted only in
    best-effort mode, with a logged warning that the guarantees lapse.
    """

    kind: str
    tau0: float | None = None
    tau: float | None = None
    values: tuple[float, ...] | None = None

    @staticmethod
    def harmonic(tau0: float) -> "StepSchedule":
        if not tau0 > 0:
            raise ScheduleError("--tau0 must be positive")
        return StepSchedule("harmonic", tau0=float(tau0))

    @staticmethod
    def constant(tau: float) -> "StepSchedule":
        if not tau > 0:
            raise ScheduleError("constant step must be positive")
        return StepSchedule("constant", tau=float(tau))

    @staticmethod
    def custom(values) -> "StepSchedule":
        values = tuple(float(v) for v in values)
        if not values or any(v < 0 for v in values):
            raise ScheduleError("custom schedule needs non-negative entries")
        return StepSchedule("custom", values=values)

    def step(self, r: int) -> float:
        if self.kind == "harmonic":
            return self.tau0 / (r + 1.0)
        if self.kind == "constant":
            return self.tau
        return self.values[min(r, len(self.values) - 1)]

    @property
    def in_ell2_not_ell1(self) -> bool:
        """True only for schedules provably in l^2 \\ l^1 (harmonic)."""
        return self.kind == "harmonic"

    @property
    def dr_divergence_ok(self) -> bool:
        """Whether sum tau_r (1 - tau_r) provably diverges."""
        if self.kind == "harmonic":
            return True
        if self.kind == "constant":
            return 0.0 < self.tau < 1.0
        return False


def validate_schedule(schedule: StepSchedule, context: str,
                      guarantee_mode: bool) -> str:
    """Check the schedule against the algorithm's convergence requirement.

    context "diminishing" needs l^2 \\ l^1 (subgradient, CPPA); context "dr"
    needs a divergent sum tau_r(1 - tau_r).  Returns a note string.
    """
    ok = schedule.in_ell2_not_ell1 if context == "diminishing" else schedule.dr_divergence_ok
    if ok:
        return "schedule satisfies the convergence requirement"
    msg = (
        f"{schedule.kind} schedule violates the "
        + ("l2-minus-l1 requirement" if context == "diminishing"
           else "divergent relaxation-sum requirement")
    )
    if guarantee_mode:
        raise ScheduleError(msg)
    logger.warning("%s; convergence guarantees lapse (best-effort mode)", msg)
    return msg + "; running best-effort"


# ------------------------------------------------------------------- results


@dataclass
class SolverRun:
    """Outcome of one solver invocation, with its iteration trace."""

    solver: str
    image: ManifoldImage
    objectives: list[float] = field(default_factory=list)
    changes: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    stop_reason: str = ""
    notes: dict = field(default_factory=dict)

    def final_objective(self) -> float:
        return self.objectives[-1] if self.objectives else float("nan")


def _image_change(man: Manifold, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.sum(man.dist(a, b) ** 2)))


def _regime_notes(man: Manifold) -> dict:
    notes = {}
    if man.has_nonnegative_curvature:
        notes["subgradient_regime"] = "non-negative curvature: convergence theorem applies"
    elif man.is_hadamard:
        notes["subgradient_regime"] = (
            "curvature bounded below: convergence only for bounded iterates"
        )
    else:
        notes["subgradient_regime"] = "no convergence claim for this manifold"
    notes["cppa_regime"] = (
        "Hadamard manifold: CPPA convergence theorem applies"
        if man.is_hadamard
        else "not Hadamard: CPPA runs best-effort"
    )
    notes["pdr_regime"] = (
        "constant non-positive curvature: parallel DR convergence applies"
        if man.is_hadamard and man.has_constant_curvature
        else "parallel DR runs best-effort (diagonal reflection may expand)"
    )
    return notes


class _Stopper:
    """Relative objective stall over a patience window."""

    def __init__(self, rtol: float = STOP_RTOL, patience: int = STOP_PATIENCE):
        self.rtol = rtol
        self.patience = patience
        self.prev = None
        self.count = 0

    def update(self, value: float) -> bool:
        if self.prev is not None:
            denom = max(abs(self.prev), 1e-300)
            if abs(value - self.prev) / denom < self.rtol:
                self.count += 1
            else:
                self.count = 0
        self.prev = value
        return self.count >= self.patience


# --------------------------------------------------------------- subgradient


def subgradient_descent(objective_fn, subgrad_fn, x0: ManifoldImage,
                        schedule: StepSchedule, *, max_iters: int = 1000,
                        guarantee_mode: bool = False,
                        rtol: float = STOP_RTOL) -> SolverRun:
    """Normalized-step subgradient iteration x <- exp_x(-tau_r s / |s|).

    A zero subgradient certifies a global minimizer of a convex objective
    and stops the iteration immediately.
    """
    man = x0.manifold
    note = validate_schedule(schedule, "diminishing", guarantee_mode)
    u = x0.data.copy()
    run = SolverRun("subgradient", x0, notes=_regime_notes(man))
    run.notes["schedule"] = note
    run.notes["schedule_params"] = schedule
    best_obj = objective_fn(ManifoldImage(man, u))
    best = u.copy()
    stopper = _Stopper(rtol)
    for r in range(max_iters):
        img = ManifoldImage(man, u)
        s = subgrad_fn(img)
        norm = float(np.sqrt(np.sum(man.inner(u, s, s))))
        obj = objective_fn(img)
        run.objectives.append(obj)
        if obj < best_obj:
            best_obj, best = obj, u.copy()
        if norm == 0.0:
            run.changes.append(0.0)
            run.iterations = r + 1
            run.converged = True
            run.stop_reason = "zero subgradient (global minimizer condition)"
            break
        step = schedule.step(r)
        new = man.exp(u, -(step / norm) * s)
        run.changes.append(_image_change(man, u, new))
        u = new
        run.iterations = r + 1
        if stopper.update(obj):
            run.converged = True
            run.stop_reason = "objective stalled"
            break
    else:
        run.stop_reason = "max iterations"
    run.image = ManifoldImage(man, best)
    return run


# ------------------------------------------------------------ half-quadratic


def _hq_weights(man, d, p, phi):
    """Half-quadratic weights: per pixel (isotropic) or per edge (anisotropic)."""
    if p == 2:
        dx = man.dist(d[:-1, :], d[1:, :]) if d.shape[0] > 1 else None
        dy = man.dist(d[:, :-1], d[:, 1:]) if d.shape[1] > 1 else None
        agg = np.zeros(d.shape[:2])
        if dx is not None:
            agg[:-1, :] += dx**2
        if dy is not None:
            agg[:, :-1] += dy**2
        return {"pixel": phi.weight(np.sqrt(agg))}
    out = {}
    if d.shape[0] > 1:
        out["x"] = phi.weight(man.dist(d[:-1, :], d[1:, :]))
    if d.shape[1] > 1:
        out["y"] = phi.weight(man.dist(d[:, :-1], d[:, 1:]))
    return out


def _hq_quadratic_grad(man, d, f, alpha, p, weights):
    """Gradient of the weighted quadratic surrogate in the image variable."""
    grad = -man.log(d, f)
    if p == 2:
        v = weights["pixel"]
        if d.shape[0] > 1:
            w = v[:-1, :][..., None]
            grad[:-1, :] += -2.0 * alpha * w * man.log(d[:-1, :], d[1:, :])
            grad[1:, :] += -2.0 * alpha * w * man.log(d[1:, :], d[:-1, :])
        if d.shape[1] > 1:
            w = v[:, :-1][..., None]
            grad[:, :-1] += -2.0 * alpha * w * man.log(d[:, :-1], d[:, 1:])
            grad[:, 1:] += -2.0 * alpha * w * man.log(d[:, 1:], d[:, :-1])
        return grad
    if "x" in weights:
        w = weights["x"][..., None]
        grad[:-1, :] += -2.0 * alpha * w * man.log(d[:-1, :], d[1:, :])
        grad[1:, :] += -2.0 * alpha * w * man.log(d[1:, :], d[:-1, :])
    if "y" in weights:
        w = weights["y"][..., None]
        grad[:, :-1] += -2.0 * alpha * w * man.log(d[:, :-1], d[:, 1:])
        grad[:, 1:] += -2.0 * alpha * w * man.log(d[:, 1:], d[:, :-1])
    return grad


def _hq_quadratic_value(man, d, f, alpha, p, weights):
    val = 0.5 * float(np.sum(man.dist(d, f) ** 2))
    if p == 2:
        v = weights["pixel"]
        if d.shape[0] > 1:
            val += 2.0 * alpha * float(np.sum(v[:-1, :] * 0.5
                                              * man.dist(d[:-1, :], d[1:, :]) ** 2))
        if d.shape[1] > 1:
            val += 2.0 * alpha * float(np.sum(v[:, :-1] * 0.5
                                              * man.dist(d[:, :-1], d[:, 1:]) ** 2))
        return val
    if "x" in weights:
        val += alpha * float(np.sum(weights["x"] * man.dist(d[:-1, :], d[1:, :]) ** 2))
    if "y" in weights:
        val += alpha * float(np.sum(weights["y"] * man.dist(d[:, :-1], d[:, 1:]) ** 2))
    return val


def half_quadratic(f: ManifoldImage, config: ModelConfig, *,
                   max_outer: int = 200, inner_steps: int = 20,
                   rtol: float = STOP_RTOL, x0: ManifoldImage | None = None) -> SolverRun:
    """Alternating weight/image minimization of the smoothed TV objective.

    The weight update is the closed-form minimizer s(t); the image update
    runs a fixed budget of warm-started Armijo gradient steps on the
    weighted quadratic.  The smoothed objective is non-increasing across
    outer iterations; any increase beyond 1e-12 signals an implementation
    bug and raises ConvergenceError.
    """
    if config.model != "tvphi" or config.phi is None:
        raise ValidationError("half-quadratic minimization needs the tvphi model")
    man = f.manifold
    phi, alpha, p = config.phi, config.alpha, config.p
    u = (x0.data if x0 is not None else f.data).copy()
    run = SolverRun("hq", f, notes=_regime_notes(man))
    run.notes["hq_convergence"] = (
        "Hadamard manifold: converges to the unique minimizer"
        if man.is_hadamard else "non-Hadamard manifold: monotone best-effort"
    )

    def smoothed(uarr):
        img = ManifoldImage(man, uarr)
        return data_term(img, f) + alpha * tv_phi(img, phi, p)

    obj = smoothed(u)
    run.objectives.append(obj)
    stopper = _Stopper(rtol)
    for r in range(max_outer):
        weights = _hq_weights(man, u, p, phi)
        # inner: Armijo gradient descent on the weighted quadratic
        qval = _hq_quadratic_value(man, u, f.data, alpha, p, weights)
        for _ in range(inner_steps):
            g = _hq_quadratic_grad(man, u, f.data, alpha, p, weights)
            gsq = float(np.sum(man.inner(u, g, g)))
            if np.sqrt(gsq) <= 1e-12:
                break
            t = 1.0
            for _ in range(40):
                cand = man.exp(u, -t * g)
                cval = _hq_quadratic_value(man, cand, f.data, alpha, p, weights)
                if cval <= qval - 1e-4 * t * gsq:
                    u, qval = cand, cval
                    break
                t *= 0.5
            else:
                break
        new_obj = smoothed(u)
        run.changes.append(abs(new_obj - obj))
        if new_obj > obj + 1e-12:
            raise ConvergenceError(
                f"half-quadratic objective increased by {new_obj - obj:.3e}"
            )
        run.objectives.append(new_obj)
        run.iterations = r + 1
        if stopper.update(new_obj):
            run.converged = True
            run.stop_reason = "objective stalled"
            break
        obj = new_obj
    else:
        run.stop_reason = "max outer iterations"
    run.image = ManifoldImage(man, u)
    return run


# --------------------------------------------------------------------- CPPA


def cppa(f: ManifoldImage, terms: list[ProxTerm], schedule: StepSchedule, *,
         max_sweeps: int = 500, rtol: float = STOP_RTOL,
         x0: ManifoldImage | None = None, guarantee_mode: bool = False,
         workers: int = 1, inexact_eps0: float | None = 1.0,
         objective_fn=None) -> SolverRun:
    """Cyclic proximal point iteration over the term splitting.

    Numerical proxes run the inexact variant by default: inner tolerance
    eps_r / K with eps_r = eps0 / (r+1)^2, a summable sequence (the
    gradient-norm threshold stands in for the unobservable distance to the
    exact prox).  Pass ``inexact_eps0=None`` to force every inner prox to
    full tolerance.  The Lipschitz-type growth condition of the convergence
    theorem holds by construction for distance-based terms and is recorded
    as such.
    """
    man = f.manifold
    note = validate_schedule(schedule, "diminishing", guarantee_mode)
    u = (x0.data if x0 is not None else f.data).copy()
    run = SolverRun("cppa", f, notes=_regime_notes(man))
    run.notes["schedule"] = note
    run.notes["schedule_params"] = schedule
    run.notes["inexact_eps0"] = inexact_eps0
    run.notes["lipschitz_condition"] = (
        "satisfied by construction: all terms are distance-based"
    )
    if objective_fn is None:
        objective_fn = lambda arr: terms_objective(terms, arr)
    best_obj = objective_fn(u)
    best = u.copy()
    stopper = _Stopper(rtol)
    k_total = len(terms)
    for r in range(max_sweeps):
        lam = schedule.step(r)
        inner_tol = (max(inexact_eps0 / ((r + 1.0) ** 2) / k_total, 1e-8)
                     if inexact_eps0 is not None else None)
        prev = u
        for k, term in enumerate(terms):
            u = apply_term_prox(term, u, lam, k, workers=workers, inner_tol=inner_tol)
        obj = objective_fn(u)
        run.objectives.append(obj)
        run.changes.append(_image_change(man, prev, u))
        if obj < best_obj:
            best_obj, best = obj, u.copy()
        run.iterations = r + 1
        if stopper.update(obj):
            run.converged = True
            run.stop_reason = "objective stalled"
            break
    else:
        run.stop_reason = "max sweeps"
    run.image = ManifoldImage(man, best)
    return run


# ------------------------------------------------------------- Karcher mean


def karcher_arrays(man: Manifold, points: np.ndarray, weights=None, *,
                   grad_tol: float = 1e-10, max_iters: int = 1000) -> np.ndarray:
    """Weighted Karcher mean of points stacked along axis 0; batched.

    Gradient descent on sum_k w_k dist^2(., x_k) with the natural unit step
    (the log-mean update) until the gradient norm falls below ``grad_tol``.
    """
    points = np.asarray(points, float)
    k = points.shape[0]
    if weights is None:
        weights = np.full(k, 1.0 / k)
    else:
        weights = np.asarray(weights, float)
        if weights.shape != (k,) or np.any(weights < 0) or weights.sum() <= 0:
            raise ValidationError("weights must be non-negative with positive sum")
    total = float(weights.sum())
    wbar = (weights / total).reshape((k,) + (1,) * (points.ndim - 1))
    m = points[0].copy()
    for _ in range(max_iters):
        logs = man.log(np.broadcast_to(m, points.shape), points)
        mean_log = np.sum(wbar * logs, axis=0)
        # gradient of the weighted sum is -2 * total * mean_log
        gnorm = 2.0 * total * np.sqrt(np.max(man.inner(m, mean_log, mean_log)))
        if gnorm <= grad_tol:
            return m
        m = man.exp(m, mean_log)
    raise ConvergenceError(
        f"Karcher mean did not reach gradient norm {grad_tol:g} "
        f"within {max_iters} iterations"
    )


def karcher_mean(points, weights=None) -> Point:
    """Weighted Karcher mean of a list of points on one manifold.

    On Hadamard manifolds the mean is unique.  On compact manifolds the
    inputs should lie in a geodesic ball of radius < pi/2; otherwise a
    non-uniqueness warning is attached to the (still computed) local mean.
    """
    points = list(points)
    if not points:
        raise ValidationError("Karcher mean of an empty set")
    man = points[0].manifold
    if any(p.manifold != man for p in points):
        raise ValidationError("Karcher mean needs a single manifold tag")
    stack = np.stack([p.coords for p in points])
    m = karcher_arrays(man, stack, weights)
    if not man.is_hadamard:
        radius = float(np.max(man.dist(np.broadcast_to(m, stack.shape), stack)))
        if radius >= np.pi / 2:
            warnings.warn(
                "Karcher mean inputs exceed a geodesic ball of radius pi/2; "
                "the mean may not be unique",
                RuntimeWarning,
            )
    return Point(man, m)


# --------------------------------------------------------- Douglas-Rachford


def reflect_prox(term: ProxTerm, eta: float, x: np.ndarray, man: Manifold,
                 workers: int = 1) -> np.ndarray:
    """Geodesic reflection at a term's prox: exp_p(-log_p(x)), p = prox(x)."""
    p = term.apply_prox(x, eta, workers=workers)
    return man.reflect(p, x)


def douglas_rachford(f: ManifoldImage, phi: ProxTerm, psi: ProxTerm, *,
                     eta: float = 0.35,
                     schedule: StepSchedule | None = None,
                     max_iters: int = 2000, rtol: float = STOP_RTOL,
                     t0: ManifoldImage | None = None,
                     guarantee_mode: bool = False, workers: int = 1) -> SolverRun:
    """Two-block Douglas-Rachford on t <- gamma(t, R_phi(R_psi(t)); tau_r).

    The returned image is prox_{eta psi} of the final auxiliary iterate (the
    prox is evaluated along the way only to trace the objective).
    """
    if not eta > 0:
        raise ValidationError("--eta must be positive")
    man = f.manifold
    schedule = schedule or StepSchedule.constant(0.9)
    note = validate_schedule(schedule, "dr", guarantee_mode)
    t = (t0.data if t0 is not None else f.data).copy()
    run = SolverRun("dr", f, notes=_regime_notes(man))
    run.notes["schedule"] = note
    run.notes["schedule_params"] = schedule
    run.notes["eta"] = eta
    stopper = _Stopper(rtol)
    for r in range(max_iters):
        s = reflect_prox(phi, eta, reflect_prox(psi, eta, t, man, workers), man, workers)
        tau = schedule.step(r)
        new = man.geodesic(t, s, tau)
        change = _image_change(man, t, new)
        t = new
        x = psi.apply_prox(t, eta, workers=workers)
        obj = phi.value(x) + psi.value(x)
        run.objectives.append(obj)
        run.changes.append(change)
        run.iterations = r + 1
        if change < 1e-12:
            run.converged = True
            run.stop_reason = "fixed point reached"
            break
        if stopper.update(obj):
            run.converged = True
            run.stop_reason = "objective stalled"
            break
    else:
        run.stop_reason = "max iterations"
    run.image = ManifoldImage(man, psi.apply_prox(t, eta, workers=workers))
    return run


def parallel_douglas_rachford(f: ManifoldImage, terms: list[ProxTerm], *,
                              eta: float = 0.35,
                              schedule: StepSchedule | None = None,
                              max_iters: int = 2000, rtol: float = STOP_RTOL,
                              u0: ManifoldImage | None = None,
                              guarantee_mode: bool = False,
                              workers: int = 1,
                              objective_fn=None) -> SolverRun:
    """Product-space Douglas-Rachford over K stacked copies of the image.

    Alternates the reflection at the diagonal (pixelwise Karcher mean of the
    K copies, then pointwise geodesic reflection through it) with the
    separable reflections at the terms; the output is the diagonal
    projection (Karcher mean) of the final stack.  Convergence theory covers
    constant non-positive curvature only; elsewhere the run carries a
    best-effort note.
    """
    if not terms:
        raise ValidationError("parallel DR needs at least one term")
    if not eta > 0:
        raise ValidationError("--eta must be positive")
    man = f.manifold
    schedule = schedule or StepSchedule.constant(0.9)
    note = validate_schedule(schedule, "dr", guarantee_mode)
    k = len(terms)
    base = (u0.data if u0 is not None else f.data).copy()
    stack = np.broadcast_to(base, (k,) + base.shape).copy()
    run = SolverRun("pdr", f, notes=_regime_notes(man))
    run.notes["schedule"] = note
    run.notes["schedule_params"] = schedule
    run.notes["eta"] = eta
    if objective_fn is None:
        objective_fn = lambda arr: terms_objective(terms, arr)
    stopper = _Stopper(rtol)
    for r in range(max_iters):
        mean = karcher_arrays(man, stack)
        refl_d = man.reflect(np.broadcast_to(mean, stack.shape), stack)
        refl_phi = np.stack([
            reflect_prox(term, eta, refl_d[i], man, workers)
            for i, term in enumerate(terms)
        ])
        tau = schedule.step(r)
        new = man.geodesic(stack, refl_phi, tau)
        change = _image_change(man, stack.reshape(-1, base.shape[-1]),
                               new.reshape(-1, base.shape[-1]))
        stack = new
        x = karcher_arrays(man, stack)
        obj = objective_fn(x)
        run.objectives.append(obj)
        run.changes.append(change)
        run.iterations = r + 1
        if change < 1e-12:
            run.converged = True
            run.stop_reason = "fixed point reached"
            break
        if stopper.update(obj):
            run.converged = True
            run.stop_reason = "objective stalled"
            break
    else:
        run.stop_reason = "max iterations"
    run.image = ManifoldImage(man, karcher_arrays(man, stack))
    return run


# ---------------------------------------------------- TGV denoising (alternating)


def tgv_denoise(f: ManifoldImage, config: ModelConfig, *,
                schedule: StepSchedule | None = None,
                max_outer: int = 60, u_steps: int = 12,
                xi_sweeps: int = 40, rtol: float = 1e-7,
                x0: ManifoldImage | None = None) -> SolverRun:
    """Alternating minimization of data + alpha * (beta R1 + (1-beta) R2).

    The field step is the convex tangent-space proximal sweep of the TGV
    evaluator (warm-started).  The image step freezes the field (R2's
    dependence on the image through the transports is frozen too, exact on
    flat manifolds): on flat manifolds it is a proximal sweep with exact
    shifted-pair shrinkages, on curved ones normalized subgradient steps on
    the data + R1 coupling, after which the field is parallel-transported
    to the new base points.
    """
    from .models import (
        _field_coords, _field_from_coords, _transport_matrices, _tgv_sweep,
    )
    if config.model != "tgv":
        raise ValidationError("tgv_denoise needs the tgv model")
    man = f.manifold
    beta, alpha, p = config.beta, config.alpha, config.p
    if schedule is None:
        # normalized steps move the whole image by tau_r in the product
        # metric, so the scale grows with the pixel count
        schedule = StepSchedule.harmonic(0.2 * np.sqrt(f.n1 * f.n2))
    u = (x0.data if x0 is not None else f.data).copy()
    run = SolverRun("tgv", f, notes=_regime_notes(man))
    run.notes["tgv_scheme"] = (
        "alternating field/image steps; image step freezes the field "
        "(exact on flat manifolds)"
    )
    xi_coords = None
    stopper = _Stopper(rtol)
    step_index = 0
    for outer in range(max_outer):
        img = ManifoldImage(man, u)
        basis = man.basis(u)
        grad = forward_differences(img)
        g = [
            _field_coords(man, u, basis, grad.xi1),
            _field_coords(man, u, basis, grad.xi2),
        ]
        q_ax = [_transport_matrices(man, u, basis, 0),
                _transport_matrices(man, u, basis, 1)]
        if xi_coords is None:
            xi_coords = [np.zeros(u.shape[:2] + (man.dim,)) for _ in range(2)]
        for s in range(xi_sweeps):
            _tgv_sweep(xi_coords, g, q_ax, beta, p, 2.0 / (s + 1.0), u.shape[:2])
        field = TangentField(
            img,
            _field_from_coords(xi_coords[0], basis),
            _field_from_coords(xi_coords[1], basis),
        )
        if man.is_flat:
            u = _tgv_u_sweeps_flat(man, u, f.data, xi_coords, alpha * beta,
                                   u_steps, outer)
            img = ManifoldImage(man, u)
            field = TangentField(
                img,
                _field_from_coords(xi_coords[0], basis),
                _field_from_coords(xi_coords[1], basis),
            )
        else:
            for _ in range(u_steps):
                img = ManifoldImage(man, u)
                s_data = -man.log(u, f.data)
                s_r1 = _r1_subgradient(man, img, field)
                s_total = s_data + alpha * beta * s_r1
                norm = float(np.sqrt(np.sum(man.inner(u, s_total, s_total))))
                if norm == 0.0:
                    break
                tau = schedule.step(step_index)
                step_index += 1
                new_u = man.exp(u, -(tau / norm) * s_total)
                # drag the field to the new base points
                new_xi1 = man.transport(u, new_u, field.xi1)
                new_xi2 = man.transport(u, new_u, field.xi2)
                u = new_u
                img = ManifoldImage(man, u)
                field = TangentField(img, new_xi1, new_xi2)
            basis = man.basis(u)
            xi_coords = [
                _field_coords(man, u, basis, field.xi1),
                _field_coords(man, u, basis, field.xi2),
            ]
        img = ManifoldImage(man, u)
        r1, r2 = tgv_terms(img, field, p)
        obj = data_term(img, f) + alpha * (beta * r1 + (1.0 - beta) * r2)
        run.objectives.append(obj)
        run.changes.append(0.0 if not run.objectives[:-1]
                           else abs(run.objectives[-2] - obj))
        run.iterations = outer + 1
        if stopper.update(obj):
            run.converged = True
            run.stop_reason = "objective stalled"
            break
    else:
        run.stop_reason = "max outer iterations"
    run.image = ManifoldImage(man, u)
    return run


def _tgv_u_sweeps_flat(man, u, fdata, xi_coords, weight, sweeps, outer):
    """Proximal image step on flat manifolds: data shrinkage plus exact
    shifted-pair shrinkages of |forward difference - field| per edge batch.

    On flat charts tangent coordinates coincide with chart differences, so
    the residual prox moves both edge endpoints along the residual direction
    by min(lambda, |residual| / 2).
    """
    out = u.copy()
    for s in range(sweeps):
        lam = 4.0 / (outer * sweeps + s + 1.0)
        out = prox_point_arrays(man, out, fdata, lam, p=2)
        for axis in (0, 1):
            n = out.shape[axis]
            if n < 2:
                continue
            xi = xi_coords[axis]
            for parity in (0, 1):
                idx = np.arange(parity, n - 1, 2)
                if idx.size == 0:
                    continue
                if axis == 0:
                    a, b, c = out[idx], out[idx + 1], xi[idx]
                else:
                    a, b, c = out[:, idx], out[:, idx + 1], xi[:, idx]
                r = man._log(a, b) - c
                nrm = np.linalg.norm(r, axis=-1, keepdims=True)
                m = np.where(nrm > 0,
                             np.minimum(lam * weight, 0.5 * nrm), 0.0)
                unit = np.where(nrm > 0, r / np.where(nrm > 0, nrm, 1.0), 0.0)
                na = man.exp(a, m * unit)
                nb = man.exp(b, -m * unit)
                if axis == 0:
                    out[idx], out[idx + 1] = na, nb
                else:
                    out[:, idx], out[:, idx + 1] = na, nb
    return out


def _r1_subgradient(man, img: ManifoldImage, field: TangentField) -> np.ndarray:
    """Subgradient in u of sum_i |grad u_i - xi_i| with xi frozen.

    Uses the Jacobi adjoints of the log map in both of its arguments (the
    residual's unit vector pulled back through LOG_BASE at the pixel and
    LOG_ARG at its neighbor).
    """
    from .calculus import (
        Case, CoefficientCase, adjoint_differential_arrays,
    )

    u = img.data
    grad = forward_differences(img)
    out = man.zero_tangent(u)
    for axis, comp in ((0, (grad.xi1, field.xi1)), (1, (grad.xi2, field.xi2))):
        g, xi = comp
        r = g - xi
        norms = man.norm(u, r)
        pos = norms > 0
        unit = np.where(pos[..., None], r / np.where(pos, norms, 1.0)[..., None], 0.0)
        if axis == 0:
            if u.shape[0] < 2:
                continue
            sl_i, sl_j = np.s_[:-1, :], np.s_[1:, :]
        else:
            if u.shape[1] < 2:
                continue
            sl_i, sl_j = np.s_[:, :-1], np.s_[:, 1:]
        x_i, x_j, w = u[sl_i], u[sl_j], unit[sl_i]
        out[sl_i] += adjoint_differential_arrays(
            man, CoefficientCase(Case.LOG_BASE), x_i, x_j, w
        )
        out[sl_j] += adjoint_differential_arrays(
            man, CoefficientCase(Case.LOG_ARG), x_j, x_i, w
        )
        # boundary pixels contribute nothing: their zero forward difference
        # leaves a residual that is constant in u under the frozen field
    return out


# --------------------------------------------------------------- dispatcher


def solve(f: ManifoldImage, config: ModelConfig, solver: str, *,
          schedule: StepSchedule | None = None, eta: float = 0.35,
          max_iters: int | None = None, workers: int = 1,
          x0: ManifoldImage | None = None) -> SolverRun:
    """Route a model/solver combination to its implementation."""
    if solver == "subgradient":
        if config.model == "tgv":
            return tgv_denoise(f, config, schedule=schedule,
                               max_outer=max_iters or 60, x0=x0)
        sched = schedule or StepSchedule.harmonic(4.0)
        return subgradient_descent(
            lambda img: model_objective(img, f, config),
            lambda img: model_subgradient(img, f, config),
            x0 or f, sched, max_iters=max_iters or 1000)
    if solver == "hq":
        return half_quadratic(f, config, max_outer=max_iters or 200, x0=x0)
    if solver == "cppa":
        terms = build_terms(f, config)
        sched = schedule or StepSchedule.harmonic(4.0)
        return cppa(f, terms, sched, max_sweeps=max_iters or 500,
                    workers=workers, x0=x0,
                    objective_fn=lambda arr: model_objective(
                        ManifoldImage(f.manifold, arr), f, config))
    if solver == "dr":
        terms = build_terms(f, config)
        if len(terms) != 2:
            raise ValidationError(
                f"--solver dr needs a two-term splitting, got {len(terms)}; "
                "use --solver pdr"
            )
        return douglas_rachford(f, terms[0], terms[1], eta=eta,
                                schedule=schedule, max_iters=max_iters or 2000,
                                workers=workers, t0=x0)
    if solver == "pdr":
        terms = build_terms(f, config)
        return parallel_douglas_rachford(
            f, terms, eta=eta, schedule=schedule,
            max_iters=max_iters or 2000, workers=workers, u0=x0,
            objective_fn=lambda arr: model_objective(
                ManifoldImage(f.manifold, arr), f, config))
    if solver == "tgv":
        return tgv_denoise(f, config, schedule=schedule,
                           max_outer=max_iters or 60, x0=x0)
    raise ValidationError(
        f"--solver must be one of subgradient, hq, cppa, dr, pdr; got {solver!r}"
    )
