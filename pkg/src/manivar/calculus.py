"""Differentials of geodesic maps via Jacobi frames, and transport ladders.

The differential of the exponential map, the logarithm (in both arguments),
geodesic evaluation (in both endpoints) and the tangent-argument exponential
all share one structure on symmetric spaces: expand the input in a parallel
orthonormal frame that diagonalizes the curvature operator along the
connecting geodesic, scale each coefficient by a trigonometric quotient of
the curvature eigenvalue, and read the result off the frame transported to a
case-dependent geodesic parameter T.  Eigenvalues are scaled by the squared
geodesic length so the geodesic always runs over the unit interval.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import (
    CutLocusError,
    DegenerateGeodesicError,
    SingularCoefficientError,
    TagMismatchError,
)
from .manifolds import Manifold, Point, TangentVector

#: below this magnitude the coefficient maps switch to their series expansion
SERIES_ATOL = 1e-8
#: sin(sqrt(kappa)) denominators below this raise SingularCoefficientError
POLE_ATOL = 1e-12


class Case(enum.Enum):
    """Which geodesic map is being differentiated."""

    EXP_BASE = "exp_base"      # x  ->  exp_x(u),        u fixed
    LOG_BASE = "log_base"      # x  ->  log_x(y),        y fixed
    LOG_ARG = "log_arg"        # x  ->  log_y(x),        y fixed
    GEO_FIRST = "geo_first"    # x  ->  gamma(x, y; tau)
    GEO_SECOND = "geo_second"  # x  ->  gamma(y, x; tau)
    EXP_ARG = "exp_arg"        # u  ->  exp_x(u),        x fixed


@dataclass(frozen=True)
class CoefficientCase:
    """A Lemma-style coefficient case, with tau for the geodesic cases."""

    kind: Case
    tau: float | None = None

    def __post_init__(self):
        geo = self.kind in (Case.GEO_FIRST, Case.GEO_SECOND)
        if geo and (self.tau is None or not 0.0 <= self.tau <= 1.0):
            raise TagMismatchError("geodesic cases need tau in [0, 1]")
        if not geo and self.tau is not None:
            raise TagMismatchError(f"case {self.kind} takes no tau")

    @property
    def output_time(self) -> float:
        """Geodesic parameter T at which the differential's output lives."""
        if self.kind == Case.LOG_BASE:
            return 0.0
        if self.kind == Case.GEO_FIRST:
            return self.tau
        if self.kind == Case.GEO_SECOND:
            return 1.0 - self.tau
        return 1.0


def _check_poles(kind: Case, kappa) -> None:
    needs_sin = kind in (Case.LOG_BASE, Case.LOG_ARG, Case.GEO_FIRST, Case.GEO_SECOND)
    if not needs_sin:
        return
    pos = kappa > SERIES_ATOL
    if np.any(pos):
        s = np.abs(np.sin(np.sqrt(np.where(pos, kappa, 1.0))))
        if np.any(pos & (s < POLE_ATOL)):
            raise SingularCoefficientError(
                f"sin(sqrt(kappa)) vanishes in the {kind.value} coefficient"
            )


def alpha(case: CoefficientCase, kappa) -> np.ndarray:
    """Coefficient map of the given case, continuous at kappa = 0.

    Negative curvature gives the hyperbolic branches, positive the circular
    ones; |kappa| < 1e-8 is evaluated by a quadratic series so the map stays
    smooth through zero.
    """
    kappa = np.asarray(kappa, float)
    _check_poles(case.kind, kappa)
    small = np.abs(kappa) < SERIES_ATOL
    k = np.where(small, 0.0, kappa)
    neg, pos = k < 0, k > 0
    sn, sp = np.sqrt(np.where(neg, -k, 1.0)), np.sqrt(np.where(pos, k, 1.0))
    out = np.empty_like(kappa)

    if case.kind == Case.EXP_BASE:
        out[...] = 1.0 - kappa / 2.0 + kappa**2 / 24.0
        out = np.where(neg, np.cosh(sn), out)
        out = np.where(pos, np.cos(sp), out)
    elif case.kind == Case.LOG_BASE:
        out[...] = -(1.0 - kappa / 3.0 - kappa**2 / 45.0)
        out = np.where(neg, -sn * np.cosh(sn) / np.sinh(sn), out)
        out = np.where(pos, -sp * np.cos(sp) / np.sin(sp), out)
    elif case.kind == Case.LOG_ARG:
        out[...] = 1.0 + kappa / 6.0 + 7.0 * kappa**2 / 360.0
        out = np.where(neg, sn / np.sinh(sn), out)
        out = np.where(pos, sp / np.sin(sp), out)
    elif case.kind in (Case.GEO_FIRST, Case.GEO_SECOND):
        a = (1.0 - case.tau) if case.kind == Case.GEO_FIRST else case.tau
        out[...] = a * (1.0 + kappa * (1.0 - a * a) / 6.0)
        out = np.where(neg, np.sinh(a * sn) / np.sinh(sn), out)
        out = np.where(pos, np.sin(a * sp) / np.sin(sp), out)
    elif case.kind == Case.EXP_ARG:
        out[...] = 1.0 - kappa / 6.0 + kappa**2 / 120.0
        out = np.where(neg, np.sinh(sn) / sn, out)
        out = np.where(pos, np.sin(sp) / sp, out)
    else:  # pragma: no cover
        raise TagMismatchError(f"unknown case {case.kind}")
    return out


# -------------------------------------------------------------------- frames


@dataclass(frozen=True)
class JacobiFrame:
    """Curvature eigen-frame along the unit-interval geodesic x -> y.

    ``vectors[k]`` is the k-th orthonormal frame vector at x (velocity
    direction first), ``kappas[k]`` the matching curvature-operator
    eigenvalue scaled by the squared geodesic length.
    """

    x: Point
    y: Point
    vectors: tuple[TangentVector, ...]
    kappas: np.ndarray

    @property
    def manifold(self) -> Manifold:
        return self.x.manifold


def jacobi_frame(x: Point, y: Point) -> JacobiFrame:
    """Construct the Jacobi frame; rejects coincident and cut-locus pairs."""
    if x.manifold != y.manifold:
        raise TagMismatchError("frame endpoints live on different manifolds")
    man = x.manifold
    if np.any(man.cut_mask(x.coords, y.coords)):
        raise CutLocusError(f"frame endpoint lies in the cut locus on {man}")
    if float(man.dist(x.coords, y.coords)) == 0.0:
        raise DegenerateGeodesicError("coincident endpoints admit no frame")
    vecs, kaps = man.frame(x.coords, y.coords)
    vectors = tuple(TangentVector(x, vecs[k]) for k in range(man.dim))
    return JacobiFrame(x, y, vectors, kaps)


# ----------------------------------------------------- array-level kernels


def differential_arrays(
    man: Manifold, case: CoefficientCase, x, y, xi
) -> tuple[np.ndarray, np.ndarray]:
    """Batched differential; returns (output coords, output base point).

    ``y`` is the second geodesic endpoint (already resolved from u for the
    exponential cases).  Coincident entries fall back to the flat limit
    alpha(0) * xi, which is the correct degenerate value for every case.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    xi = np.asarray(xi, float)
    t_out = case.output_time
    if man.is_flat:
        # all kappa vanish and transport is the chart identity
        base = x if t_out == 0.0 else man.geodesic(x, y, t_out)
        return float(alpha(case, 0.0)) * xi, base
    vecs, kaps = man.frame(x, y)
    coeff = man.inner(x[..., None, :], xi[..., None, :], vecs)  # (..., dim)
    scaled = coeff * alpha(case, kaps)
    if t_out == 0.0:
        base = x
        out_vecs = vecs
    else:
        base = man.geodesic(x, y, t_out)
        out_vecs = man._transport(
            np.broadcast_to(x[..., None, :], vecs.shape[:-1] + (x.shape[-1],)),
            np.broadcast_to(base[..., None, :], vecs.shape[:-1] + (x.shape[-1],)),
            vecs,
        )
    return np.einsum("...k,...kj->...j", scaled, out_vecs), base


def adjoint_differential_arrays(
    man: Manifold, case: CoefficientCase, x, y, w
) -> np.ndarray:
    """Batched adjoint: maps w at the output point back to a tangent at x."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    w = np.asarray(w, float)
    if man.is_flat:
        return float(alpha(case, 0.0)) * w
    vecs, kaps = man.frame(x, y)
    t_out = case.output_time
    if t_out == 0.0:
        base = x
        out_vecs = vecs
    else:
        base = man.geodesic(x, y, t_out)
        out_vecs = man._transport(
            np.broadcast_to(x[..., None, :], vecs.shape[:-1] + (x.shape[-1],)),
            np.broadcast_to(base[..., None, :], vecs.shape[:-1] + (x.shape[-1],)),
            vecs,
        )
    coeff = man.inner(base[..., None, :], w[..., None, :], out_vecs)
    scaled = coeff * alpha(case, kaps)
    return np.einsum("...k,...kj->...j", scaled, vecs)


def _resolve_endpoint(case: CoefficientCase, x: Point, y_or_u) -> Point:
    man = x.manifold
    if case.kind in (Case.EXP_BASE, Case.EXP_ARG):
        if not isinstance(y_or_u, TangentVector):
            raise TagMismatchError(f"case {case.kind.value} takes a tangent vector u")
        return Point(man, man.exp(x.coords, y_or_u.coords))
    if not isinstance(y_or_u, Point):
        raise TagMismatchError(f"case {case.kind.value} takes a point y")
    if y_or_u.manifold != man:
        raise TagMismatchError("endpoints live on different manifolds")
    return y_or_u


def differential(
    case: CoefficientCase, x: Point, y_or_u, xi: TangentVector
) -> TangentVector:
    """Differential of the case's geodesic map applied to xi at x.

    The result lives at gamma(x, y; T) with the case's parameter T; for the
    LOG_* cases the tangent-space target is identified with the tangent space
    at the corresponding geodesic point.
    """
    man = x.manifold
    y = _resolve_endpoint(case, x, y_or_u)
    if np.any(man.cut_mask(x.coords, y.coords)):
        raise CutLocusError(f"differential undefined across the cut locus on {man}")
    out, base = differential_arrays(man, case, x.coords, y.coords, xi.coords)
    return TangentVector(Point(man, base), out)


def adjoint_differential(
    case: CoefficientCase, x: Point, y_or_u, w: TangentVector
) -> TangentVector:
    """Adjoint of :func:`differential`: <DF[xi], w> = <xi, DF*[w]> at x."""
    man = x.manifold
    y = _resolve_endpoint(case, x, y_or_u)
    if np.any(man.cut_mask(x.coords, y.coords)):
        raise CutLocusError(f"adjoint undefined across the cut locus on {man}")
    out = adjoint_differential_arrays(man, case, x.coords, y.coords, w.coords)
    return TangentVector(x, out)


# ---------------------------------------------------------------- transport


def transport_closed(x: Point, y: Point, xi: TangentVector) -> TangentVector:
    """Closed-form parallel transport along the minimizing geodesic x -> y."""
    if x.manifold != y.manifold:
        raise TagMismatchError("transport endpoints live on different manifolds")
    return TangentVector(y, x.manifold.transport(x.coords, y.coords, xi.coords))


def pole_ladder_arrays(man: Manifold, x, y, xi) -> np.ndarray:
    """Single-rung pole ladder; exact transport on symmetric spaces."""
    mid = _ladder_step(man, x, y, 0.5, "midpoint")
    q = man.exp(np.asarray(x, float), np.asarray(xi, float))
    z = _ladder_geodesic(man, q, mid, 2.0, "doubled geodesic")
    return -_ladder_log(man, np.asarray(y, float), z, "final log")


def schild_ladder_arrays(man: Manifold, x, y, xi) -> np.ndarray:
    """Single-rung Schild's ladder; first-order transport approximation."""
    q = man.exp(np.asarray(x, float), np.asarray(xi, float))
    mid = _ladder_geodesic(man, np.asarray(y, float), q, 0.5, "midpoint")
    z = _ladder_geodesic(man, np.asarray(x, float), mid, 2.0, "doubled geodesic")
    return _ladder_log(man, np.asarray(y, float), z, "final log")


def _ladder_step(man, x, y, t, name):
    return _ladder_geodesic(man, np.asarray(x, float), np.asarray(y, float), t, name)


def _ladder_geodesic(man, a, b, t, name):
    try:
        return man.geodesic(a, b, t)
    except CutLocusError as err:
        raise CutLocusError(str(err), indices=err.indices, substep=name) from err


def _ladder_log(man, a, b, name):
    try:
        return man.log(a, b)
    except CutLocusError as err:
        raise CutLocusError(str(err), indices=err.indices, substep=name) from err


def transport_pole(x: Point, y: Point, xi: TangentVector) -> TangentVector:
    """Pole-ladder transport of xi from x to y (one rung)."""
    if x.manifold != y.manifold:
        raise TagMismatchError("transport endpoints live on different manifolds")
    return TangentVector(y, pole_ladder_arrays(x.manifold, x.coords, y.coords, xi.coords))


def transport_schild(x: Point, y: Point, xi: TangentVector) -> TangentVector:
    """Schild's-ladder transport of xi from x to y (one rung)."""
    if x.manifold != y.manifold:
        raise TagMismatchError("transport endpoints live on different manifolds")
    return TangentVector(y, schild_ladder_arrays(x.manifold, x.coords, y.coords, xi.coords))
