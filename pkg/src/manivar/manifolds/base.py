"""Manifold abstraction over batched chart coordinates, plus typed wrappers.

Every manifold stores points as flat float64 chart vectors of length
``point_size`` and tangent vectors as flat vectors of length
``tangent_size``.  All operations broadcast over arbitrary leading axes, so
an (n1, n2) image is one array of shape (n1, n2, point_size) processed in
single NumPy calls.  The thin :class:`Point` / :class:`TangentVector`
wrappers carry the manifold alongside a single coordinate vector for the
typed public API.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from ..errors import CutLocusError, InvalidPointError, TagMismatchError


class Manifold(ABC):
    """A complete symmetric Riemannian manifold with closed-form geometry.

    Subclasses implement the chart-level operations (`_exp`, `_log`, ...) on
    batched arrays; this base class provides the derived operations
    (geodesics, reflections, norms) and the argument checking of the public
    entry points.  Instances are immutable value objects: two instances
    compare equal iff they describe the same manifold.
    """

    #: chart vector length of a point / a tangent vector
    point_size: int
    tangent_size: int
    #: intrinsic dimension
    dim: int

    # geometric classification used for solver convergence notes
    is_hadamard: bool = False
    is_flat: bool = False
    has_constant_curvature: bool = False
    has_nonnegative_curvature: bool = False

    # ------------------------------------------------------------------ API

    def dist(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Geodesic distance, batched over leading axes."""
        return self._dist(np.asarray(x, float), np.asarray(y, float))

    def exp(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Exponential map: endpoint of the geodesic with initial velocity v."""
        return self._exp(np.asarray(x, float), np.asarray(v, float))

    def log(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Logarithmic map.  Raises :class:`CutLocusError` at the cut locus."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        cut = self.cut_mask(x, y)
        if np.any(cut):
            idx = np.argwhere(cut)
            raise CutLocusError(
                f"log undefined at the cut locus of {self} "
                f"({int(np.count_nonzero(cut))} offending entries)",
                indices=idx,
            )
        return self._log(x, y)

    def geodesic(self, x: np.ndarray, y: np.ndarray, t) -> np.ndarray:
        """Point gamma(x, y; t).  t may broadcast against the batch shape."""
        t = np.asarray(t, float)
        return self.exp(x, t[..., None] * self.log(x, y) if t.ndim else t * self.log(x, y))

    def inner(self, x: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Riemannian inner product of tangent vectors u, v at x."""
        return self._inner(np.asarray(x, float), np.asarray(u, float), np.asarray(v, float))

    def norm(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.sqrt(np.maximum(self.inner(x, v, v), 0.0))

    def reflect(self, p: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Geodesic reflection of x through p, i.e. exp_p(-log_p(x))."""
        return self.exp(p, -self.log(p, x))

    def transport(self, x: np.ndarray, y: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Closed-form parallel transport of v along the geodesic x -> y."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        cut = self.cut_mask(x, y)
        if np.any(cut):
            raise CutLocusError(
                f"parallel transport undefined at the cut locus of {self}",
                indices=np.argwhere(cut),
            )
        return self._transport(x, y, np.asarray(v, float))

    def zero_tangent(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        return np.zeros(x.shape[:-1] + (self.tangent_size,))

    # ------------------------------------------------------- chart plumbing

    @abstractmethod
    def _dist(self, x, y): ...

    @abstractmethod
    def _exp(self, x, v): ...

    @abstractmethod
    def _log(self, x, y): ...

    @abstractmethod
    def _inner(self, x, u, v): ...

    @abstractmethod
    def _transport(self, x, y, v): ...

    def cut_mask(self, x, y) -> np.ndarray:
        """Boolean mask: True where y lies at the cut locus of x."""
        x = np.asarray(x, float)
        return np.zeros(np.broadcast_shapes(x.shape[:-1], np.asarray(y).shape[:-1]), bool)

    @property
    def injectivity_radius(self) -> float:
        return np.inf

    @abstractmethod
    def check_point(self, x, atol_scale: float = 1.0) -> None:
        """Raise :class:`InvalidPointError` if x violates a chart invariant."""

    def check_tangent(self, x, v) -> None:
        """Raise if v is not a valid tangent vector at x (default: shape only)."""
        v = np.asarray(v)
        if v.shape[-1] != self.tangent_size:
            raise InvalidPointError(
                f"tangent vector has chart size {v.shape[-1]}, expected {self.tangent_size}"
            )

    @abstractmethod
    def basis(self, x) -> np.ndarray:
        """Orthonormal tangent basis at x, shape (..., dim, tangent_size)."""

    @abstractmethod
    def frame(self, x, y):
        """Jacobi eigen-frame along the unit-interval geodesic x -> y.

        Returns ``(vectors, kappas)`` with shapes (..., dim, tangent_size)
        and (..., dim): an orthonormal tangent frame at x that diagonalizes
        the curvature operator along the geodesic, eigenvalues scaled by the
        squared geodesic length, velocity direction first (kappa = 0).
        Entries with x == y get an arbitrary orthonormal basis with all
        kappa = 0 (the correct degenerate limit); callers that must reject
        coincident points check separately.
        """

    @abstractmethod
    def random_point(self, rng: np.random.Generator, shape=()) -> np.ndarray: ...

    def random_tangent(self, rng: np.random.Generator, x, scale: float = 1.0) -> np.ndarray:
        """Isotropic Gaussian tangent draw in an orthonormal basis at x."""
        x = np.asarray(x, float)
        coeff = rng.normal(0.0, scale, x.shape[:-1] + (self.dim,))
        return np.einsum("...k,...kj->...j", coeff, self.basis(x))

    # ------------------------------------------------------------ identity

    @abstractmethod
    def expression(self) -> str:
        """Canonical tag expression, e.g. ``SPD(3)`` (parse_tag inverse)."""

    def __repr__(self) -> str:
        return self.expression()

    def __eq__(self, other) -> bool:
        return type(self) is type(other) and self.expression() == other.expression()

    def __hash__(self) -> int:
        return hash(self.expression())


def _orthonormal_completion(first: np.ndarray) -> np.ndarray:
    """Complete unit vectors (..., d) to orthonormal bases (..., d, d).

    Row 0 equals ``first``; the remaining rows are produced by the Householder
    reflection that maps e_1 onto ``first`` (deterministic).
    """
    first = np.asarray(first, float)
    d = first.shape[-1]
    e1 = np.zeros(d)
    e1[0] = 1.0
    w = first - e1
    wn2 = np.sum(w * w, axis=-1, keepdims=True)
    basis = np.broadcast_to(np.eye(d), first.shape + (d,)).copy()
    safe = np.where(wn2 > 1e-30, wn2, 1.0)
    # H = I - 2 w w^T / |w|^2 maps e1 -> first (columns of H); rows of H are
    # the images of the canonical basis, H symmetric so rows work as well.
    h = basis - 2.0 * w[..., :, None] * w[..., None, :] / safe[..., None]
    out = np.where(wn2[..., None] > 1e-30, h, basis)
    # ensure row 0 is exactly `first`
    out[..., 0, :] = first
    return out


# ---------------------------------------------------------------- wrappers


@dataclass(frozen=True, eq=False)
class Point:
    """A location on a tagged manifold: flat chart coordinates + manifold."""

    manifold: Manifold
    coords: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coords, float))
        if c.shape != (self.manifold.point_size,):
            raise InvalidPointError(
                f"point chart size {c.shape} does not match {self.manifold} "
                f"(expected ({self.manifold.point_size},))"
            )
        object.__setattr__(self, "coords", c)

    def validate(self) -> "Point":
        self.manifold.check_point(self.coords)
        return self

    def close_to(self, other: "Point", atol: float = 1e-12) -> bool:
        return self.manifold == other.manifold and bool(
            np.allclose(self.coords, other.coords, atol=atol, rtol=0.0)
        )


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Tangent vector: base point plus chart coordinates at that base."""

    base: Point
    coords: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coords, float))
        if c.shape != (self.base.manifold.tangent_size,):
            raise InvalidPointError(
                f"tangent chart size {c.shape} does not match {self.base.manifold}"
            )
        object.__setattr__(self, "coords", c)

    @property
    def manifold(self) -> Manifold:
        return self.base.manifold

    def norm(self) -> float:
        return float(self.manifold.norm(self.base.coords, self.coords))


def _same_tag(*points: Point) -> Manifold:
    man = points[0].manifold
    for p in points[1:]:
        if p.manifold != man:
            raise TagMismatchError(f"manifold tags differ: {man} vs {p.manifold}")
    return man


def _same_base(x: Point, *vs: TangentVector) -> None:
    for v in vs:
        if v.manifold != x.manifold or not np.allclose(
            v.base.coords, x.coords, atol=1e-12, rtol=0.0
        ):
            raise TagMismatchError("tangent vector base does not match the given point")


def distance(x: Point, y: Point) -> float:
    """Geodesic distance between two points with the same tag."""
    man = _same_tag(x, y)
    return float(man.dist(x.coords, y.coords))


def exp(x: Point, v: TangentVector) -> Point:
    """Exponential map exp_x(v); defined on the whole tangent space."""
    _same_base(x, v)
    return Point(x.manifold, x.manifold.exp(x.coords, v.coords))


def log(x: Point, y: Point) -> TangentVector:
    """Logarithmic map log_x(y); raises CutLocusError for y in C(x)."""
    man = _same_tag(x, y)
    return TangentVector(x, man.log(x.coords, y.coords))


def geodesic_point(x: Point, y: Point, t: float) -> Point:
    """gamma(x, y; t) = exp_x(t log_x(y)); t may lie outside [0, 1]."""
    man = _same_tag(x, y)
    return Point(man, man.geodesic(x.coords, y.coords, float(t)))


def inner(x: Point, v: TangentVector, w: TangentVector) -> float:
    """Riemannian metric at x applied to two tangent vectors based there."""
    _same_base(x, v, w)
    return float(x.manifold.inner(x.coords, v.coords, w.coords))


def reflect(p: Point, x: Point) -> Point:
    """Geodesic reflection of x at p: exp_p(-log_p(x))."""
    man = _same_tag(p, x)
    return Point(man, man.reflect(p.coords, x.coords))
