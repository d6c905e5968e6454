"""The unit circle S^1, charted by angles in [-pi, pi)."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidPointError
from .base import Manifold

TWO_PI = 2.0 * np.pi
#: angle differences within this of pi count as the cut locus
CUT_ATOL = 1e-12


def wrap(a):
    """Wrap angles to the canonical chart [-pi, pi)."""
    return np.mod(np.asarray(a, float) + np.pi, TWO_PI) - np.pi


class Circle(Manifold):
    """S^1 with arc-length metric; flat but not simply connected."""

    point_size = tangent_size = dim = 1
    is_flat = True
    has_constant_curvature = True
    has_nonnegative_curvature = True

    def _dist(self, x, y):
        return np.abs(wrap(y - x))[..., 0]

    def _exp(self, x, v):
        return wrap(x + v)

    def _log(self, x, y):
        return wrap(y - x)

    def _inner(self, x, u, v):
        return (u * v)[..., 0]

    def _transport(self, x, y, v):
        return np.broadcast_to(v, np.broadcast_shapes(x.shape, y.shape, v.shape)).copy()

    def cut_mask(self, x, y):
        return np.abs(wrap(np.asarray(y) - np.asarray(x)))[..., 0] > np.pi - CUT_ATOL

    @property
    def injectivity_radius(self) -> float:
        return np.pi

    def check_point(self, x, atol_scale: float = 1.0) -> None:
        x = np.asarray(x)
        if x.shape[-1] != 1:
            raise InvalidPointError("circle chart has one angle per point")
        if not np.all(np.isfinite(x)):
            raise InvalidPointError("non-finite angle")
        if np.any(x < -np.pi) or np.any(x >= np.pi):
            raise InvalidPointError("angle outside the canonical chart [-pi, pi)")

    def basis(self, x):
        x = np.asarray(x, float)
        return np.ones(x.shape[:-1] + (1, 1))

    def frame(self, x, y):
        x = np.asarray(x, float)
        delta = wrap(np.asarray(y, float) - x)
        sign = np.where(delta == 0.0, 1.0, np.sign(delta))
        return sign[..., None], np.zeros(x.shape[:-1] + (1,))

    def random_point(self, rng, shape=()):
        return rng.uniform(-np.pi, np.pi, tuple(shape) + (1,))

    def expression(self) -> str:
        return "Circle"
