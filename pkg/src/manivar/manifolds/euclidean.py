"""Flat Euclidean factors R^m (the trivial reference geometry)."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidPointError
from .base import Manifold, _orthonormal_completion


class Euclidean(Manifold):
    """R^m with the standard inner product; every map is affine."""

    is_hadamard = True
    is_flat = True
    has_constant_curvature = True
    has_nonnegative_curvature = True

    def __init__(self, m: int):
        if m < 1:
            raise InvalidPointError("Euclidean dimension must be >= 1")
        self.m = int(m)
        self.point_size = self.tangent_size = self.dim = self.m

    def _dist(self, x, y):
        return np.linalg.norm(y - x, axis=-1)

    def _exp(self, x, v):
        return x + v

    def _log(self, x, y):
        return y - x

    def _inner(self, x, u, v):
        return np.sum(u * v, axis=-1)

    def _transport(self, x, y, v):
        return np.broadcast_to(v, np.broadcast_shapes(x.shape, y.shape, v.shape)).copy()

    def check_point(self, x, atol_scale: float = 1.0) -> None:
        x = np.asarray(x)
        if x.shape[-1] != self.m:
            raise InvalidPointError(f"expected chart size {self.m}, got {x.shape[-1]}")
        if not np.all(np.isfinite(x)):
            raise InvalidPointError("non-finite coordinates")

    def basis(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(np.eye(self.m), x.shape[:-1] + (self.m, self.m)).copy()

    def frame(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        v = y - x
        n = np.linalg.norm(v, axis=-1, keepdims=True)
        first = np.where(n > 0, v / np.where(n > 0, n, 1.0), _e1(self.m))
        vectors = _orthonormal_completion(first)
        kappas = np.zeros(x.shape[:-1] + (self.dim,))
        return vectors, kappas

    def random_point(self, rng, shape=()):
        return rng.normal(0.0, 1.0, tuple(shape) + (self.m,))

    def expression(self) -> str:
        return f"Euclidean({self.m})"


def _e1(m: int) -> np.ndarray:
    e = np.zeros(m)
    e[0] = 1.0
    return e
