"""The 2-sphere embedded in R^3, unit vectors, constant curvature +1."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidPointError
from .base import Manifold

#: inner products at or below -1 + this are treated as antipodal (cut locus)
ANTIPODAL_ATOL = 1e-12


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def _normalize(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


class Sphere2(Manifold):
    """S^2 subset R^3 with the round metric; injectivity radius pi."""

    point_size = tangent_size = 3
    dim = 2
    has_constant_curvature = True
    has_nonnegative_curvature = True

    def _dist(self, x, y):
        cross = np.linalg.norm(np.cross(x, y), axis=-1)
        return np.arctan2(cross, _dot(x, y))

    def _exp(self, x, v):
        theta = np.linalg.norm(v, axis=-1, keepdims=True)
        # sinc(t/pi) = sin(t)/t, exact at 0
        out = np.cos(theta) * x + np.sinc(theta / np.pi) * v
        return _normalize(out)

    def _log(self, x, y):
        d = _dot(x, y)[..., None]
        u = y - d * x
        s = np.linalg.norm(u, axis=-1, keepdims=True)
        theta = np.arctan2(s[..., 0], d[..., 0])[..., None]
        factor = np.where(s > 1e-300, theta / np.where(s > 1e-300, s, 1.0), 1.0)
        return factor * u

    def _inner(self, x, u, v):
        return _dot(u, v)

    def _transport(self, x, y, v):
        # rotate within span(x, e); the orthogonal component is untouched
        e = self._log(x, y)
        theta = np.linalg.norm(e, axis=-1, keepdims=True)
        e = np.where(theta > 0, e / np.where(theta > 0, theta, 1.0), 0.0)
        c = _dot(v, e)[..., None]
        return v + c * ((np.cos(theta) - 1.0) * e - np.sin(theta) * x)

    def cut_mask(self, x, y):
        return _dot(x, y) <= -1.0 + ANTIPODAL_ATOL

    @property
    def injectivity_radius(self) -> float:
        return np.pi

    def check_point(self, x, atol_scale: float = 1.0) -> None:
        x = np.asarray(x)
        if x.shape[-1] != 3:
            raise InvalidPointError("S^2 chart is a 3-vector")
        err = np.abs(np.linalg.norm(x, axis=-1) - 1.0)
        if not np.all(np.isfinite(x)) or np.any(err > 1e-12 * atol_scale):
            raise InvalidPointError(
                f"S^2 point norm deviates from 1 by {float(np.max(err)):.2e}"
            )

    def check_tangent(self, x, v) -> None:
        super().check_tangent(x, v)
        if np.any(np.abs(_dot(np.asarray(x, float), np.asarray(v, float))) > 1e-10):
            raise InvalidPointError("S^2 tangent vector is not orthogonal to its base")

    def basis(self, x):
        x = np.asarray(x, float)
        # pick the seed axis least aligned with x, deterministically
        ez = np.zeros_like(x)
        ez[..., 2] = 1.0
        ex = np.zeros_like(x)
        ex[..., 0] = 1.0
        seed = np.where((np.abs(x[..., 2]) < 0.9)[..., None], ez, ex)
        a = _normalize(seed - _dot(seed, x)[..., None] * x)
        b = np.cross(x, a)
        return np.stack([a, b], axis=-2)

    def frame(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        theta = self._dist(x, y)
        v = self._log(x, y)
        moving = theta[..., None] > 0
        e1 = np.where(moving, v / np.where(moving, theta[..., None], 1.0), 0.0)
        fallback = self.basis(x)
        e1 = np.where(moving, e1, fallback[..., 0, :])
        e2 = np.cross(x, e1)
        vectors = np.stack([e1, e2], axis=-2)
        kappas = np.stack([np.zeros_like(theta), theta**2], axis=-1)
        return vectors, kappas

    def random_point(self, rng, shape=()):
        return _normalize(rng.normal(0.0, 1.0, tuple(shape) + (3,)))

    def expression(self) -> str:
        return "Sphere2"
