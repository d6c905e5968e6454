"""The rotation group SO(3) with the bi-invariant metric.

Points are stored as the full 3x3 matrix (9 floats, row-major); tangent
vectors at R are spatial axis vectors w, meaning the matrix hat(w) @ R.
Exp/log use Rodrigues formulas; the injectivity radius is pi (rotations by
angle pi relative to the base are the cut locus).
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidPointError
from .base import Manifold, _orthonormal_completion

#: relative angles within this of pi count as the cut locus
CUT_ATOL = 1e-8


def _hat(w):
    w = np.asarray(w, float)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def _rodrigues(w):
    """Matrix exponential of hat(w) via the Rodrigues formula."""
    theta = np.linalg.norm(w, axis=-1, keepdims=True)[..., None]
    k = _hat(w)
    a = np.sinc(theta / np.pi)  # sin(t)/t
    half = theta / 2.0
    b = 0.5 * np.sinc(half / np.pi) ** 2  # (1 - cos t)/t^2
    return np.broadcast_to(np.eye(3), k.shape).copy() + a * k + b * (k @ k)


def _relative_axis(q):
    """Axis-angle vector of a rotation matrix q (angle in [0, pi))."""
    tr = np.trace(q, axis1=-2, axis2=-1)
    skew = 0.5 * (q - np.swapaxes(q, -1, -2))
    s = np.stack([skew[..., 2, 1], skew[..., 0, 2], skew[..., 1, 0]], axis=-1)
    sin_t = np.linalg.norm(s, axis=-1)
    theta = np.arctan2(sin_t, 0.5 * (tr - 1.0))
    factor = np.where(sin_t > 1e-300, theta / np.where(sin_t > 1e-300, sin_t, 1.0), 1.0)
    return factor[..., None] * s, theta


def _orthonormalize(r):
    """Cheap deterministic re-orthonormalization (Gram-Schmidt on rows)."""
    r0 = r[..., 0, :]
    r0 = r0 / np.linalg.norm(r0, axis=-1, keepdims=True)
    r1 = r[..., 1, :]
    r1 = r1 - np.sum(r1 * r0, axis=-1, keepdims=True) * r0
    r1 = r1 / np.linalg.norm(r1, axis=-1, keepdims=True)
    r2 = np.cross(r0, r1)
    return np.stack([r0, r1, r2], axis=-2)


class Rotations3(Manifold):
    """SO(3), constant positive curvature 1/4 under the axis-vector metric."""

    point_size = 9
    tangent_size = dim = 3
    has_constant_curvature = True
    has_nonnegative_curvature = True

    def _mat(self, x):
        x = np.asarray(x, float)
        return x.reshape(x.shape[:-1] + (3, 3))

    def _vec(self, m):
        return m.reshape(m.shape[:-2] + (9,))

    def _dist(self, x, y):
        q = self._mat(y) @ np.swapaxes(self._mat(x), -1, -2)
        _, theta = _relative_axis(q)
        return theta

    def _exp(self, x, v):
        return self._vec(_orthonormalize(_rodrigues(v) @ self._mat(x)))

    def _log(self, x, y):
        q = self._mat(y) @ np.swapaxes(self._mat(x), -1, -2)
        w, _ = _relative_axis(q)
        return w

    def _inner(self, x, u, v):
        return np.sum(u * v, axis=-1)

    def _transport(self, x, y, v):
        # rotate the axis vector by half the relative rotation
        w = self._log(x, y)
        half = _rodrigues(0.5 * w)
        return np.einsum("...ij,...j->...i", half, v)

    def cut_mask(self, x, y):
        return self._dist(np.asarray(x, float), np.asarray(y, float)) > np.pi - CUT_ATOL

    @property
    def injectivity_radius(self) -> float:
        return np.pi

    def check_point(self, x, atol_scale: float = 1.0) -> None:
        r = self._mat(x)
        if not np.all(np.isfinite(r)):
            raise InvalidPointError("non-finite rotation entries")
        err = np.abs(r @ np.swapaxes(r, -1, -2) - np.eye(3)).max()
        if err > 1e-10 * atol_scale:
            raise InvalidPointError(f"R^T R deviates from I by {err:.2e}")
        det = np.linalg.det(r)
        if np.any(np.abs(det - 1.0) > 1e-10 * atol_scale):
            raise InvalidPointError("determinant is not +1")

    def basis(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(np.eye(3), x.shape[:-1] + (3, 3)).copy()

    def frame(self, x, y):
        w = self._log(np.asarray(x, float), np.asarray(y, float))
        length = np.linalg.norm(w, axis=-1, keepdims=True)
        e1 = np.zeros(3)
        e1[0] = 1.0
        unit = np.where(length > 0, w / np.where(length > 0, length, 1.0), e1)
        vectors = _orthonormal_completion(unit)
        zero = np.zeros(length.shape[:-1])
        curved = 0.25 * (length[..., 0]) ** 2
        kappas = np.stack([zero, curved, curved], axis=-1)
        return vectors, kappas

    def random_point(self, rng, shape=()):
        quat = rng.normal(0.0, 1.0, tuple(shape) + (4,))
        quat /= np.linalg.norm(quat, axis=-1, keepdims=True)
        a, b, c, d = (quat[..., i] for i in range(4))
        r = np.empty(quat.shape[:-1] + (3, 3))
        r[..., 0, 0] = a * a + b * b - c * c - d * d
        r[..., 0, 1] = 2 * (b * c - a * d)
        r[..., 0, 2] = 2 * (b * d + a * c)
        r[..., 1, 0] = 2 * (b * c + a * d)
        r[..., 1, 1] = a * a - b * b + c * c - d * d
        r[..., 1, 2] = 2 * (c * d - a * b)
        r[..., 2, 0] = 2 * (b * d - a * c)
        r[..., 2, 1] = 2 * (c * d + a * b)
        r[..., 2, 2] = a * a - b * b - c * c + d * d
        return self._vec(r)

    def expression(self) -> str:
        return "Rotations3"
