"""Symmetric positive definite d x d matrices with the affine-invariant metric.

Charts store the full matrix row-major (d*d floats).  All maps go through the
symmetric eigendecomposition of the whitened argument x^{-1/2} y x^{-1/2};
results are re-symmetrized after every operation to suppress round-off drift.
A Hadamard manifold: unique geodesics, empty cut locus.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidPointError
from .base import Manifold, _orthonormal_completion


def _sym(m):
    return 0.5 * (m + np.swapaxes(m, -1, -2))


class SPD(Manifold):
    """P(d) for d in {2, 3}, metric <u, v>_x = tr(x^-1 u x^-1 v)."""

    is_hadamard = True
    has_constant_curvature = False
    has_nonnegative_curvature = False

    def __init__(self, d: int):
        if d not in (2, 3):
            raise InvalidPointError("SPD dimension must be 2 or 3")
        self.d = int(d)
        self.point_size = self.tangent_size = d * d
        self.dim = d * (d + 1) // 2

    # ---------------------------------------------------------- helpers

    def _mat(self, x):
        x = np.asarray(x, float)
        return x.reshape(x.shape[:-1] + (self.d, self.d))

    def _vec(self, m):
        return m.reshape(m.shape[:-2] + (self.d * self.d,))

    @staticmethod
    def _eigh(m):
        return np.linalg.eigh(_sym(m))

    @classmethod
    def _apply(cls, m, fun):
        w, q = cls._eigh(m)
        return _sym(np.einsum("...ik,...k,...jk->...ij", q, fun(w), q))

    def _sqrt_invsqrt(self, x):
        w, q = self._eigh(self._mat(x))
        if np.any(w <= 0):
            raise InvalidPointError("matrix is not positive definite")
        s = np.sqrt(w)
        sqrt = _sym(np.einsum("...ik,...k,...jk->...ij", q, s, q))
        inv = _sym(np.einsum("...ik,...k,...jk->...ij", q, 1.0 / s, q))
        return sqrt, inv

    # --------------------------------------------------------- chart ops

    def _dist(self, x, y):
        _, w_inv = self._sqrt_invsqrt(x)
        a = _sym(w_inv @ self._mat(y) @ w_inv)
        lam = np.linalg.eigvalsh(a)
        if np.any(lam <= 0):
            raise InvalidPointError("second argument is not positive definite")
        return np.linalg.norm(np.log(lam), axis=-1)

    def _exp(self, x, v):
        s, w = self._sqrt_invsqrt(x)
        inner = _sym(w @ self._mat(v) @ w)
        return self._vec(_sym(s @ self._apply(inner, np.exp) @ s))

    def _log(self, x, y):
        s, w = self._sqrt_invsqrt(x)
        a = _sym(w @ self._mat(y) @ w)
        lam, q = self._eigh(a)
        if np.any(lam <= 0):
            raise InvalidPointError("log target is not positive definite")
        la = _sym(np.einsum("...ik,...k,...jk->...ij", q, np.log(lam), q))
        return self._vec(_sym(s @ la @ s))

    def _inner(self, x, u, v):
        _, w = self._sqrt_invsqrt(x)
        a = w @ self._mat(u) @ w
        b = w @ self._mat(v) @ w
        return np.sum(a * b, axis=(-1, -2))

    def _transport(self, x, y, v):
        s, w = self._sqrt_invsqrt(x)
        a = _sym(w @ self._mat(y) @ w)
        e = s @ self._apply(a, np.sqrt) @ w
        return self._vec(_sym(e @ self._mat(v) @ np.swapaxes(e, -1, -2)))

    def check_point(self, x, atol_scale: float = 1.0) -> None:
        m = self._mat(x)
        if not np.all(np.isfinite(m)):
            raise InvalidPointError("non-finite matrix entries")
        asym = np.abs(m - np.swapaxes(m, -1, -2)).max()
        if asym > 1e-12 * atol_scale:
            raise InvalidPointError(f"matrix asymmetry {asym:.2e} exceeds 1e-12")
        lam = np.linalg.eigvalsh(_sym(m))
        if np.any(lam <= 0):
            raise InvalidPointError("matrix has a non-positive eigenvalue")

    # -------------------------------------------------------- frames etc.

    def basis(self, x):
        s, _ = self._sqrt_invsqrt(x)
        mats = []
        for i in range(self.d):
            e = np.zeros((self.d, self.d))
            e[i, i] = 1.0
            mats.append(e)
        for i in range(self.d):
            for j in range(i + 1, self.d):
                e = np.zeros((self.d, self.d))
                e[i, j] = e[j, i] = 1.0 / np.sqrt(2.0)
                mats.append(e)
        out = [self._vec(_sym(s @ e @ s)) for e in mats]
        return np.stack(out, axis=-2)

    def frame(self, x, y):
        """Eigen-frame of the curvature operator along the geodesic x -> y.

        The whitened velocity S = logm(x^{-1/2} y x^{-1/2}) is diagonalized;
        coordinate directions within its eigenbasis give curvature eigenvalues
        -(lam_i - lam_j)^2 / 4 for the symmetrized off-diagonal pairs and 0 on
        the commuting diagonal block, which is rotated so the velocity
        direction comes first.
        """
        s, w = self._sqrt_invsqrt(x)
        a = _sym(w @ self._mat(y) @ w)
        lam_a, q = self._eigh(a)
        if np.any(lam_a <= 0):
            raise InvalidPointError("frame target is not positive definite")
        lam = np.log(lam_a)  # eigenvalues of the whitened velocity
        length = np.linalg.norm(lam, axis=-1, keepdims=True)
        unit = np.where(length > 0, lam / np.where(length > 0, length, 1.0), 0.0)
        e1 = np.zeros(self.d)
        e1[0] = 1.0
        unit = np.where(length > 0, unit, e1)
        coeffs = _orthonormal_completion(unit)  # (..., d, d) rows

        vecs = []
        kappas = []
        cols = [q[..., :, i] for i in range(self.d)]
        # diagonal (flat) block, velocity direction first
        for r in range(self.d):
            diag = np.einsum(
                "...k,...ik,...jk->...ij", coeffs[..., r, :], q, q
            )
            vecs.append(self._vec(_sym(s @ diag @ s)))
            kappas.append(np.zeros(length.shape[:-1]))
        # curved off-diagonal block
        for i in range(self.d):
            for j in range(i + 1, self.d):
                m = (
                    cols[i][..., :, None] * cols[j][..., None, :]
                    + cols[j][..., :, None] * cols[i][..., None, :]
                ) / np.sqrt(2.0)
                vecs.append(self._vec(_sym(s @ m @ s)))
                kappas.append(-0.25 * (lam[..., i] - lam[..., j]) ** 2)
        return np.stack(vecs, axis=-2), np.stack(kappas, axis=-1)

    def random_point(self, rng, shape=()):
        g = rng.normal(0.0, 0.6, tuple(shape) + (self.d, self.d))
        return self._vec(self._apply(_sym(g), np.exp))

    def expression(self) -> str:
        return f"SPD({self.d})"
