"""Finite products and powers of manifolds with the product metric."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidPointError
from .base import Manifold, _orthonormal_completion


class Product(Manifold):
    """Product manifold; charts are concatenations of component charts.

    The product distance is the square root of the summed squared component
    distances, and every map acts componentwise.
    """

    def __init__(self, components):
        components = tuple(components)
        if not components:
            raise InvalidPointError("product of zero manifolds")
        self.components = components
        self.point_size = sum(c.point_size for c in components)
        self.tangent_size = sum(c.tangent_size for c in components)
        self.dim = sum(c.dim for c in components)
        self._p_off = np.cumsum([0] + [c.point_size for c in components])
        self._t_off = np.cumsum([0] + [c.tangent_size for c in components])
        self.is_hadamard = all(c.is_hadamard for c in components)
        self.is_flat = all(c.is_flat for c in components)
        self.has_nonnegative_curvature = all(
            c.has_nonnegative_curvature for c in components
        )
        # mixed-plane curvatures vanish, so a genuine product is constant
        # only when it is flat
        self.has_constant_curvature = self.is_flat or (
            len(components) == 1 and components[0].has_constant_curvature
        )

    def _p(self, x, k):
        return np.asarray(x, float)[..., self._p_off[k] : self._p_off[k + 1]]

    def _t(self, v, k):
        return np.asarray(v, float)[..., self._t_off[k] : self._t_off[k + 1]]

    def _dist(self, x, y):
        sq = sum(
            c.dist(self._p(x, k), self._p(y, k)) ** 2
            for k, c in enumerate(self.components)
        )
        return np.sqrt(sq)

    def _exp(self, x, v):
        return np.concatenate(
            [c.exp(self._p(x, k), self._t(v, k)) for k, c in enumerate(self.components)],
            axis=-1,
        )

    def _log(self, x, y):
        return np.concatenate(
            [c._log(self._p(x, k), self._p(y, k)) for k, c in enumerate(self.components)],
            axis=-1,
        )

    def _inner(self, x, u, v):
        return sum(
            c.inner(self._p(x, k), self._t(u, k), self._t(v, k))
            for k, c in enumerate(self.components)
        )

    def _transport(self, x, y, v):
        return np.concatenate(
            [
                c._transport(self._p(x, k), self._p(y, k), self._t(v, k))
                for k, c in enumerate(self.components)
            ],
            axis=-1,
        )

    def cut_mask(self, x, y):
        mask = False
        for k, c in enumerate(self.components):
            mask = mask | c.cut_mask(self._p(x, k), self._p(y, k))
        return np.asarray(mask)

    @property
    def injectivity_radius(self) -> float:
        return min(c.injectivity_radius for c in self.components)

    def check_point(self, x, atol_scale: float = 1.0) -> None:
        x = np.asarray(x)
        if x.shape[-1] != self.point_size:
            raise InvalidPointError(
                f"expected chart size {self.point_size}, got {x.shape[-1]}"
            )
        for k, c in enumerate(self.components):
            c.check_point(self._p(x, k), atol_scale)

    def basis(self, x):
        x = np.asarray(x, float)
        batch = x.shape[:-1]
        out = np.zeros(batch + (self.dim, self.tangent_size))
        row = 0
        for k, c in enumerate(self.components):
            b = c.basis(self._p(x, k))
            out[..., row : row + c.dim, self._t_off[k] : self._t_off[k + 1]] = b
            row += c.dim
        return out

    def frame(self, x, y):
        """Componentwise frames with the flat velocity block rotated so the
        global velocity direction comes first.

        Component first-vectors all have kappa = 0 (they are velocity
        directions, or arbitrary flat directions of non-moving components),
        and distinct components are metric-orthogonal, so recombining them
        with an orthogonal matrix keeps the frame orthonormal.
        """
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        batch = x.shape[:-1]
        total_log = self._log(x, y)
        speeds = np.stack(
            [
                c.norm(self._p(x, k), self._t(total_log, k))
                for k, c in enumerate(self.components)
            ],
            axis=-1,
        )
        length = np.linalg.norm(speeds, axis=-1, keepdims=True)
        weights = np.where(length > 0, speeds / np.where(length > 0, length, 1.0), 0.0)
        fallback = np.zeros(len(self.components))
        fallback[0] = 1.0
        weights = np.where(length > 0, weights, fallback)
        rot = _orthonormal_completion(weights)  # (..., n_comp, n_comp)

        first_vecs = []
        rest_vecs = []
        rest_kaps = []
        for k, c in enumerate(self.components):
            vecs, kaps = c.frame(self._p(x, k), self._p(y, k))
            emb = np.zeros(batch + (c.dim, self.tangent_size))
            emb[..., :, self._t_off[k] : self._t_off[k + 1]] = vecs
            first_vecs.append(emb[..., 0, :])
            if c.dim > 1:
                rest_vecs.append(emb[..., 1:, :])
                rest_kaps.append(kaps[..., 1:])
        vel_block = np.einsum("...rc,...cj->...rj", rot, np.stack(first_vecs, axis=-2))
        vectors = np.concatenate([vel_block] + rest_vecs, axis=-2)
        kappas = np.concatenate(
            [np.zeros(batch + (len(self.components),))] + rest_kaps, axis=-1
        )
        return vectors, kappas

    def random_point(self, rng, shape=()):
        return np.concatenate(
            [c.random_point(rng, shape) for c in self.components], axis=-1
        )

    def expression(self) -> str:
        return "Product(" + ",".join(c.expression() for c in self.components) + ")"


class Power(Product):
    """n-fold power of a single manifold (kept distinct for tag fidelity)."""

    def __init__(self, base: Manifold, n: int):
        if n < 1:
            raise InvalidPointError("power exponent must be >= 1")
        super().__init__([base] * int(n))
        self.base = base
        self.n = int(n)

    def expression(self) -> str:
        return f"Power({self.base.expression()},{self.n})"
