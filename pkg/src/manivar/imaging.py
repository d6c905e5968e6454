"""Phantoms, tangent-space noise, and the mean squared geodesic error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .manifolds import SPD, Circle, Sphere2, wrap
from .models import ManifoldImage

PHANTOMS = ("s1-blocks", "s2-patches", "spd-gradient")


def phantom(name: str, n1: int, n2: int) -> ManifoldImage:
    """Deterministic piecewise-geodesic test images with jumps and ramps."""
    if n1 < 1 or n2 < 1:
        raise ValidationError("phantom dimensions must be positive")
    if name == "s1-blocks":
        return _s1_blocks(n1, n2)
    if name == "s2-patches":
        return _s2_patches(n1, n2)
    if name == "spd-gradient":
        return _spd_gradient(n1, n2)
    raise ValidationError(f"--name must be one of {PHANTOMS}, got {name!r}")


def _coords(n1, n2):
    s = np.arange(n1) / max(n1 - 1, 1)
    t = np.arange(n2) / max(n2 - 1, 1)
    return np.meshgrid(s, t, indexing="ij")


def _s1_blocks(n1, n2) -> ManifoldImage:
    """Angular stripes (jumps >= pi/2) over a linear angle ramp."""
    s, t = _coords(n1, n2)
    stripes = np.where(t < 1.0 / 3.0, -2.0 * np.pi / 3.0,
                       np.where(t < 2.0 / 3.0, np.pi / 2.0, -np.pi / 6.0))
    ramp = -0.75 * np.pi + 1.5 * np.pi * t
    angles = np.where(s < 0.5, stripes, ramp)
    return ManifoldImage(Circle(), wrap(angles)[..., None])


def _s2_patches(n1, n2) -> ManifoldImage:
    """Four tiles of great-circle ramps with jumps along the tile edges."""
    s, t = _coords(n1, n2)
    ls = np.where(s < 0.5, 2 * s, 2 * s - 1.0)
    lt = np.where(t < 0.5, 2 * t, 2 * t - 1.0)
    out = np.empty((n1, n2, 3))

    def ramp(p, d, theta):
        return (np.cos(theta)[..., None] * np.asarray(p)
                + np.sin(theta)[..., None] * np.asarray(d))

    tiles = [
        (s < 0.5) & (t < 0.5),
        (s < 0.5) & (t >= 0.5),
        (s >= 0.5) & (t < 0.5),
        (s >= 0.5) & (t >= 0.5),
    ]
    values = [
        ramp((0.0, 0.0, 1.0), (1.0, 0.0, 0.0), 0.5 * np.pi * ls),
        ramp((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), 0.5 * np.pi * lt),
        ramp((0.0, 1.0, 0.0), (0.0, 0.0, 1.0), np.pi / 3.0 * 0.5 * (ls + lt)),
        np.broadcast_to(np.full(3, 1.0 / np.sqrt(3.0)), (n1, n2, 3)),
    ]
    for mask, val in zip(tiles, values):
        out[mask] = val[mask]
    out /= np.linalg.norm(out, axis=-1, keepdims=True)
    return ManifoldImage(Sphere2(), out)


def _spd_gradient(n1, n2) -> ManifoldImage:
    """SPD(2) field: eigenvalue ramps along rows, rotating axes along
    columns, with a multiplicative jump in the right half."""
    s, t = _coords(n1, n2)
    lam1 = np.exp(0.8 * (2.0 * s - 1.0)) * np.where(t >= 0.5, 2.5, 1.0)
    lam2 = np.exp(-0.5 * (2.0 * s - 1.0))
    phi = (t - 0.5) * np.pi / 2.0
    c, sn = np.cos(phi), np.sin(phi)
    m00 = c * c * lam1 + sn * sn * lam2
    m11 = sn * sn * lam1 + c * c * lam2
    m01 = c * sn * (lam1 - lam2)
    data = np.stack([m00, m01, m01, m11], axis=-1)
    return ManifoldImage(SPD(2), data)


@dataclass(frozen=True)
class NoiseSpec:
    """Isotropic tangent-space Gaussian noise applied through exp."""

    sigma: float
    seed: int
    kind: str = "tangent-gaussian"

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ValidationError("--sigma must be finite and non-negative")
        if self.kind != "tangent-gaussian":
            raise ValidationError(f"unknown noise kind {self.kind!r}")


def add_noise(u: ManifoldImage, spec: NoiseSpec) -> ManifoldImage:
    """Per-pixel exp of a seeded Gaussian draw in an orthonormal tangent basis."""
    if spec.sigma == 0.0:
        return u.copy()
    man = u.manifold
    rng = np.random.default_rng(spec.seed)
    coeff = rng.normal(0.0, spec.sigma, u.shape + (man.dim,))
    basis = man.basis(u.data)
    v = np.einsum("...k,...kj->...j", coeff, basis)
    return ManifoldImage(man, man.exp(u.data, v))


def mse(u: ManifoldImage, u0: ManifoldImage) -> float:
    """Mean squared geodesic distance to the reference image."""
    if u.manifold != u0.manifold or u.shape != u0.shape:
        raise ValidationError("mse needs images with identical tag and shape")
    return float(np.mean(u.manifold.dist(u.data, u0.data) ** 2))
