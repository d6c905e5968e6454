"""Deterministic PNG rendering of manifold-valued images.

S^1 maps to the hue wheel, S^2 directions to RGB, SPD matrices to ellipse
glyphs colored by principal-axis orientation, scalar Euclidean images to
grayscale.  Output bytes are a pure function of the input image.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import ValidationError
from .manifolds import SPD, Circle, Euclidean, Sphere2
from .models import ManifoldImage

#: upscaling factor for point-color renderings
SCALE = 6
#: glyph raster size per pixel for SPD tensors
GLYPH = 15
#: documented reference color of the S^2 north pole (0, 0, 1)
NORTH_POLE_RGB = (128, 128, 255)


def _hsv_to_rgb(h, s, v):
    """Vectorized HSV -> RGB on arrays in [0, 1]."""
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - f * s)
    t = v * (1.0 - (1.0 - f) * s)
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def _to_bytes(rgb: np.ndarray) -> np.ndarray:
    return np.clip(np.round(rgb * 255.0), 0, 255).astype(np.uint8)


def _upscale(img: np.ndarray, factor: int) -> np.ndarray:
    return np.repeat(np.repeat(img, factor, axis=0), factor, axis=1)


def render_array(u: ManifoldImage) -> np.ndarray:
    """RGB uint8 array for the image; raises for unsupported tags."""
    man = u.manifold
    if isinstance(man, Circle):
        hue = (u.data[..., 0] + np.pi) / (2.0 * np.pi)
        rgb = _hsv_to_rgb(hue, np.ones_like(hue), np.ones_like(hue))
        return _upscale(_to_bytes(rgb), SCALE)
    if isinstance(man, Sphere2):
        return _upscale(_to_bytes((u.data + 1.0) / 2.0), SCALE)
    if isinstance(man, SPD):
        return _render_spd(u)
    if isinstance(man, Euclidean) and man.m == 1:
        vals = u.data[..., 0]
        lo, hi = float(vals.min()), float(vals.max())
        norm = (vals - lo) / (hi - lo) if hi > lo else np.full_like(vals, 0.5)
        return _upscale(_to_bytes(np.stack([norm] * 3, axis=-1)), SCALE)
    raise ValidationError(
        f"rendering is not supported for manifold tag {man.expression()}"
    )


def _render_spd(u: ManifoldImage) -> np.ndarray:
    """Ellipse glyphs of the leading 2x2 block, hue = principal orientation."""
    d = u.manifold.d
    mats = u.data.reshape(u.shape + (d, d))[..., :2, :2]
    lam, vec = np.linalg.eigh(mats)
    lam_max = float(lam.max())
    # glyph template coordinates in [-1, 1]^2
    g = (np.arange(GLYPH) + 0.5) / GLYPH * 2.0 - 1.0
    qx, qy = np.meshgrid(g, g, indexing="ij")
    q = np.stack([qx, qy], axis=-1)  # (G, G, 2)
    inv = np.linalg.inv(mats) * lam_max
    quad = np.einsum("gha,ijab,ghb->ijgh", q, inv, q)
    inside = quad <= 1.0
    angle = np.arctan2(vec[..., 1, 1], vec[..., 0, 1])  # principal eigenvector
    hue = (np.mod(angle, np.pi)) / np.pi
    rgb = _hsv_to_rgb(hue, np.full_like(hue, 0.9), np.full_like(hue, 0.85))
    n1, n2 = u.shape
    canvas = np.ones((n1 * GLYPH, n2 * GLYPH, 3))
    tiles = inside.transpose(0, 2, 1, 3).reshape(n1 * GLYPH, n2 * GLYPH)
    colors = np.repeat(np.repeat(rgb, GLYPH, axis=0), GLYPH, axis=1)
    canvas[tiles] = colors[tiles]
    return _to_bytes(canvas)


def render_png(u: ManifoldImage, path) -> None:
    """Write the deterministic PNG rendering of the image."""
    Image.fromarray(render_array(u), mode="RGB").save(path, format="PNG")
