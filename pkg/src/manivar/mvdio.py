"""The MVD1 text container for manifold-valued images.

Layout: a magic line ``MVD1``, the manifold tag expression, the grid size
``n1 n2``, then one whitespace-separated line of chart coordinates per pixel
in row-major order, printed with 17 significant digits (lossless for
float64).
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidPointError, ValidationError
from .manifolds import parse_tag
from .models import ManifoldImage

MAGIC = "MVD1"


def write_mvd(image: ManifoldImage, path) -> None:
    man = image.manifold
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{MAGIC}\n{man.expression()}\n{image.n1} {image.n2}\n")
        flat = image.data.reshape(-1, man.point_size)
        for row in flat:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_mvd(path) -> ManifoldImage:
    with open(path, "r", encoding="ascii") as fh:
        text = fh.read()
    lines = text.split("\n")
    if len(lines) < 3 or lines[0].strip() != MAGIC:
        raise ValidationError(f"{path}: not an MVD1 file (bad magic)")
    man = parse_tag(lines[1].strip())
    dims = lines[2].split()
    if len(dims) != 2:
        raise ValidationError(f"{path}: malformed grid-size line {lines[2]!r}")
    try:
        n1, n2 = int(dims[0]), int(dims[1])
    except ValueError as err:
        raise ValidationError(f"{path}: grid sizes must be integers") from err
    if n1 < 1 or n2 < 1:
        raise ValidationError(f"{path}: grid sizes must be positive")
    tokens = " ".join(lines[3:]).split()
    expected = n1 * n2 * man.point_size
    if len(tokens) != expected:
        raise ValidationError(
            f"{path}: expected {expected} coordinates, found {len(tokens)}"
        )
    try:
        data = np.array(tokens, float).reshape(n1, n2, man.point_size)
    except ValueError as err:
        raise ValidationError(f"{path}: non-numeric coordinate") from err
    image = ManifoldImage(man, data)
    try:
        image.validate()
    except InvalidPointError as err:
        raise ValidationError(f"{path}: invalid point data ({err})") from err
    return image
