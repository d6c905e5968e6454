"""Manifold instances, typed point wrappers, and the tag-expression parser."""

from __future__ import annotations

from ..errors import ValidationError
from .base import (
    Manifold,
    Point,
    TangentVector,
    distance,
    exp,
    geodesic_point,
    inner,
    log,
    reflect,
)
from .circle import Circle, wrap
from .euclidean import Euclidean
from .product import Power, Product
from .rotations import Rotations3
from .sphere import Sphere2
from .spd import SPD

__all__ = [
    "Manifold", "Point", "TangentVector",
    "Circle", "Euclidean", "Power", "Product", "Rotations3", "SPD", "Sphere2",
    "distance", "exp", "log", "geodesic_point", "inner", "reflect",
    "parse_tag", "wrap",
]


def parse_tag(expr: str) -> Manifold:
    """Parse a manifold tag expression such as ``Power(SPD(3),4)``.

    Grammar: ``Circle | Sphere2 | Rotations3 | Euclidean(m) | SPD(d) |
    Product(tag, ...) | Power(tag, n)``.  Whitespace is ignored.
    """
    text = "".join(expr.split())
    tag, rest = _parse(text)
    if rest:
        raise ValidationError(f"trailing characters in tag expression: {rest!r}")
    return tag


def _parse(text: str):
    for name in ("Circle", "Sphere2", "Rotations3"):
        if text.startswith(name):
            return {"Circle": Circle, "Sphere2": Sphere2, "Rotations3": Rotations3}[
                name
            ](), text[len(name):]
    for name in ("Euclidean", "SPD"):
        if text.startswith(name + "("):
            body, rest = _balanced(text[len(name):])
            if not body.isdigit():
                raise ValidationError(f"{name} takes an integer argument, got {body!r}")
            return (Euclidean if name == "Euclidean" else SPD)(int(body)), rest
    if text.startswith("Product("):
        body, rest = _balanced(text[len("Product"):])
        parts = _split_top(body)
        if not parts:
            raise ValidationError("Product needs at least one component")
        comps = []
        for part in parts:
            tag, leftover = _parse(part)
            if leftover:
                raise ValidationError(f"bad Product component: {part!r}")
            comps.append(tag)
        return Product(comps), rest
    if text.startswith("Power("):
        body, rest = _balanced(text[len("Power"):])
        parts = _split_top(body)
        if len(parts) != 2 or not parts[1].isdigit():
            raise ValidationError("Power takes (tag, integer)")
        tag, leftover = _parse(parts[0])
        if leftover:
            raise ValidationError(f"bad Power base: {parts[0]!r}")
        return Power(tag, int(parts[1])), rest
    raise ValidationError(f"unrecognized manifold tag: {text!r}")


def _balanced(text: str):
    """Split '(...)rest' into the parenthesized body and the remainder."""
    if not text.startswith("("):
        raise ValidationError(f"expected '(' in tag expression at {text!r}")
    depth = 0
    for i, ch in enumerate(text):
        depth += ch == "("
        depth -= ch == ")"
        if depth == 0:
            return text[1:i], text[i + 1:]
    raise ValidationError("unbalanced parentheses in tag expression")


def _split_top(body: str):
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(body):
        depth += ch == "("
        depth -= ch == ")"
        if ch == "," and depth == 0:
            parts.append(body[start:i])
            start = i + 1
    if body[start:]:
        parts.append(body[start:])
    return parts
