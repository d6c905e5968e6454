"""Variational denoising of manifold-valued signals and images.

Exact geometry for the circle, the 2-sphere, SPD matrices, rotations and
their products; first and second order difference regularizers; subgradient,
half-quadratic, cyclic proximal point and Douglas-Rachford solvers; and a
small CLI for phantom/noise/denoise/mse/render pipelines.
"""

from .errors import (
    ConvergenceError,
    CutLocusError,
    DegenerateGeodesicError,
    InvalidPointError,
    ManivarError,
    ScheduleError,
    SingularCoefficientError,
    TagMismatchError,
    ValidationError,
)
from .manifolds import (
    SPD,
    Circle,
    Euclidean,
    Manifold,
    Point,
    Power,
    Product,
    Rotations3,
    Sphere2,
    TangentVector,
    distance,
    exp,
    geodesic_point,
    inner,
    log,
    parse_tag,
    reflect,
)

__version__ = "0.1.0"
