import numpy as np
import pytest

from manivar import SPD, Circle, Euclidean, Power, Product, Rotations3, Sphere2

ALL_MANIFOLDS = [
    Euclidean(3),
    Circle(),
    Sphere2(),
    SPD(2),
    SPD(3),
    Rotations3(),
    Product([Circle(), SPD(2)]),
    Power(Sphere2(), 3),
]

CORE_MANIFOLDS = [Euclidean(3), Circle(), Sphere2(), SPD(2), SPD(3)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(params=ALL_MANIFOLDS, ids=lambda m: m.expression())
def manifold(request):
    return request.param


def sample_pair(man, rng, scale=0.5, n=1):
    """Random points with a controlled separation (clear of cut loci)."""
    x = man.random_point(rng, (n,))
    v = man.random_tangent(rng, x, scale)
    return x, man.exp(x, v)
