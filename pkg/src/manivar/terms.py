"""Proximal term splitting of the model functionals.

A model objective is decomposed into an ordered list of terms, each with an
exact or numerical prox acting on disjoint pixel groups: the data term
first, then the x- and y-difference families (even/odd batches), then the
second-order stencil families (residue classes mod 3 along the stencil axis,
and 2x2 parities for the mixed stencils).  Each term carries its model
weight; cyclic algorithms scale the prox parameter as lambda = tau_r * weight.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import CutLocusError, ValidationError
from .manifolds import Circle, Manifold
from .models import (
    ManifoldImage,
    ModelConfig,
    mixed_difference_arrays,
    second_difference_arrays,
)
from .prox import (
    prox_circle_diff_arrays,
    prox_d11_arrays,
    prox_d2_arrays,
    prox_pair_arrays,
    prox_point_arrays,
)


def _chunks(n: int, workers: int):
    if workers <= 1 or n < 2 * workers:
        return [slice(0, n)]
    bounds = np.linspace(0, n, workers + 1, dtype=int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _run_chunked(fn, n: int, workers: int):
    """Apply fn to row chunks; disjoint writes keep results bit-identical."""
    parts = _chunks(n, workers)
    if len(parts) == 1:
        fn(parts[0])
        return
    with ThreadPoolExecutor(max_workers=len(parts)) as pool:
        list(pool.map(fn, parts))


class ProxTerm(ABC):
    """One summand of the objective with an implementable prox."""

    name: str
    weight: float

    @abstractmethod
    def value(self, u: np.ndarray) -> float: ...

    @abstractmethod
    def apply_prox(self, u: np.ndarray, lam: float, workers: int = 1,
                   inner_tol: float | None = None) -> np.ndarray:
        """Return the prox of (lam * weight * term) applied to the image array."""


class DataTerm(ProxTerm):
    """1/2 sum_i dist^2(u_i, f_i); prox is pointwise geodesic shrinkage."""

    def __init__(self, man: Manifold, f: np.ndarray, weight: float = 1.0):
        self.man = man
        self.f = np.asarray(f, float)
        self.weight = weight
        self.name = "data"

    def value(self, u):
        return self.weight * 0.5 * float(np.sum(self.man.dist(u, self.f) ** 2))

    def apply_prox(self, u, lam, workers=1, inner_tol=None):
        out = np.array(u, float)
        eff = lam * self.weight

        def work(sl):
            out[sl] = prox_point_arrays(self.man, u[sl], self.f[sl], eff, p=2)

        _run_chunked(work, u.shape[0], workers)
        return out


class PairDiffTerm(ProxTerm):
    """weight * sum (1/p) dist(u_i, u_j)^p over one parity batch of edges."""

    def __init__(self, man: Manifold, axis: int, parity: int, weight: float,
                 p: int, shape, cross=None):
        self.man = man
        self.axis = axis
        self.parity = parity
        self.weight = weight
        self.p = p
        n = shape[axis]
        self.idx = np.arange(parity, n - 1, 2)
        self.cross = cross  # optional index array on the other axis
        self.name = f"{'xy'[axis]}-edges[{parity}]" + ("" if cross is None else "/restricted")

    def _slices(self, u):
        if self.axis == 0:
            a = u[self.idx][:, self.cross] if self.cross is not None else u[self.idx]
            b = u[self.idx + 1][:, self.cross] if self.cross is not None else u[self.idx + 1]
        else:
            a = u[:, self.idx] if self.cross is None else u[self.cross][:, self.idx]
            b = u[:, self.idx + 1] if self.cross is None else u[self.cross][:, self.idx + 1]
        return a, b

    def _write(self, out, a, b):
        if self.axis == 0:
            if self.cross is None:
                out[self.idx] = a
                out[self.idx + 1] = b
            else:
                out[np.ix_(self.idx, self.cross)] = a
                out[np.ix_(self.idx + 1, self.cross)] = b
        else:
            if self.cross is None:
                out[:, self.idx] = a
                out[:, self.idx + 1] = b
            else:
                out[np.ix_(self.cross, self.idx)] = a
                out[np.ix_(self.cross, self.idx + 1)] = b

    def value(self, u):
        if self.idx.size == 0:
            return 0.0
        a, b = self._slices(u)
        return self.weight * float(np.sum(self.man.dist(a, b) ** self.p)) / self.p

    def apply_prox(self, u, lam, workers=1, inner_tol=None):
        out = np.array(u, float)
        if self.idx.size == 0:
            return out
        a, b = self._slices(u)
        eff = lam * self.weight
        if isinstance(self.man, Circle):
            x = np.concatenate([a, b], axis=-1)
            pa, _, _ = prox_circle_diff_arrays(x, eff, nu=1, power=self.p)
            na, nb = pa[..., :1], pa[..., 1:]
        else:
            na, nb = prox_pair_arrays(self.man, a, b, eff, self.p)
        self._write(out, na, nb)
        return out


class SecondDiffTerm(ProxTerm):
    """weight * sum d2(u_{i+e}, u_i, u_{i-e})^p over a residue-class batch.

    On S^1 the analytic cyclic prox applies with lambda halved (p=1) or
    quartered (p=2) because the cyclic second difference is twice the
    midpoint-based d2; elsewhere the Armijo descent prox runs, vectorized
    over the batch.
    """

    def __init__(self, man: Manifold, axis: int, residue: int, weight: float,
                 p: int, shape):
        self.man = man
        self.axis = axis
        self.weight = weight
        self.p = p
        n = shape[axis]
        self.centers = np.arange(1 + residue, n - 1, 3)
        self.name = f"d_{'xy'[axis]*2}[{residue}]"

    def _slices(self, u):
        c = self.centers
        if self.axis == 0:
            return u[c + 1], u[c], u[c - 1]
        return u[:, c + 1], u[:, c], u[:, c - 1]

    def value(self, u):
        if self.centers.size == 0:
            return 0.0
        a, b, c = self._slices(u)
        return self.weight * float(
            np.sum(second_difference_arrays(self.man, a, b, c) ** self.p)
        )

    def apply_prox(self, u, lam, workers=1, inner_tol=None):
        out = np.array(u, float)
        if self.centers.size == 0:
            return out
        a, b, c = self._slices(u)
        eff = lam * self.weight
        if isinstance(self.man, Circle):
            x = np.concatenate([a, b, c], axis=-1)
            eff = eff / 2.0  # cyclic functional is twice the midpoint d2
            pa, _, _ = prox_circle_diff_arrays(x, eff, nu=2, power=self.p)
            na, nb, nc = pa[..., :1], pa[..., 1:2], pa[..., 2:]
        else:
            tol = inner_tol if inner_tol is not None else 1e-8
            cap = 80 if inner_tol is not None else 200
            (na, nb, nc), _ = prox_d2_arrays(
                self.man, a, b, c, np.broadcast_to(eff, a.shape[:-1]), self.p,
                tol=tol, max_iter=cap,
            )
        cidx = self.centers
        if self.axis == 0:
            out[cidx + 1], out[cidx], out[cidx - 1] = na, nb, nc
        else:
            out[:, cidx + 1], out[:, cidx], out[:, cidx - 1] = na, nb, nc
        return out


class MixedDiffTerm(ProxTerm):
    """weight * sum d11 over a 2x2 parity batch of mixed stencils.

    kind "xy": stencil (u_i, u_{i+(0,-1)}, u_{i+(1,0)}, u_{i+(1,-1)});
    kind "yx" mirrors the axes.  Proxes are numerical on every manifold
    (the analytic S^1 family is not extended to mixed differences).
    """

    def __init__(self, man: Manifold, kind: str, par1: int, par2: int,
                 weight: float, p: int, shape):
        self.man = man
        self.kind = kind
        self.weight = weight
        self.p = p
        n1, n2 = shape
        if kind == "xy":
            rows = np.arange(par1, n1 - 1, 2)
            cols = np.arange(1 + par2, n2 - 1, 2)
        else:
            rows = np.arange(1 + par1, n1 - 1, 2)
            cols = np.arange(par2, n2 - 1, 2)
        self.rows, self.cols = rows, cols
        self.name = f"d_{kind}[{par1}{par2}]"

    def _grids(self):
        return np.meshgrid(self.rows, self.cols, indexing="ij")

    def _slots(self, u):
        # diagonal pairing of the 2x2 block: pairs (a, c) and (b, d)
        rr, cc = self._grids()
        if self.kind == "xy":
            return (u[rr, cc], u[rr, cc - 1], u[rr + 1, cc - 1], u[rr + 1, cc]), (rr, cc)
        return (u[rr, cc], u[rr - 1, cc], u[rr - 1, cc + 1], u[rr, cc + 1]), (rr, cc)

    def value(self, u):
        if self.rows.size == 0 or self.cols.size == 0:
            return 0.0
        (a, b, c, d), _ = self._slots(u)
        return self.weight * float(
            np.sum(mixed_difference_arrays(self.man, a, b, c, d) ** self.p)
        )

    def apply_prox(self, u, lam, workers=1, inner_tol=None):
        out = np.array(u, float)
        if self.rows.size == 0 or self.cols.size == 0:
            return out
        (a, b, c, d), (rr, cc) = self._slots(u)
        eff = np.broadcast_to(lam * self.weight, a.shape[:-1])
        tol = inner_tol if inner_tol is not None else 1e-8
        cap = 80 if inner_tol is not None else 200
        (na, nb, nc, nd), _ = prox_d11_arrays(self.man, a, b, c, d, eff, self.p,
                                              tol=tol, max_iter=cap)
        if self.kind == "xy":
            out[rr, cc], out[rr, cc - 1] = na, nb
            out[rr + 1, cc - 1], out[rr + 1, cc] = nc, nd
        else:
            out[rr, cc], out[rr - 1, cc] = na, nb
            out[rr - 1, cc + 1], out[rr, cc + 1] = nc, nd
        return out


class IsoTVTerm(ProxTerm):
    """Isotropic first-order pixel terms sqrt(dx^2 + dy^2), one parity batch.

    Pixels with both forward neighbors couple three points and run the
    numerical prox; the boundary row/column pixels degenerate to plain pair
    terms and are emitted separately by the splitter.
    """

    def __init__(self, man: Manifold, par1: int, par2: int, weight: float, shape):
        self.man = man
        self.weight = weight
        n1, n2 = shape
        self.rows = np.arange(par1, n1 - 1, 2)
        self.cols = np.arange(par2, n2 - 1, 2)
        self.name = f"iso-tv[{par1}{par2}]"

    def _slots(self, u):
        rr, cc = np.meshgrid(self.rows, self.cols, indexing="ij")
        return (u[rr, cc], u[rr + 1, cc], u[rr, cc + 1]), (rr, cc)

    def value(self, u):
        if self.rows.size == 0 or self.cols.size == 0:
            return 0.0
        (c, r, d), _ = self._slots(u)
        dx = self.man.dist(c, r)
        dy = self.man.dist(c, d)
        return self.weight * float(np.sum(np.sqrt(dx**2 + dy**2)))

    def apply_prox(self, u, lam, workers=1, inner_tol=None):
        from .prox import armijo_prox

        out = np.array(u, float)
        if self.rows.size == 0 or self.cols.size == 0:
            return out
        (c, r, d), (rr, cc) = self._slots(u)
        man = self.man

        def term(ps):
            pc, pr, pd = ps
            dx = man.dist(pc, pr)
            dy = man.dist(pc, pd)
            agg = np.sqrt(dx**2 + dy**2)
            pos = agg > 0
            w = np.where(pos, 1.0 / np.where(pos, agg, 1.0), 0.0)[..., None]
            gc = -(man.log(pc, pr) + man.log(pc, pd)) * w
            gr = -man.log(pr, pc) * w
            gd = -man.log(pd, pc) * w
            return agg, (gc, gr, gd)

        eff = np.broadcast_to(lam * self.weight, c.shape[:-1])
        (nc, nr, nd), _ = armijo_prox(man, [c, r, d], term, eff)
        out[rr, cc], out[rr + 1, cc], out[rr, cc + 1] = nc, nr, nd
        return out


def build_terms(f: ManifoldImage, config: ModelConfig) -> list[ProxTerm]:
    """Ordered prox splitting of the model at data image f.

    Raises ValidationError for model/p combinations without a usable
    splitting (tvphi needs the half-quadratic or subgradient solvers;
    second-order models are split only in their anisotropic p=1 form).
    """
    man, shape = f.manifold, f.shape
    n1, n2 = shape
    if config.model == "tvphi":
        raise ValidationError(
            "the smoothed tvphi model has no proximal splitting; "
            "use --solver hq or --solver subgradient"
        )
    if config.model == "tgv":
        raise ValidationError(
            "the tgv model minimizes over an auxiliary tangent field and has "
            "no proximal splitting; use --solver subgradient"
        )
    if config.model in ("tv2", "tvtv2") and config.p == 2:
        raise ValidationError(
            f"isotropic (p=2) {config.model} has no proximal splitting here; "
            "use --solver subgradient"
        )
    terms: list[ProxTerm] = [DataTerm(man, f.data)]
    tv_w = tv2_w = None
    if config.model == "tv":
        tv_w = config.alpha
    elif config.model == "tv2":
        tv2_w = config.alpha
    elif config.model == "tvtv2":
        tv_w = config.alpha * config.beta
        tv2_w = config.alpha * (1.0 - config.beta)

    if tv_w is not None:
        if config.p == 1:
            for axis in (0, 1):
                if shape[axis] > 1:
                    for parity in (0, 1):
                        terms.append(PairDiffTerm(man, axis, parity, tv_w, 1, shape))
        else:
            if n1 > 1 and n2 > 1:
                for par1 in (0, 1):
                    for par2 in (0, 1):
                        terms.append(IsoTVTerm(man, par1, par2, tv_w, shape))
                # boundary pixels degenerate to pair terms
                for parity in (0, 1):
                    terms.append(PairDiffTerm(man, 1, parity, tv_w, 1, shape,
                                              cross=np.array([n1 - 1])))
                    terms.append(PairDiffTerm(man, 0, parity, tv_w, 1, shape,
                                              cross=np.array([n2 - 1])))
            else:
                # a signal's isotropic TV coincides with the anisotropic one
                axis = 0 if n1 > 1 else 1
                for parity in (0, 1):
                    terms.append(PairDiffTerm(man, axis, parity, tv_w, 1, shape))

    if tv2_w is not None:
        for axis in (0, 1):
            if shape[axis] > 2:
                for residue in (0, 1, 2):
                    terms.append(
                        SecondDiffTerm(man, axis, residue, tv2_w, config.p, shape)
                    )
        if n1 > 1 and n2 > 2:
            for par1 in (0, 1):
                for par2 in (0, 1):
                    terms.append(
                        MixedDiffTerm(man, "xy", par1, par2, tv2_w, config.p, shape)
                    )
        if n2 > 1 and n1 > 2:
            for par1 in (0, 1):
                for par2 in (0, 1):
                    terms.append(
                        MixedDiffTerm(man, "yx", par1, par2, tv2_w, config.p, shape)
                    )
    return [t for t in terms if _nonempty(t)]


def _nonempty(term: ProxTerm) -> bool:
    for attr in ("idx", "centers"):
        if hasattr(term, attr) and getattr(term, attr).size == 0:
            return False
    if hasattr(term, "rows") and (term.rows.size == 0 or term.cols.size == 0):
        return False
    return True


def terms_objective(terms, u: np.ndarray) -> float:
    return float(sum(t.value(u) for t in terms))


def apply_term_prox(term: ProxTerm, u: np.ndarray, lam: float, index: int,
                    workers: int = 1, inner_tol: float | None = None) -> np.ndarray:
    """Run one prox, annotating geometry errors with the term's identity."""
    try:
        return term.apply_prox(u, lam, workers=workers, inner_tol=inner_tol)
    except CutLocusError as err:
        raise CutLocusError(
            f"term {index} ({term.name}): {err}", indices=err.indices,
            substep=term.name,
        ) from err
