"""Arrival-time function: fhat(eig(gamma_eps D2v gamma_eps)) = 1 in U, v = 0 on the boundary."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .cone import CurvatureSpec
from .errors import NonConvergence
from .evolve import cfl_dt
from .grid import RegularizationParams, ScalarField, kernel_args, mask_runs


def _axis_neighbors_outside(inside: np.ndarray) -> np.ndarray:
    """True where some axis neighbour is outside (array edges count as outside)."""
    out = np.zeros_like(inside)
    pad = np.pad(inside, 1, constant_values=False)
    d = inside.ndim
    core = tuple(slice(1, -1) for _ in range(d))
    for a in range(d):
        for s in (-1, 1):
            sl = list(core)
            sl[a] = slice(1 + s, pad.shape[a] - 1 + s)
            out |= ~pad[tuple(sl)]
    return out


def _shift(a: np.ndarray, axis: int, s: int, fill=False) -> np.ndarray:
    """``out[x] = a[x + s e_axis]`` with ``fill`` past the edge."""
    out = np.full_like(a, fill)
    n = a.shape[axis]
    src = [slice(None)] * a.ndim
    dst = [slice(None)] * a.ndim
    if s >= 0:
        src[axis], dst[axis] = slice(s, n), slice(0, n - s)
    else:
        src[axis], dst[axis] = slice(0, n + s), slice(-s, n)
    out[tuple(dst)] = a[tuple(src)]
    return out


def _stencil_reach(m: np.ndarray) -> np.ndarray:
    """Nodes within one step (diagonals included) of a True node."""
    out = m.copy()
    for a in range(m.ndim):
        out = out | _shift(out, a, 1) | _shift(out, a, -1)
    return out


@dataclass
class DomainMask:
    """Cells of a bounded open set U on the grid of ``template``."""

    template: ScalarField
    inside: np.ndarray

    def __post_init__(self):
        self.inside = np.asarray(self.inside, dtype=bool)
        if self.inside.shape != self.template.shape:
            raise ValueError("mask shape does not match the grid")
        if np.any(self.inside & self.template.far_mask()):
            raise ValueError("U must lie inside |x| < S")
        if self.inside.any():
            from skimage.measure import label

            lab = label(np.pad(~self.inside, 1, constant_values=True), connectivity=1)
            if lab.max() > 1:
                raise ValueError("complement of U must be connected to the grid boundary")

    @classmethod
    def from_shape(cls, shape, template: ScalarField) -> "DomainMask":
        return cls(template, shape.distance(template.coords()) < 0)

    @property
    def band(self) -> np.ndarray:
        """Cells of U with an axis neighbour outside U."""
        return self.inside & _axis_neighbors_outside(self.inside)

    @property
    def interior(self) -> np.ndarray:
        return self.inside & ~self.band

    def ghost_map(self):
        """Ghost nodes outside U read by interior stencils, with their reflection sources.

        A ghost g with band neighbour b = g + s e_a and b + s e_a in U takes
        ``-w(b + s e_a)`` (odd reflection through the zero band), averaged over
        all such directions.  Returns flat ghost indices, and (row, source)
        pairs into them.
        """
        ins, band = self.inside, self.band
        ghost = _stencil_reach(self.interior) & ~ins
        gflat = np.flatnonzero(ghost)
        pos = np.full(ins.size, -1)
        pos[gflat] = np.arange(len(gflat))
        strides = np.array(ins.strides) // ins.itemsize
        rows, cols = [], []
        for a in range(ins.ndim):
            for s in (-1, 1):
                ok = ghost & _shift(band, a, s) & _shift(ins, a, 2 * s)
                g = np.flatnonzero(ok)
                rows.append(pos[g])
                cols.append(g + 2 * s * strides[a])
        return gflat, np.concatenate(rows), np.concatenate(cols)


@dataclass
class ArrivalSolution:
    v: ScalarField
    residual: float
    iterations: int
    A: float
    dtau: float


def band_distance(mask: DomainMask, chunk: int = 4096) -> np.ndarray:
    """Distance from every node to the nearest boundary-band node (brute force)."""
    pos = np.stack([c.reshape(-1) for c in mask.template.coords()], axis=1)
    bpts = pos[mask.band.reshape(-1)]
    out = np.full(len(pos), np.inf)
    if len(bpts) == 0:
        return out.reshape(mask.template.shape)
    for s in range(0, len(pos), chunk):
        d2 = ((pos[s : s + chunk, None, :] - bpts[None, :, :]) ** 2).sum(-1)
        out[s : s + chunk] = np.sqrt(d2.min(1))
    return out.reshape(mask.template.shape)


def gradient_magnitude(v: ScalarField) -> np.ndarray:
    """Per-node |Dv| from the larger one-sided difference quotient along each axis."""
    u = v.values
    sq = np.zeros(u.shape)
    for a in range(v.dims):
        d = np.abs(np.diff(u, axis=a)) / v.h
        lo = [slice(None)] * v.dims
        hi = [slice(None)] * v.dims
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        m = np.zeros(u.shape)
        m[tuple(lo)] = d
        m[tuple(hi)] = np.maximum(m[tuple(hi)], d)
        sq += m * m
    return np.sqrt(sq)


def boundary_gradient(v: ScalarField, mask: DomainMask, cells: int = 2, dist=None) -> float:
    """Largest |Dv| over nodes of U within ``cells`` grid cells of the boundary band."""
    dist = band_distance(mask) if dist is None else dist
    near = mask.inside & (dist <= cells * v.h + 1e-12)
    if not near.any():
        return 0.0
    return float(gradient_magnitude(v)[near].max())


def solve_stationary(mask: DomainMask, spec: CurvatureSpec, params: RegularizationParams,
                     tol: float = 1e-4, max_iters: int = 200000, dtau: float | None = None,
                     check_every: int = 50) -> ArrivalSolution:
    """Pseudo-time relaxation ``w <- w + dtau (op(w) - 1)`` with ``w = 0`` on the band.

    The mixed-derivative stencil of interior nodes next to a staircase
    boundary reaches nodes outside U; those hold ghost values continued by odd
    reflection through the band (see ``DomainMask.ghost_map``) rather than 0,
    which would put an O(1/h) kink into the Hessian.  The returned v is 0
    outside U.  The stationary operator carries no Laplacian term, so
    ``params.sigma`` is ignored.  Stops when max |op - 1| over the interior is
    at most ``tol``.
    """
    geo = RegularizationParams(params.eps, params.n_cut, 0.0)
    tmpl = mask.template
    w = np.zeros(tmpl.shape)
    limit = cfl_dt(geo, tmpl.h, spec)
    dtau = limit if dtau is None else min(dtau, limit)
    runs = mask_runs(mask.interior)
    field0 = ScalarField(tmpl.dims, tmpl.h, tmpl.origin, w, 0.0, tmpl.S)
    if len(runs) == 0:
        return ArrivalSolution(field0, 0.0, 0, 0.0, dtau)
    args = kernel_args(spec, geo)
    kern = K.sweep2 if tmpl.dims == 2 else K.sweep3
    out = w.copy()
    gflat, rows, cols = mask.ghost_map()
    cnt = np.bincount(rows, minlength=len(gflat))
    fed = cnt > 0
    gfed, cnt = gflat[fed], cnt[fed]
    resid = np.inf
    it = 0
    while it < max_iters:
        wf = w.reshape(-1)
        wf[gfed] = np.bincount(rows, weights=-wf[cols], minlength=len(gflat))[fed] / cnt
        r = kern(w, out, runs, dtau, 1.0, tmpl.h, geo.eps, 0.0, *args)
        it += 1
        if not np.isfinite(r) or (it % check_every == 0 and not np.isfinite(out).all()):
            raise NonConvergence("non-finite value during relaxation", residual=np.inf)
        w, out = out, w
        if it % check_every == 0 or it == max_iters:
            resid = r
            if resid <= tol:
                break
    if resid > tol:
        raise NonConvergence(f"residual {resid:.3e} > tol {tol:.1e} after {it} iterations", residual=resid)
    w[~mask.inside] = 0.0
    v = field0.with_values(w)
    A = boundary_gradient(v, mask)
    return ArrivalSolution(v, float(resid), it, A, dtau)


def extinction_time(v: ScalarField, mask: DomainMask) -> float:
    """``max over U of |v|`` (0 for an empty domain)."""
    if not mask.inside.any():
        return 0.0
    return float(np.abs(v.values[mask.inside]).max())


def barrier_log(d, delta0: float, lam: float):
    """``lam * log((2 delta0 - d) / (2 delta0))`` for ``d < 2 delta0``."""
    d = np.asarray(d, dtype=float)
    return lam * np.log((2.0 * delta0 - d) / (2.0 * delta0))


def check_bounds(sol: ArrivalSolution, mask: DomainMask, delta0: float | None = None) -> dict:
    """Audit ``v <= 0``, ``v >= -A dist`` and the logarithmic barrier within ``delta0`` of the band."""
    v = sol.v.values
    ins = mask.inside
    dist = band_distance(mask)
    delta0 = 10.0 * sol.v.h if delta0 is None else delta0
    lam = 2.0 * delta0 * sol.A
    near = ins & (dist < delta0)
    return {
        "max_v": float(v[ins].max()) if ins.any() else 0.0,
        "lower_violation": float(np.max(-sol.A * dist[ins] - v[ins], initial=-np.inf)),
        "barrier_violation": float(np.max(barrier_log(dist[near], delta0, lam) - v[near], initial=-np.inf)),
        "lambda": lam,
    }
