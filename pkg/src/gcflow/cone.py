"""Symmetric curvature functions, their admissible cones, and the concave envelope.

Two families are supported, both normalized so that ``f(1, ..., 1) = 1``:

* ``sigma``:    f = (sigma_k / C(n, k)) ** (1 / k), admissible cone Gamma_k
* ``quotient``: f = ((sigma_k / sigma_l) / (C(n, k) / C(n, l))) ** (1 / (k - l)), cone Gamma_k

Because f is homogeneous of degree one, every tangent plane passes through the
origin and ``Df`` is constant along rays.  The envelope ``fhat`` therefore only
depends on the set of admissible *directions* of the truncated region
``{f > 1/n, max < n}``, which is the open cone ``{max(d) < n**2 f(d)}``.
Outside that cone the infimum of tangent planes is attained on its boundary;
for sorted input the boundary can be restricted to the sorted chamber, which is
a single point in 2D and an arc in 3D.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

from .errors import ConeViolation, EnvelopeError

FAMILIES = ("sigma", "quotient")


@dataclass(frozen=True)
class CurvatureSpec:
    """A normalized symmetric curvature function of ``n_dim`` eigenvalues."""

    family: str
    k: int
    n_dim: int
    l: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown curvature family {self.family!r}")
        if self.n_dim < 1:
            raise ValueError("n_dim must be positive")
        if not 1 <= self.k <= self.n_dim:
            raise ValueError(f"need 1 <= k <= n_dim, got k={self.k}")
        if self.family == "quotient":
            if not 1 <= self.l < self.k:
                raise ValueError(f"quotient family needs 1 <= l < k, got l={self.l}")
        elif self.l != 0:
            raise ValueError("sigma family takes no l")

    @property
    def power(self) -> int:
        return self.k - self.l if self.family == "quotient" else self.k

    @property
    def normalization(self) -> float:
        if self.family == "quotient":
            return comb(self.n_dim, self.k) / comb(self.n_dim, self.l)
        return float(comb(self.n_dim, self.k))

    @property
    def linear(self) -> bool:
        return self.family == "sigma" and self.k == 1

    @property
    def label(self) -> str:
        if self.family == "quotient":
            return f"quotient({self.k},{self.l})"
        return f"sigma{self.k}"


@dataclass(frozen=True)
class ConeCut:
    """Truncation level ``n`` of the region ``{f > 1/n, max < n}``."""

    n_cut: int

    def __post_init__(self):
        if int(self.n_cut) != self.n_cut or self.n_cut <= 1:
            raise ValueError(f"n_cut must be an integer > 1, got {self.n_cut}")


def _esym(xs: list, kmax: int) -> list:
    # plain floats: the vectors are tiny and numpy call overhead dominates
    e = [1.0] + [0.0] * kmax
    for v in xs:
        for j in range(kmax, 0, -1):
            e[j] += v * e[j - 1]
    return e


def elementary_symmetric(x, kmax: int) -> np.ndarray:
    """Return ``[sigma_0, ..., sigma_kmax]`` of the entries of ``x``."""
    return np.array(_esym(np.asarray(x, dtype=float).ravel().tolist(), kmax))


def _esym_removed(xs: list, full: list, kmax: int) -> list:
    rows = []
    for v in xs:
        r = [1.0]
        for j in range(1, kmax + 1):
            r.append(full[j] - v * r[j - 1])
        rows.append(r)
    return rows


def elementary_symmetric_removed(x, kmax: int) -> np.ndarray:
    """Row ``i`` holds ``sigma_j`` of ``x`` with entry ``i`` removed, j = 0..kmax.

    Uses sigma_j(x | i) = sigma_j(x) - x_i sigma_{j-1}(x | i).
    """
    xs = np.asarray(x, dtype=float).ravel().tolist()
    return np.array(_esym_removed(xs, _esym(xs, kmax), kmax)).reshape(len(xs), kmax + 1)


def _ratio(spec: CurvatureSpec, e: np.ndarray) -> float:
    if spec.family == "quotient":
        if e[spec.l] == 0.0:
            raise ConeViolation(f"sigma_{spec.l} vanishes; quotient undefined")
        return e[spec.k] / e[spec.l]
    return e[spec.k]


def _in_gamma(spec: CurvatureSpec, e: np.ndarray) -> bool:
    return bool(np.all(e[1 : spec.k + 1] > 0.0))


def eval_f(spec: CurvatureSpec, kappa) -> float:
    """Evaluate the normalized curvature function.

    Outside the cone the odd-root convention ``sign(s) |s|**(1/p)`` is used, so
    the value is finite but carries no geometric meaning there.
    """
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != (spec.n_dim,):
        raise ValueError(f"expected {spec.n_dim} eigenvalues, got shape {kappa.shape}")
    if spec.linear:
        return float(kappa.sum() / spec.n_dim)
    s = _ratio(spec, elementary_symmetric(kappa, spec.k)) / spec.normalization
    return float(np.sign(s) * abs(s) ** (1.0 / spec.power))


def grad_f(spec: CurvatureSpec, kappa) -> np.ndarray:
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != (spec.n_dim,):
        raise ValueError(f"expected {spec.n_dim} eigenvalues, got shape {kappa.shape}")
    if spec.linear:
        return np.full(spec.n_dim, 1.0 / spec.n_dim)
    xs = kappa.tolist()
    k = spec.k
    e = _esym(xs, k)
    if not all(v > 0.0 for v in e[1 : k + 1]):
        raise ConeViolation(f"kappa={xs} is outside the admissible cone")
    er = _esym_removed(xs, e, k)
    p = spec.power
    if spec.family == "quotient":
        l = spec.l
        f = (e[k] / e[l] / spec.normalization) ** (1.0 / p)
        dq = [(r[k - 1] * e[l] - e[k] * r[l - 1]) / e[l] ** 2 for r in er]
    else:
        f = (e[k] / spec.normalization) ** (1.0 / p)
        dq = [r[k - 1] for r in er]
    c = f ** (1 - p) / (p * spec.normalization)
    return np.array([c * d for d in dq])


def cone_membership(spec: CurvatureSpec, kappa, cut: ConeCut | None = None) -> bool:
    """True iff ``kappa`` is in the cone (and in the truncated region when ``cut`` is given)."""
    kappa = np.asarray(kappa, dtype=float)
    e = elementary_symmetric(kappa, spec.k)
    if not _in_gamma(spec, e):
        return False
    if cut is None:
        return True
    return bool(eval_f(spec, kappa) > 1.0 / cut.n_cut and kappa.max() < cut.n_cut)


def in_equality_region(spec: CurvatureSpec, kappa, cut: ConeCut) -> bool:
    """True iff the ray through ``kappa`` meets the truncated region.

    On this open cone the envelope coincides with ``f``.
    """
    kappa = np.asarray(kappa, dtype=float)
    if not cone_membership(spec, kappa):
        return False
    return bool(kappa.max() < cut.n_cut**2 * eval_f(spec, kappa))


# -- boundary of the admissible direction cone, restricted to sorted directions --


def _solve_first(spec: CurvatureSpec, rest, level: float) -> float:
    """Solve ``f(a, *rest) = level`` for ``a``; sigma_j is affine in each entry."""
    r = elementary_symmetric(rest, spec.k)
    k = spec.k
    if spec.family == "quotient":
        l = spec.l
        target = spec.normalization * level ** (k - l)
        return (target * r[l] - r[k]) / (r[k - 1] - target * r[l - 1])
    target = spec.normalization * level**k
    return (target - r[k]) / r[k - 1]


@lru_cache(maxsize=64)
def _diagonal_lower(spec: CurvatureSpec, n_cut: int) -> float:
    """Smallest ``b`` with ``f(b, ..., b, 1) >= 1/n**2`` (the sorted chamber edge)."""
    level = 1.0 / n_cut**2
    n = spec.n_dim

    def ok(b):
        x = np.full(n, b)
        x[-1] = 1.0
        return cone_membership(spec, x) and eval_f(spec, x) >= level

    lo, hi = -1.0, 1.0
    while ok(lo):
        lo *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-16 * max(1.0, abs(hi)):
            break
    return hi


def boundary_point(spec: CurvatureSpec, cut: ConeCut, b: float | None = None) -> np.ndarray:
    """Sorted direction on the boundary of the admissible direction cone.

    In 2D the point is unique and ``b`` is ignored; in 3D it is ``(a(b), b, 1)``
    with ``b`` in ``[b_lo, 1]``.
    """
    level = 1.0 / cut.n_cut**2
    if spec.n_dim == 2:
        return np.array([_solve_first(spec, [1.0], level), 1.0])
    if spec.n_dim == 3:
        if b is None:
            raise ValueError("3D boundary points need the middle coordinate b")
        return np.array([_solve_first(spec, [b, 1.0], level), b, 1.0])
    raise NotImplementedError("envelope supports n_dim in {2, 3}")


def boundary_range(spec: CurvatureSpec, cut: ConeCut) -> tuple[float, float]:
    return _diagonal_lower(spec, cut.n_cut), 1.0


@lru_cache(maxsize=64)
def _boundary_table_cached(spec: CurvatureSpec, n_cut: int, m: int):
    cut = ConeCut(n_cut)
    if spec.n_dim == 2:
        bs = np.array([1.0])
        pts = [boundary_point(spec, cut)]
    else:
        b_lo, b_hi = boundary_range(spec, cut)
        bs = np.linspace(b_lo, b_hi, m)
        pts = [boundary_point(spec, cut, b) for b in bs]
    grads = np.array([grad_f(spec, p) for p in pts])
    grads.setflags(write=False)
    bs.setflags(write=False)
    return bs, grads


def boundary_table(spec: CurvatureSpec, cut: ConeCut, m: int = 2049):
    """Parameters and gradients ``Df`` sampled along the sorted boundary arc."""
    return _boundary_table_cached(spec, int(cut.n_cut), int(m))


def _minimize_on_boundary(spec, tau_sorted, cut, n_coarse=64, max_iter=50, tol=1e-9):
    if spec.n_dim == 2:
        g = grad_f(spec, boundary_point(spec, cut))
        return float(g @ tau_sorted), g

    b_lo, b_hi = boundary_range(spec, cut)

    def phi(b):
        g = grad_f(spec, boundary_point(spec, cut, b))
        return float(g @ tau_sorted), g

    bs, grads = boundary_table(spec, cut, n_coarse)
    vals = grads @ tau_sorted
    if not np.any(np.isfinite(vals)):
        raise EnvelopeError("no feasible boundary candidate")
    j = int(np.nanargmin(vals))  # first index wins ties
    b = bs[j]
    best, g_best = phi(b)
    step = (b_hi - b_lo) / (n_coarse - 1)
    for _ in range(max_iter):
        if step < tol:
            break
        moved = False
        for cand in (b - step, b + step):
            cand = min(max(cand, b_lo), b_hi)
            v, g = phi(cand)
            if v < best:
                best, g_best, b, moved = v, g, cand, True
                break
        if not moved:
            step *= 0.5
    return best, g_best


def _envelope(spec: CurvatureSpec, tau, cut: ConeCut):
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (spec.n_dim,):
        raise ValueError(f"expected {spec.n_dim} entries, got shape {tau.shape}")
    if spec.linear:
        return eval_f(spec, tau), grad_f(spec, tau)
    if in_equality_region(spec, tau, cut):
        return eval_f(spec, tau), grad_f(spec, tau)
    order = np.argsort(tau, kind="stable")
    val, g_sorted = _minimize_on_boundary(spec, tau[order], cut)
    g = np.empty_like(g_sorted)
    g[order] = g_sorted
    return val, g


def envelope_fhat(spec: CurvatureSpec, tau, cut: ConeCut) -> float:
    """Infimum of the tangent planes of ``f`` over the truncated region, at ``tau``.

    Defined for every ``tau``; equals ``f(tau)`` wherever the ray through ``tau``
    meets the truncated region.
    """
    return _envelope(spec, tau, cut)[0]


def envelope_grad(spec: CurvatureSpec, tau, cut: ConeCut) -> np.ndarray:
    """Gradient of the active tangent plane (a supergradient of the envelope)."""
    return _envelope(spec, tau, cut)[1]


@lru_cache(maxsize=64)
def _lipschitz_cached(spec: CurvatureSpec, n_cut: int) -> float:
    if spec.linear:
        return float(np.sqrt(spec.n_dim) / spec.n_dim)
    cut = ConeCut(n_cut)
    best = 0.0
    if spec.n_dim == 2:
        a_b = boundary_point(spec, cut)[0]
        for a in np.linspace(a_b, 1.0, 4097):
            best = max(best, float(np.linalg.norm(grad_f(spec, [a, 1.0]))))
        return best
    if spec.n_dim != 3:
        raise NotImplementedError("envelope supports n_dim in {2, 3}")
    b_lo, _ = boundary_range(spec, cut)
    for b in np.linspace(b_lo, 1.0, 257):
        a_b = boundary_point(spec, cut, b)[0]
        for a in np.linspace(a_b, b, 65):
            best = max(best, float(np.linalg.norm(grad_f(spec, [a, b, 1.0]))))
    _, grads = boundary_table(spec, cut)
    return max(best, float(np.linalg.norm(grads, axis=1).max()))


def lipschitz_bound(spec: CurvatureSpec, cut: ConeCut) -> float:
    """Largest sampled ``|Df|`` over the truncated region (the envelope's Lipschitz constant)."""
    return _lipschitz_cached(spec, int(cut.n_cut))


def default_n_cut(eps: float) -> int:
    """Schedule ``n = ceil(eps ** -1/4)``, floored at 2."""
    return max(2, int(np.ceil(eps ** -0.25)))
