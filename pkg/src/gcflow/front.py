"""Signed-distance initial data, level-set extraction and per-vertex geometry."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .cone import CurvatureSpec
from .errors import DegenerateFront
from .grid import RegularizationParams, ScalarField, operator_values_from


# -- shapes -------------------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    """Circle in 2D, sphere in 3D."""

    radius: float
    center: tuple = (0.0, 0.0)

    def distance(self, xs):
        c = np.asarray(self.center, dtype=float)
        r = np.sqrt(sum((x - ci) ** 2 for x, ci in zip(xs, c)))
        return r - self.radius

    def extent(self) -> float:
        return float(np.linalg.norm(self.center)) + self.radius


def Circle(radius: float, center=(0.0, 0.0)) -> Ball:
    return Ball(radius, tuple(center))


@dataclass(frozen=True)
class Ellipse:
    """Axis-aligned ellipse with semi-axes ``a`` (x) and ``b`` (y)."""

    a: float
    b: float
    center: tuple = (0.0, 0.0)

    def distance(self, xs):
        x = xs[0] - self.center[0]
        y = xs[1] - self.center[1]
        if self.a >= self.b:
            d = _ellipse_distance(self.a, self.b, np.abs(x), np.abs(y))
        else:
            d = _ellipse_distance(self.b, self.a, np.abs(y), np.abs(x))
        inside = (x / self.a) ** 2 + (y / self.b) ** 2 < 1.0
        return np.where(inside, -d, d)

    def extent(self) -> float:
        return float(np.linalg.norm(self.center)) + max(self.a, self.b)


@dataclass(frozen=True)
class UnionOfBalls:
    balls: tuple

    def distance(self, xs):
        return np.minimum.reduce([b.distance(xs) for b in self.balls])

    def extent(self) -> float:
        return max(b.extent() for b in self.balls)


def _ellipse_distance(e0, e1, y0, y1, iters=120):
    """Unsigned distance from first-quadrant points to the ellipse with semi-axes e0 >= e1.

    Robust bisection on the closest-point parameter (Eberly's construction).
    """
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    y0, y1 = np.broadcast_arrays(y0, y1)
    out = np.empty(y0.shape)

    # y1 > 0, y0 > 0: bisection on s
    m = (y1 > 0) & (y0 > 0)
    z0 = y0[m] / e0
    z1 = y1[m] / e1
    g = z0 * z0 + z1 * z1 - 1.0
    r0 = (e0 / e1) ** 2
    n0 = r0 * z0
    s0 = z1 - 1.0
    s1 = np.where(g < 0, 0.0, np.hypot(n0, z1) - 1.0)
    s = 0.5 * (s0 + s1)
    for _ in range(iters):
        s = 0.5 * (s0 + s1)
        gs = (n0 / (s + r0)) ** 2 + (z1 / (s + 1.0)) ** 2 - 1.0
        s0 = np.where(gs > 0, s, s0)
        s1 = np.where(gs < 0, s, s1)
    x0 = r0 * y0[m] / (s + r0)
    x1 = y1[m] / (s + 1.0)
    out[m] = np.where(g == 0, 0.0, np.hypot(x0 - y0[m], x1 - y1[m]))

    m = (y1 > 0) & (y0 <= 0)
    out[m] = np.abs(y1[m] - e1)

    m = y1 <= 0
    num = e0 * y0[m]
    den = e0 * e0 - e1 * e1
    close = num < den
    xde = np.where(close, num / den if den > 0 else 0.0, 1.0)
    x0 = e0 * xde
    x1 = e1 * np.sqrt(np.clip(1.0 - xde * xde, 0.0, None))
    out[m] = np.where(close, np.hypot(x0 - y0[m], x1), np.abs(y0[m] - e0))
    return out


@dataclass(frozen=True)
class GridSpec:
    dims: int
    n: int
    h: float
    S: float


def init_signed_distance(shape, grid: GridSpec, clamp: float) -> ScalarField:
    """Signed distance (negative inside), clamped to ``[-clamp, clamp]``.

    The far value is ``+clamp``, so the shape must satisfy ``extent + clamp <= S``.
    """
    if clamp <= 0:
        raise ValueError("clamp must be positive")
    if shape.extent() + clamp > grid.S + 1e-12:
        raise ValueError(f"shape extent {shape.extent()} plus clamp {clamp} exceeds S={grid.S}")
    proto = ScalarField.centered(grid.dims, grid.n, grid.h, grid.S, clamp)
    xs = proto.coords()
    if isinstance(shape, Ellipse) and grid.dims != 2:
        raise ValueError("ellipse is two-dimensional")
    d = np.clip(shape.distance(xs), -clamp, clamp)
    d = np.where(proto.radius() < grid.S, d, clamp)
    return proto.with_values(d)


# -- extraction ---------------------------------------------------------------


@dataclass
class Front:
    """Zero set of a field: closed/open polylines (2D) or a triangle soup (3D)."""

    dims: int
    loops: list = dc_field(default_factory=list)
    verts: np.ndarray | None = None
    faces: np.ndarray | None = None

    @property
    def empty(self) -> bool:
        if self.dims == 2:
            return not self.loops
        return self.verts is None or len(self.verts) == 0

    def points(self) -> np.ndarray:
        """Distinct vertices (closing duplicates of loops dropped)."""
        if self.dims == 3:
            return np.zeros((0, 3)) if self.verts is None else self.verts
        pts = [lp[:-1] if _closed(lp) else lp for lp in self.loops]
        return np.concatenate(pts) if pts else np.zeros((0, 2))

    def weights(self) -> np.ndarray:
        """Per-vertex share of arc length (2D) or area (3D)."""
        if self.dims == 3:
            if self.empty:
                return np.zeros(0)
            tri = self.verts[self.faces]
            area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
            w = np.zeros(len(self.verts))
            for c in range(3):
                np.add.at(w, self.faces[:, c], area / 3.0)
            return w
        ws = []
        for lp in self.loops:
            seg = np.linalg.norm(np.diff(lp, axis=0), axis=1)
            w = np.zeros(len(lp))
            w[:-1] += 0.5 * seg
            w[1:] += 0.5 * seg
            if _closed(lp):
                w[0] += w[-1]
                w = w[:-1]
            ws.append(w)
        return np.concatenate(ws) if ws else np.zeros(0)

    def loop_ids(self) -> np.ndarray:
        if self.dims == 3:
            return np.zeros(len(self.points()), dtype=int)
        ids = [np.full(len(lp) - (1 if _closed(lp) else 0), k) for k, lp in enumerate(self.loops)]
        return np.concatenate(ids) if ids else np.zeros(0, dtype=int)

    def measure(self) -> float:
        """Total arc length (2D) or surface area (3D)."""
        return float(self.weights().sum())

    def enclosed(self) -> float:
        """Area (2D, shoelace over the counterclockwise loops) or volume (3D, divergence theorem)."""
        if self.empty:
            return 0.0
        if self.dims == 3:
            tri = self.verts[self.faces]
            # marching cubes orients faces toward increasing u, i.e. outward
            return float(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0)
        tot = 0.0
        for lp in self.loops:
            if _closed(lp):
                x, y = lp[:-1, 0], lp[:-1, 1]
                tot += 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
        return tot


def _closed(lp) -> bool:
    return len(lp) > 2 and np.array_equal(lp[0], lp[-1])


def extract_front(field: ScalarField, level: float = 0.0) -> Front:
    """Level set ``{u = level}`` by marching squares (2D) or marching cubes (3D).

    2D loops are closed (first vertex repeated) and run counterclockwise around
    ``{u < level}``; saddle cells are resolved by the cell-average value.
    """
    u = field.values
    if not (u.min() < level < u.max()):
        return Front(field.dims)
    if field.dims == 3:
        from skimage.measure import marching_cubes

        verts, faces, _, _ = marching_cubes(u, level, spacing=(field.h,) * 3, allow_degenerate=False)
        return Front(3, verts=verts + field.origin, faces=faces.astype(np.int64))
    return Front(2, loops=_marching_squares(u, level, field.h, field.origin))


def _marching_squares(u, level, h, origin):
    inside = u < level
    c0 = inside[:-1, :-1]
    c1 = inside[1:, :-1]
    c2 = inside[1:, 1:]
    c3 = inside[:-1, 1:]
    code = c0.astype(int) + 2 * c1 + 4 * c2 + 8 * c3
    cells = np.argwhere((code != 0) & (code != 15))

    def point(key):
        kind, i, j = key
        if kind == "h":
            a, b = u[i, j], u[i + 1, j]
            s = (level - a) / (b - a)
            return origin + h * np.array([i + s, j])
        a, b = u[i, j], u[i, j + 1]
        s = (level - a) / (b - a)
        return origin + h * np.array([i, j + s])

    nxt = {}
    for i, j in cells:
        ins = (inside[i, j], inside[i + 1, j], inside[i + 1, j + 1], inside[i, j + 1])
        keys = (("h", i, j), ("v", i + 1, j), ("h", i, j + 1), ("v", i, j))
        # crossings in counterclockwise order; +1 means inside -> outside
        cross = [(e, 1 if ins[e] else -1) for e in range(4) if ins[e] != ins[(e + 1) % 4]]
        if len(cross) == 2:
            a = cross[0] if cross[0][1] == 1 else cross[1]
            b = cross[1] if a is cross[0] else cross[0]
            nxt[keys[a[0]]] = keys[b[0]]
            continue
        centre_in = 0.25 * (u[i, j] + u[i + 1, j] + u[i + 1, j + 1] + u[i, j + 1]) < level
        for n, (e, sgn) in enumerate(cross):
            if sgn != 1:
                continue
            partner = cross[(n + 1) % 4] if centre_in else cross[(n - 1) % 4]
            nxt[keys[e]] = keys[partner[0]]

    ends = set(nxt.values())
    starts = [k for k in nxt if k not in ends]
    loops = []
    seen = set()

    def walk(k0):
        # ends back at k0 for a closed loop, or at a key with no successor
        path = [k0]
        seen.add(k0)
        k = k0
        while k in nxt:
            k = nxt[k]
            path.append(k)
            if k in seen:
                break
            seen.add(k)
        return path

    for k0 in sorted(starts):
        loops.append(walk(k0))
    for k0 in sorted(nxt):
        if k0 not in seen:
            loops.append(walk(k0))

    out = []
    for path in loops:
        pts = np.array([point(k) for k in path])
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
        pts = pts[keep]
        if path[0] == path[-1] and not np.array_equal(pts[0], pts[-1]):
            pts = np.vstack([pts, pts[:1]])
        if len(pts) >= 2:
            out.append(pts)
    return out


# -- sampling -----------------------------------------------------------------


@dataclass
class FrontSample:
    position: np.ndarray
    inward_normal: np.ndarray
    speed: float
    weight: float
    kmin: float = 0.0
    kmax: float = 0.0
    loop: int = 0


class FrontSamples(list):
    """List of samples that also records how many vertices were skipped."""

    def __init__(self, items=(), n_skipped: int = 0):
        super().__init__(items)
        self.n_skipped = n_skipped

    def arrays(self):
        """``(positions, normals, speeds, weights)`` as arrays."""
        d = len(self[0].position) if self else 2
        X = np.array([s.position for s in self]).reshape(-1, d)
        N = np.array([s.inward_normal for s in self]).reshape(-1, d)
        F = np.array([s.speed for s in self])
        W = np.array([s.weight for s in self])
        return X, N, F, W


def derivative_arrays(field: ScalarField):
    """Central-difference gradient and Hessian at every interior node (zeros on the rim)."""
    u = field.values
    d = field.dims
    h = field.h
    inner = tuple(slice(1, -1) for _ in range(d))
    G = np.zeros((d,) + u.shape)
    H = np.zeros((d, d) + u.shape)

    def sh(offsets):
        return u[tuple(slice(1 + o, u.shape[a] - 1 + o) for a, o in enumerate(offsets))]

    for a in range(d):
        e = [0] * d
        e[a] = 1
        m = [-x for x in e]
        G[(a,) + inner] = (sh(e) - sh(m)) / (2 * h)
        H[(a, a) + inner] = (sh(e) - 2 * u[inner] + sh(m)) / (h * h)
        for b in range(a + 1, d):
            def corner(sa, sb):
                s = [0] * d
                s[a] = sa
                s[b] = sb
                return sh(s)

            v = (corner(1, 1) - corner(1, -1) - corner(-1, 1) + corner(-1, -1)) / (4 * h * h)
            H[(a, b) + inner] = v
            H[(b, a) + inner] = v
    return G, H


def interpolate(field: ScalarField, arr: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of node data ``arr[..., i, j(, k)]`` at points ``pts`` (M, d)."""
    d = field.dims
    rel = (pts - field.origin) / field.h
    base = np.floor(rel).astype(int)
    for a in range(d):
        base[:, a] = np.clip(base[:, a], 0, field.shape[a] - 2)
    frac = rel - base
    lead = arr.shape[: arr.ndim - d]
    out = np.zeros(lead + (len(pts),))
    for corner in range(2**d):
        bits = [(corner >> a) & 1 for a in range(d)]
        w = np.ones(len(pts))
        idx = []
        for a, bit in enumerate(bits):
            w = w * (frac[:, a] if bit else 1.0 - frac[:, a])
            idx.append(base[:, a] + bit)
        out += w * arr[(Ellipsis,) + tuple(idx)]
    return out


def front_samples(field: ScalarField, front: Front, spec: CurvatureSpec, params: RegularizationParams,
                  min_grad: float | None = None) -> FrontSamples:
    """Normal, speed and principal-curvature extremes at every front vertex.

    The speed is ``fhat(eig(gamma_eps H gamma_eps)) / |Du|`` with gradient and
    Hessian interpolated to the vertex, i.e. the curvature function of the
    level set through that point.  Vertices with ``|Du| < min_grad`` (default
    ``10 eps``) are skipped and counted.
    """
    if front.empty:
        raise DegenerateFront("front has no vertices")
    min_grad = 10.0 * params.eps if min_grad is None else min_grad
    pts = front.points()
    wts = front.weights()
    ids = front.loop_ids()
    G, H = derivative_arrays(field)
    P = interpolate(field, G, pts).T
    Hs = np.moveaxis(interpolate(field, H, pts), -1, 0)
    norm = np.linalg.norm(P, axis=1)
    keep = norm >= min_grad
    n_skipped = int((~keep).sum())
    if not np.any(keep):
        raise DegenerateFront(f"all {len(pts)} front samples have |Du| below {min_grad}")
    P, Hs, norm = P[keep], Hs[keep], norm[keep]
    geo = RegularizationParams(params.eps, params.n_cut, 0.0)
    speed = operator_values_from(P, Hs, spec, geo) / norm
    nu = -P / norm[:, None]
    kmin, kmax = _principal_extremes(nu, Hs, norm)
    out = FrontSamples(n_skipped=n_skipped)
    for m, src in enumerate(np.flatnonzero(keep)):
        out.append(FrontSample(pts[src].copy(), nu[m], float(speed[m]), float(wts[src]),
                               float(kmin[m]), float(kmax[m]), int(ids[src])))
    return out


def _principal_extremes(nu, Hs, norm):
    """Extreme principal curvatures ``eig(T^T H T) / |Du|`` over the tangent space."""
    d = nu.shape[1]
    if d == 2:
        t = np.stack([-nu[:, 1], nu[:, 0]], axis=1)
        k = np.einsum("mi,mij,mj->m", t, Hs, t) / norm
        return k, k
    a = np.where(np.abs(nu[:, [0]]) < 0.9, np.array([[1.0, 0, 0]]), np.array([[0, 1.0, 0]]))
    t1 = np.cross(nu, a)
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(nu, t1)
    T = np.stack([t1, t2], axis=2)
    K2 = np.einsum("mia,mij,mjb->mab", T, Hs, T) / norm[:, None, None]
    ev = np.linalg.eigvalsh(K2)
    return ev[:, 0], ev[:, 1]


# -- derived quantities -------------------------------------------------------


def front_radius(front: Front) -> float:
    """Weighted mean distance of the vertices from their weighted centroid."""
    if front.empty:
        return 0.0
    X = front.points()
    w = front.weights()
    c = (w[:, None] * X).sum(0) / w.sum()
    return float((w * np.linalg.norm(X - c, axis=1)).sum() / w.sum())


def hausdorff(a: np.ndarray, b: np.ndarray, chunk: int = 2048) -> float:
    """Symmetric Hausdorff distance between two point sets."""
    if len(a) == 0 or len(b) == 0:
        return 0.0 if len(a) == len(b) else np.inf

    def directed(p, q):
        best = 0.0
        for s in range(0, len(p), chunk):
            d = np.sqrt(((p[s : s + chunk, None, :] - q[None, :, :]) ** 2).sum(-1)).min(1)
            best = max(best, float(d.max()))
        return best

    return max(directed(a, b), directed(b, a))


def polyline_hausdorff(a: Front, b: Front, refine: int = 4) -> float:
    """Hausdorff distance between two 2D fronts, with segments subdivided ``refine`` times."""

    def dense(f):
        out = []
        for lp in f.loops:
            s = np.linspace(0, 1, refine, endpoint=False)
            seg = lp[:-1, None, :] + s[None, :, None] * np.diff(lp, axis=0)[:, None, :]
            out.append(np.vstack([seg.reshape(-1, 2), lp[-1:]]))
        return np.concatenate(out) if out else np.zeros((0, 2))

    if a.dims != 2:
        return hausdorff(a.points(), b.points())
    return hausdorff(dense(a), dense(b))


def write_front_csv(path, samples: FrontSamples) -> None:
    """``x,y[,z],nx,ny[,nz],F,weight`` per sample, blank line between loops."""
    if not samples:
        raise DegenerateFront("no samples to write")
    d = len(samples[0].position)
    axes = "xyz"[:d]
    head = list(axes) + [f"n{a}" for a in axes] + ["F", "weight"]
    lines = [",".join(head)]
    prev = samples[0].loop
    for s in samples:
        if s.loop != prev:
            lines.append("")
            prev = s.loop
        vals = list(s.position) + list(s.inward_normal) + [s.speed, s.weight]
        lines.append(",".join(f"{v:.17g}" for v in vals))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
