"""Uniform Cartesian grid fields and the pointwise operator assembled on them."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .cone import ConeCut, CurvatureSpec, boundary_table, default_n_cut
from .errors import StencilError

# boundary-arc samples used by the compiled envelope in 3D
KERNEL_TABLE_SIZE = 1025


@dataclass(frozen=True)
class RegularizationParams:
    eps: float
    n_cut: int
    sigma: float = 0.0

    def __post_init__(self):
        bad = []
        if not 0.0 < self.eps < 1.0:
            bad.append(f"eps={self.eps} not in (0, 1)")
        if int(self.n_cut) != self.n_cut or self.n_cut < 2:
            bad.append(f"n_cut={self.n_cut} must be an integer >= 2")
        if not self.sigma >= 0.0:
            bad.append(f"sigma={self.sigma} must be >= 0")
        if bad:
            raise ValueError("; ".join(bad))

    @property
    def cut(self) -> ConeCut:
        return ConeCut(int(self.n_cut))

    @classmethod
    def defaults(cls, h: float, eps: float | None = None, n_cut: int | None = None,
                 sigma: float | None = None) -> "RegularizationParams":
        """eps = h**0.5, n_cut = ceil(eps**-0.25), sigma = 0.1 h unless overridden."""
        eps = float(np.sqrt(h)) if eps is None else eps
        n_cut = default_n_cut(eps) if n_cut is None else n_cut
        sigma = 0.1 * h if sigma is None else sigma
        return cls(eps, n_cut, sigma)


@dataclass
class ScalarField:
    """Node values ``values[i, j(, k)]`` at ``origin + h * index`` (axis 0 is x).

    Nodes with ``|x| >= S`` hold ``far_value`` exactly and are never updated.
    """

    dims: int
    h: float
    origin: np.ndarray
    values: np.ndarray
    far_value: float
    S: float
    _active: tuple | None = dc_field(default=None, repr=False, compare=False)
    _runs: np.ndarray | None = dc_field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        self.origin = np.asarray(self.origin, dtype=float)
        if self.dims not in (2, 3) or self.values.ndim != self.dims:
            raise ValueError(f"dims={self.dims} does not match values of shape {self.values.shape}")
        if self.origin.shape != (self.dims,):
            raise ValueError("origin must have one entry per axis")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        r = self.radius()
        edge = np.zeros(self.shape, dtype=bool)
        for ax in range(self.dims):
            sl = [slice(None)] * self.dims
            sl[ax] = 0
            edge[tuple(sl)] = True
            sl[ax] = -1
            edge[tuple(sl)] = True
        if np.any(edge & (r < self.S)):
            raise ValueError(f"S={self.S} reaches the array boundary")
        far = r >= self.S
        if np.any(self.values[far] != self.far_value):
            raise ValueError("values with |x| >= S must equal far_value")

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @classmethod
    def centered(cls, dims: int, n: int, h: float, S: float, far_value: float = 0.0,
                 values: np.ndarray | None = None) -> "ScalarField":
        """An ``n**dims`` grid symmetric about the origin; values default to ``far_value``."""
        origin = np.full(dims, -0.5 * (n - 1) * h)
        if values is None:
            values = np.full((n,) * dims, float(far_value))
        return cls(dims, h, origin, values, far_value, S)

    def axes(self) -> list[np.ndarray]:
        return [self.origin[a] + self.h * np.arange(self.shape[a]) for a in range(self.dims)]

    def coords(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c * c for c in self.coords()))

    def position(self, idx) -> np.ndarray:
        return self.origin + self.h * np.asarray(idx, dtype=float)

    def active_cells(self) -> tuple:
        """Index arrays of the cells that are updated (``|x| < S``)."""
        if self._active is None:
            idx = np.nonzero(self.radius() < self.S)
            self._active = tuple(np.ascontiguousarray(a, dtype=np.int64) for a in idx)
        return self._active

    def active_runs(self) -> np.ndarray:
        """Active cells as contiguous runs along the last axis (see ``mask_runs``)."""
        if self._runs is None:
            self._runs = mask_runs(self.radius() < self.S)
        return self._runs

    def far_mask(self) -> np.ndarray:
        return self.radius() >= self.S

    def with_values(self, values: np.ndarray, check: bool = True) -> "ScalarField":
        """Same grid, new values.  ``check=False`` skips validation (kernel outputs)."""
        if check:
            out = ScalarField(self.dims, self.h, self.origin.copy(), values, self.far_value, self.S)
        else:
            out = object.__new__(ScalarField)
            out.__dict__.update(self.__dict__)
            out.values = values
        out._active = self._active
        out._runs = self._runs
        return out

    def copy(self) -> "ScalarField":
        return self.with_values(self.values.copy(), check=False)

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def lipschitz(self) -> float:
        """Max adjacent difference over h."""
        return max(float(np.abs(np.diff(self.values, axis=a)).max()) for a in range(self.dims)) / self.h


def mask_runs(mask: np.ndarray) -> np.ndarray:
    """Rows ``(i, [j,] start, stop)`` covering the True entries of ``mask`` along its last axis."""
    m = np.asarray(mask, dtype=bool)
    flat = m.reshape(-1, m.shape[-1])
    pad = np.zeros((flat.shape[0], flat.shape[1] + 2), dtype=np.int8)
    pad[:, 1:-1] = flat
    d = np.diff(pad, axis=1)
    r_start, c_start = np.nonzero(d == 1)
    _, c_stop = np.nonzero(d == -1)
    lead = np.stack(np.unravel_index(r_start, m.shape[:-1]), axis=1)
    return np.ascontiguousarray(np.column_stack([lead, c_start, c_stop]).astype(np.int64))


def first_nonfinite(values: np.ndarray, mask: np.ndarray):
    """Index of the first non-finite value inside ``mask`` (row-major), or None."""
    bad = np.argwhere(~np.isfinite(values) & mask)
    return tuple(int(i) for i in bad[0]) if len(bad) else None


def from_function(fun, dims: int, n: int, h: float, S: float, far_value: float) -> ScalarField:
    """Sample ``fun(*coords)`` inside ``|x| < S`` and fill the rest with ``far_value``."""
    proto = ScalarField.centered(dims, n, h, S, far_value)
    xs = proto.coords()
    vals = np.asarray(fun(*xs), dtype=float)
    vals = np.where(proto.radius() < S, vals, far_value)
    return proto.with_values(vals)


def _check_interior(field: ScalarField, idx) -> tuple:
    idx = tuple(int(i) for i in idx)
    if len(idx) != field.dims:
        raise StencilError(f"index {idx} has wrong length")
    for i, n in zip(idx, field.shape):
        if i < 1 or i > n - 2:
            raise StencilError(f"stencil out of range at cell {idx}")
    return idx


def gradient_at(field: ScalarField, idx) -> np.ndarray:
    idx = _check_interior(field, idx)
    u = field.values
    g = np.empty(field.dims)
    for a in range(field.dims):
        up = list(idx)
        dn = list(idx)
        up[a] += 1
        dn[a] -= 1
        g[a] = (u[tuple(up)] - u[tuple(dn)]) / (2.0 * field.h)
    return g


def hessian_at(field: ScalarField, idx) -> np.ndarray:
    idx = _check_interior(field, idx)
    u = field.values
    d = field.dims
    h2 = field.h * field.h
    H = np.empty((d, d))

    def at(shift):
        return u[tuple(i + s for i, s in zip(idx, shift))]

    for a in range(d):
        e = [0] * d
        e[a] = 1
        H[a, a] = (at(e) - 2.0 * u[idx] + at([-x for x in e])) / h2
        for b in range(a + 1, d):
            def corner(sa, sb):
                s = [0] * d
                s[a] = sa
                s[b] = sb
                return at(s)

            H[a, b] = H[b, a] = (corner(1, 1) - corner(1, -1) - corner(-1, 1) + corner(-1, -1)) / (4.0 * h2)
    return H


def gamma_eps(p, eps: float) -> np.ndarray:
    """Smoothed projection ``I - p p^T / (eps sqrt(eps^2+|p|^2) + eps^2 + |p|^2)``."""
    p = np.asarray(p, dtype=float)
    q = float(p @ p)
    den = eps * np.sqrt(eps * eps + q) + eps * eps + q
    c = 1.0 / den if den > 0 else 0.0
    return np.eye(p.size) - c * np.outer(p, p)


def eig_decompose(A, tol: float = 1e-12):
    """Cyclic Jacobi eigen-decomposition ``(values, vectors)`` of a small symmetric matrix."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.abs(A).max()))
    if np.abs(A - A.T).max() > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    w, V, _ = K.jacobi_eigh(0.5 * (A + A.T), tol, K.JACOBI_MAX_SWEEPS)
    return w, V


def eig_sym(A, tol: float = 1e-12) -> np.ndarray:
    return eig_decompose(A, tol)[0]


def kernel_args(spec: CurvatureSpec, params: RegularizationParams) -> tuple:
    """Curvature-function arguments for the compiled kernels."""
    if spec.n_dim not in (2, 3):
        raise ValueError("grid operators support n_dim in {2, 3}")
    if spec.linear:
        G = np.zeros((1, spec.n_dim))
    else:
        G = np.ascontiguousarray(boundary_table(spec, params.cut, KERNEL_TABLE_SIZE)[1])
    fam = 1 if spec.family == "quotient" else 0
    return (fam, spec.k, spec.l, float(spec.normalization), spec.power, float(params.n_cut), G)


def operator_value_from(p, H, spec: CurvatureSpec, params: RegularizationParams) -> float:
    """``fhat(eig(gamma_eps H gamma_eps)) + sigma tr(H)`` for an explicit gradient and Hessian."""
    p = np.asarray(p, dtype=float).reshape(1, -1)
    H = np.asarray(H, dtype=float).reshape(1, p.shape[1], p.shape[1])
    if p.shape[1] != spec.n_dim:
        raise ValueError("gradient dimension does not match the curvature function")
    return float(K.op_batch(p, H, params.eps, params.sigma, *kernel_args(spec, params))[0])


def operator_values_from(P, H, spec: CurvatureSpec, params: RegularizationParams) -> np.ndarray:
    P = np.ascontiguousarray(P, dtype=float)
    H = np.ascontiguousarray(H, dtype=float)
    if P.shape[0] == 0:
        return np.zeros(0)
    return K.op_batch(P, H, params.eps, params.sigma, *kernel_args(spec, params))


def operator_value(field: ScalarField, idx, spec: CurvatureSpec, params: RegularizationParams) -> float:
    return operator_value_from(gradient_at(field, idx), hessian_at(field, idx), spec, params)


def operator_field(field: ScalarField, spec: CurvatureSpec, params: RegularizationParams,
                   cells: tuple | None = None) -> np.ndarray:
    """Operator values on ``cells`` (default: the active cells), as a flat array."""
    cells = field.active_cells() if cells is None else cells
    args = kernel_args(spec, params)
    if field.dims == 2:
        return K.op_cells2(field.values, cells[0], cells[1], field.h, params.eps, params.sigma, *args)
    return K.op_cells3(field.values, cells[0], cells[1], cells[2], field.h, params.eps, params.sigma, *args)


def dump_grid(field: ScalarField, path) -> None:
    head = [str(field.dims), *map(str, field.shape), repr(float(field.h)),
            *(repr(float(o)) for o in field.origin), repr(float(field.far_value)), repr(float(field.S))]
    with open(path, "w", newline="\n") as fh:
        fh.write(" ".join(head) + "\n")
        np.savetxt(fh, field.values.reshape(-1), fmt="%.17g")


def load_grid(path) -> ScalarField:
    text = Path(path).read_text().split("\n", 1)
    head = text[0].split()
    dims = int(head[0])
    shape = tuple(int(s) for s in head[1 : 1 + dims])
    h = float(head[1 + dims])
    origin = np.array([float(s) for s in head[2 + dims : 2 + 2 * dims]])
    far_value, S = float(head[2 + 2 * dims]), float(head[3 + 2 * dims])
    vals = np.array(text[1].split(), dtype=float).reshape(shape)
    return ScalarField(dims, h, origin, vals, far_value, S)
