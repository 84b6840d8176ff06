"""Sup/inf convolutions, a pointwise viscosity probe, and monotone relabeling."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from numba import njit

from .cone import CurvatureSpec, cone_membership
from .grid import RegularizationParams, ScalarField, operator_values_from
from .front import derivative_arrays


@njit(cache=True)
def _sup_pass(a, h, eps_c, W):
    # exact 1D sup over the last axis within a window of W nodes
    out = np.empty_like(a)
    n = a.shape[-1]
    flat = a.reshape(-1, n)
    res = out.reshape(-1, n)
    c = h * h / eps_c
    for r in range(flat.shape[0]):
        for i in range(n):
            lo = max(0, i - W)
            hi = min(n - 1, i + W)
            best = -np.inf
            for j in range(lo, hi + 1):
                d = i - j
                v = flat[r, j] - c * d * d
                if v > best:
                    best = v
            res[r, i] = best
    return out


def _window(values, h, eps_c):
    osc = float(values.max() - values.min())
    return int(np.ceil(np.sqrt(eps_c * osc) / h))


def sup_convolution(field: ScalarField, eps_c: float) -> ScalarField:
    """``sup_y field(y) - |x - y|^2 / eps_c`` over all grid nodes.

    Computed exactly as one 1D pass per axis; maximizers lie within
    ``sqrt(eps_c * osc)`` of x, which bounds the search window and also
    widens the far-field radius of the result.
    """
    if not eps_c > 0:
        raise ValueError("eps_c must be positive")
    W = _window(field.values, field.h, eps_c)
    a = field.values
    for ax in range(field.dims):
        a = np.moveaxis(_sup_pass(np.ascontiguousarray(np.moveaxis(a, ax, -1)), field.h, eps_c, W), -1, ax)
    return _with_grown_S(field, np.ascontiguousarray(a), W)


def inf_convolution(field: ScalarField, eps_c: float) -> ScalarField:
    """``inf_y field(y) + |x - y|^2 / eps_c`` (the dual of ``sup_convolution``)."""
    neg = field.with_values(-field.values, check=False)
    neg.far_value = -field.far_value
    out = sup_convolution(neg, eps_c)
    res = out.with_values(-out.values, check=False)
    res.far_value = field.far_value
    return ScalarField(res.dims, res.h, res.origin, res.values, res.far_value, res.S)


def _with_grown_S(field, values, W):
    S = field.S + W * field.h
    try:
        return ScalarField(field.dims, field.h, field.origin.copy(), values, field.far_value, S)
    except ValueError as exc:
        raise ValueError(f"grid too small for a convolution window of {W} nodes: {exc}") from None


def relabel(field: ScalarField, psi) -> ScalarField:
    """Pointwise ``psi(u)`` for a continuous nondecreasing ``psi``."""
    vals = np.asarray(psi(field.values), dtype=float)
    return ScalarField(field.dims, field.h, field.origin.copy(), vals, float(psi(np.float64(field.far_value))), field.S)


@dataclass
class ProbeViolation:
    cell: tuple
    p: np.ndarray
    q: float
    R: np.ndarray
    slack: float
    side: str


@dataclass
class ProbeReport:
    violations: list = dc_field(default_factory=list)
    max_slack: float = -np.inf
    n_probed: int = 0
    n_indeterminate: int = 0
    n_outside_cone: int = 0
    threshold: float = 0.0
    records: list = dc_field(default_factory=list, repr=False)


def viscosity_probe(states, spec: CurvatureSpec, params: RegularizationParams, tol_cone: float = 1e-8,
                    margin: float | None = None, threshold: float | None = None,
                    tol_p: float | None = None, keep_records: bool = False, region=None) -> ProbeReport:
    """Test the sub/supersolution inequalities with local space-time quadratics.

    ``states`` are three snapshots (objects with ``field`` and ``t``) at equal
    spacing.  At each interior node p and R are central differences of the
    middle snapshot and q the centered time difference.  Touching from above
    uses R + margin I (subsolution slack ``q - F(g R g)``), from below
    R - margin I (supersolution slack ``F(g R g) - q``), with g the exact
    projection orthogonal to p and F the envelope.  Nodes with ``|p| <= tol_p``
    are counted as indeterminate; nodes whose eigenvalues miss the cone by more
    than ``tol_cone`` are counted and skipped.  Only nodes whose stencil stays
    inside ``|x| < S`` are probed, further restricted by the boolean ``region``.
    """
    s0, s1, s2 = states
    dt1 = s1.t - s0.t
    dt2 = s2.t - s1.t
    if not (dt1 > 0 and abs(dt1 - dt2) <= 1e-9 * max(dt1, dt2)):
        raise ValueError(f"snapshots are not equally spaced (dt={dt1}, {dt2})")
    fld = s1.field
    h = fld.h
    margin = 10.0 * h * h if margin is None else margin
    threshold = margin if threshold is None else threshold
    tol_p = max(params.eps, 1e-8) if tol_p is None else tol_p

    d = fld.dims
    G, H = derivative_arrays(fld)
    q_all = (s2.field.values - s0.field.values) / (2.0 * dt1)
    sel = fld.radius() < fld.S - np.sqrt(d) * h
    if region is not None:
        sel &= np.asarray(region, dtype=bool)
    for a in range(d):
        sel[(slice(None),) * a + (0,)] = False
        sel[(slice(None),) * a + (-1,)] = False
    idx = np.argwhere(sel)
    cells = tuple(idx.T)
    P = np.stack([G[a][cells] for a in range(d)], axis=1)
    Rm = np.stack([np.stack([H[a, b][cells] for b in range(d)], axis=1) for a in range(d)], axis=1)
    q = q_all[cells]

    pn = np.linalg.norm(P, axis=1)
    indet = pn <= tol_p
    live = np.flatnonzero(~indet)
    Pl, Rl, ql = P[live], Rm[live], q[live]
    nu = Pl / pn[live][:, None]
    proj = np.eye(d)[None] - nu[:, :, None] * nu[:, None, :]
    M = proj @ Rl @ proj
    ev = np.linalg.eigvalsh(M)
    inK = np.array([cone_membership(spec, e + tol_cone) for e in ev]) if not spec.linear else np.ones(len(ev), bool)
    judged = live[inK]
    Pj, Rj, qj = Pl[inK], Rl[inK], ql[inK]

    # a vanishing eps makes gamma the exact projection for |p| > tol_p; no Laplacian term
    exact = RegularizationParams(1e-12, params.n_cut, 0.0)
    eye = np.eye(d)[None]
    F_up = operator_values_from(Pj, Rj + margin * eye, spec, exact)
    F_dn = operator_values_from(Pj, Rj - margin * eye, spec, exact)
    sub = qj - F_up
    sup = F_dn - qj

    viols = []
    records = []
    for n_, src in enumerate(judged):
        cell = tuple(int(c) for c in idx[src])
        for side, sl in (("sub", sub[n_]), ("super", sup[n_])):
            if keep_records:
                records.append((cell, Pj[n_], float(qj[n_]), float(sl), side))
            if sl > threshold:
                viols.append(ProbeViolation(cell, Pj[n_].copy(), float(qj[n_]), Rj[n_].copy(), float(sl), side))
    viols.sort(key=lambda v: -v.slack)
    max_slack = float(max(sub.max(initial=-np.inf), sup.max(initial=-np.inf)))
    return ProbeReport(viols, max_slack, int(len(judged)), int(indet.sum()), int((~inK).sum()), threshold, records)

