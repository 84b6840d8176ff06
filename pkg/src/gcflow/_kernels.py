"""Compiled per-cell kernels for the regularized curvature operator.

Everything here is scalar code specialized for 2 and 3 dimensions so the cell
loops never allocate.  Curvature functions are passed as the tuple
``(fam, k, l, C, pw, ncut)`` plus a table ``G`` of boundary gradients used
outside the equality region of the envelope (see ``cone.boundary_table``).
"""

import numpy as np
from numba import njit

JACOBI_MAX_SWEEPS = 50
SCAN_STRIDE = 16


@njit(cache=True, inline="always", error_model="numpy")
def _root(s, pw):
    if pw == 1:
        return s
    if pw == 2:
        return np.sqrt(s) if s >= 0.0 else -np.sqrt(-s)
    if s >= 0.0:
        return s ** (1.0 / pw)
    return -((-s) ** (1.0 / pw))


@njit(cache=True, inline="always", error_model="numpy")
def fhat_sorted(t0, t1, t2, fam, k, l, C, pw, ncut, G):
    """Envelope at sorted eigenvalues ``t0 <= t1 (<= t2)``; pass ``t2 = 0`` in 2D."""
    if fam == 0 and k == 1:
        return (t0 + t1 + t2) / C
    if t0 == 0.0 and t1 == 0.0 and t2 == 0.0:
        return 0.0
    e1 = t0 + t1 + t2
    e2 = t0 * t1 + t0 * t2 + t1 * t2
    e3 = t0 * t1 * t2
    incone = e1 > 0.0 and (k < 2 or e2 > 0.0) and (k < 3 or e3 > 0.0)
    if incone:
        if k == 1:
            num = e1
        elif k == 2:
            num = e2
        else:
            num = e3
        if fam == 1:
            if l == 1:
                num = num / e1
            else:
                num = num / e2
        f = _root(num / C, pw)
        tmax = t2 if G.shape[1] == 3 else t1
        if tmax < ncut * ncut * f:
            return f
    # coarse pass over every SCAN_STRIDE-th boundary gradient, then a full-resolution
    # pass around the best coarse entry
    n = G.shape[0]
    stride = SCAN_STRIDE if n > 4 * SCAN_STRIDE else 1
    best = np.inf
    rb = 0
    for r in range(0, n, stride):
        v = G[r, 0] * t0 + G[r, 1] * t1
        if G.shape[1] == 3:
            v += G[r, 2] * t2
        if v < best:
            best = v
            rb = r
    if stride > 1:
        for r in range(max(0, rb - stride), min(n, rb + stride + 1)):
            v = G[r, 0] * t0 + G[r, 1] * t1
            if G.shape[1] == 3:
                v += G[r, 2] * t2
            if v < best:
                best = v
    return best


@njit(cache=True, inline="always", error_model="numpy")
def eig2(a00, a01, a11):
    """Sorted eigenvalues of a symmetric 2x2 matrix (one exact Jacobi rotation)."""
    if a01 == 0.0:
        lo, hi = a00, a11
    else:
        theta = (a11 - a00) / (2.0 * a01)
        t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
        if theta < 0.0:
            t = -t
        lo = a00 - t * a01
        hi = a11 + t * a01
    if lo > hi:
        lo, hi = hi, lo
    return lo, hi


@njit(cache=True, inline="always", error_model="numpy")
def _rot(app, aqq, apq, arp, arq):
    theta = (aqq - app) / (2.0 * apq)
    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
    if theta < 0.0:
        t = -t
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c
    return app - t * apq, aqq + t * apq, c * arp - s * arq, s * arp + c * arq


@njit(cache=True, inline="always", error_model="numpy")
def eig3(a00, a01, a02, a11, a12, a22, tol):
    """Sorted eigenvalues of a symmetric 3x3 matrix by cyclic Jacobi sweeps.

    Stops once the off-diagonal Frobenius norm is below ``tol`` times the
    Frobenius norm of the input.
    """
    fro = np.sqrt(a00 * a00 + a11 * a11 + a22 * a22 + 2.0 * (a01 * a01 + a02 * a02 + a12 * a12))
    for _ in range(JACOBI_MAX_SWEEPS):
        off = np.sqrt(2.0 * (a01 * a01 + a02 * a02 + a12 * a12))
        if off <= tol * fro or off == 0.0:
            break
        if a01 != 0.0:
            a00, a11, a02, a12 = _rot(a00, a11, a01, a02, a12)
            a01 = 0.0
        if a02 != 0.0:
            a00, a22, a01, a12 = _rot(a00, a22, a02, a01, a12)
            a02 = 0.0
        if a12 != 0.0:
            a11, a22, a01, a02 = _rot(a11, a22, a12, a01, a02)
            a12 = 0.0
    x, y, z = a00, a11, a22
    if x > y:
        x, y = y, x
    if y > z:
        y, z = z, y
    if x > y:
        x, y = y, x
    return x, y, z


@njit(cache=True, inline="always", error_model="numpy")
def eig3_closed(a00, a01, a02, a11, a12, a22):
    """Sorted eigenvalues of a symmetric 3x3 matrix from the trigonometric closed form.

    About 4x cheaper than Jacobi; near a repeated eigenvalue the error grows to
    ~1e-8 relative (the arccos is ill-conditioned there), far below the O(h^2)
    truncation error of the stencil.
    """
    p1 = a01 * a01 + a02 * a02 + a12 * a12
    q = (a00 + a11 + a22) / 3.0
    b00 = a00 - q
    b11 = a11 - q
    b22 = a22 - q
    p2 = b00 * b00 + b11 * b11 + b22 * b22 + 2.0 * p1
    if p2 <= 0.0:
        return q, q, q
    p = np.sqrt(p2 / 6.0)
    ip = 1.0 / p
    det = b00 * (b11 * b22 - a12 * a12) - a01 * (a01 * b22 - a12 * a02) + a02 * (a01 * a12 - b11 * a02)
    r = 0.5 * det * ip * ip * ip
    if r <= -1.0:
        phi = np.pi / 3.0
    elif r >= 1.0:
        phi = 0.0
    else:
        phi = np.arccos(r) / 3.0
    hi = q + 2.0 * p * np.cos(phi)
    lo = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    mid = 3.0 * q - lo - hi
    # rounding can leave mid a hair outside [lo, hi]
    if mid < lo:
        lo, mid = mid, lo
    if mid > hi:
        mid, hi = hi, mid
    return lo, mid, hi


@njit(cache=True, inline="always", error_model="numpy")
def op_from2(px, py, hxx, hxy, hyy, eps, sigma, fam, k, l, C, pw, ncut, G):
    q = px * px + py * py
    den = eps * np.sqrt(eps * eps + q) + eps * eps + q
    c = 1.0 / den if den > 0.0 else 0.0
    # gamma H gamma = H - c (p w^T + w p^T) + c^2 (p.w) p p^T, with w = H p
    wx = hxx * px + hxy * py
    wy = hxy * px + hyy * py
    s = px * wx + py * wy
    c2s = c * c * s
    m00 = hxx - 2.0 * c * px * wx + c2s * px * px
    m11 = hyy - 2.0 * c * py * wy + c2s * py * py
    if fam == 0 and k == 1:
        return (m00 + m11) / C + sigma * (hxx + hyy)
    m01 = hxy - c * (px * wy + wx * py) + c2s * px * py
    t0, t1 = eig2(m00, m01, m11)
    return fhat_sorted(t0, t1, 0.0, fam, k, l, C, pw, ncut, G) + sigma * (hxx + hyy)


@njit(cache=True, inline="always", error_model="numpy")
def op_from3(px, py, pz, hxx, hxy, hxz, hyy, hyz, hzz, eps, sigma, fam, k, l, C, pw, ncut, G):
    q = px * px + py * py + pz * pz
    den = eps * np.sqrt(eps * eps + q) + eps * eps + q
    c = 1.0 / den if den > 0.0 else 0.0
    wx = hxx * px + hxy * py + hxz * pz
    wy = hxy * px + hyy * py + hyz * pz
    wz = hxz * px + hyz * py + hzz * pz
    s = px * wx + py * wy + pz * wz
    c2s = c * c * s
    m00 = hxx - 2.0 * c * px * wx + c2s * px * px
    m11 = hyy - 2.0 * c * py * wy + c2s * py * py
    m22 = hzz - 2.0 * c * pz * wz + c2s * pz * pz
    if fam == 0 and k == 1:
        return (m00 + m11 + m22) / C + sigma * (hxx + hyy + hzz)
    m01 = hxy - c * (px * wy + wx * py) + c2s * px * py
    m02 = hxz - c * (px * wz + wx * pz) + c2s * px * pz
    m12 = hyz - c * (py * wz + wy * pz) + c2s * py * pz
    t0, t1, t2 = eig3_closed(m00, m01, m02, m11, m12, m22)
    return fhat_sorted(t0, t1, t2, fam, k, l, C, pw, ncut, G) + sigma * (hxx + hyy + hzz)


@njit(cache=True, inline="always", error_model="numpy")
def _op_cell2(u, i, j, h, eps, sigma, fam, k, l, C, pw, ncut, G):
    ih = 1.0 / h
    ih2 = ih * ih
    u0 = u[i, j]
    px = 0.5 * (u[i + 1, j] - u[i - 1, j]) * ih
    py = 0.5 * (u[i, j + 1] - u[i, j - 1]) * ih
    hxx = (u[i + 1, j] - 2.0 * u0 + u[i - 1, j]) * ih2
    hyy = (u[i, j + 1] - 2.0 * u0 + u[i, j - 1]) * ih2
    hxy = 0.25 * (u[i + 1, j + 1] - u[i + 1, j - 1] - u[i - 1, j + 1] + u[i - 1, j - 1]) * ih2
    return op_from2(px, py, hxx, hxy, hyy, eps, sigma, fam, k, l, C, pw, ncut, G)


@njit(cache=True, inline="always", error_model="numpy")
def _op_cell3(u, i, j, m, h, eps, sigma, fam, k, l, C, pw, ncut, G):
    ih = 1.0 / h
    ih2 = ih * ih
    u0 = u[i, j, m]
    px = 0.5 * (u[i + 1, j, m] - u[i - 1, j, m]) * ih
    py = 0.5 * (u[i, j + 1, m] - u[i, j - 1, m]) * ih
    pz = 0.5 * (u[i, j, m + 1] - u[i, j, m - 1]) * ih
    hxx = (u[i + 1, j, m] - 2.0 * u0 + u[i - 1, j, m]) * ih2
    hyy = (u[i, j + 1, m] - 2.0 * u0 + u[i, j - 1, m]) * ih2
    hzz = (u[i, j, m + 1] - 2.0 * u0 + u[i, j, m - 1]) * ih2
    q = 0.25 * ih2
    hxy = (u[i + 1, j + 1, m] - u[i + 1, j - 1, m] - u[i - 1, j + 1, m] + u[i - 1, j - 1, m]) * q
    hxz = (u[i + 1, j, m + 1] - u[i + 1, j, m - 1] - u[i - 1, j, m + 1] + u[i - 1, j, m - 1]) * q
    hyz = (u[i, j + 1, m + 1] - u[i, j + 1, m - 1] - u[i, j - 1, m + 1] + u[i, j - 1, m - 1]) * q
    return op_from3(px, py, pz, hxx, hxy, hxz, hyy, hyz, hzz, eps, sigma, fam, k, l, C, pw, ncut, G)


@njit(cache=True, error_model="numpy")
def _sweep2_linear(u, out, runs, dt, src, h, eps, sigma, C):
    ih = 1.0 / h
    ih2 = ih * ih
    e2 = eps * eps
    resid = 0.0
    for r in range(runs.shape[0]):
        i = runs[r, 0]
        for j in range(runs[r, 1], runs[r, 2]):
            u0 = u[i, j]
            px = 0.5 * (u[i + 1, j] - u[i - 1, j]) * ih
            py = 0.5 * (u[i, j + 1] - u[i, j - 1]) * ih
            hxx = (u[i + 1, j] - 2.0 * u0 + u[i - 1, j]) * ih2
            hyy = (u[i, j + 1] - 2.0 * u0 + u[i, j - 1]) * ih2
            hxy = 0.25 * (u[i + 1, j + 1] - u[i + 1, j - 1] - u[i - 1, j + 1] + u[i - 1, j - 1]) * ih2
            q = px * px + py * py
            c = 1.0 / (eps * np.sqrt(e2 + q) + e2 + q)
            wx = hxx * px + hxy * py
            wy = hxy * px + hyy * py
            c2s = c * c * (px * wx + py * wy)
            tr = hxx + hyy - 2.0 * c * (px * wx + py * wy) + c2s * q
            v = tr / C + sigma * (hxx + hyy) - src
            out[i, j] = u0 + dt * v
            resid = max(resid, abs(v))
    return resid


@njit(cache=True, error_model="numpy")
def _sweep3_linear(u, out, runs, dt, src, h, eps, sigma, C):
    ih = 1.0 / h
    ih2 = ih * ih
    q4 = 0.25 * ih2
    e2 = eps * eps
    resid = 0.0
    for r in range(runs.shape[0]):
        i = runs[r, 0]
        j = runs[r, 1]
        for m in range(runs[r, 2], runs[r, 3]):
            u0 = u[i, j, m]
            px = 0.5 * (u[i + 1, j, m] - u[i - 1, j, m]) * ih
            py = 0.5 * (u[i, j + 1, m] - u[i, j - 1, m]) * ih
            pz = 0.5 * (u[i, j, m + 1] - u[i, j, m - 1]) * ih
            hxx = (u[i + 1, j, m] - 2.0 * u0 + u[i - 1, j, m]) * ih2
            hyy = (u[i, j + 1, m] - 2.0 * u0 + u[i, j - 1, m]) * ih2
            hzz = (u[i, j, m + 1] - 2.0 * u0 + u[i, j, m - 1]) * ih2
            hxy = (u[i + 1, j + 1, m] - u[i + 1, j - 1, m] - u[i - 1, j + 1, m] + u[i - 1, j - 1, m]) * q4
            hxz = (u[i + 1, j, m + 1] - u[i + 1, j, m - 1] - u[i - 1, j, m + 1] + u[i - 1, j, m - 1]) * q4
            hyz = (u[i, j + 1, m + 1] - u[i, j + 1, m - 1] - u[i, j - 1, m + 1] + u[i, j - 1, m - 1]) * q4
            q = px * px + py * py + pz * pz
            c = 1.0 / (eps * np.sqrt(e2 + q) + e2 + q)
            wx = hxx * px + hxy * py + hxz * pz
            wy = hxy * px + hyy * py + hyz * pz
            wz = hxz * px + hyz * py + hzz * pz
            s = px * wx + py * wy + pz * wz
            lap = hxx + hyy + hzz
            tr = lap - 2.0 * c * s + c * c * s * q
            v = tr / C + sigma * lap - src
            out[i, j, m] = u0 + dt * v
            resid = max(resid, abs(v))
    return resid


@njit(cache=True, error_model="numpy")
def sweep2(u, out, runs, dt, src, h, eps, sigma, fam, k, l, C, pw, ncut, G):
    """out = u + dt (op - src) on the cell runs ``(i, j0, j1)``; returns max |op - src|."""
    if fam == 0 and k == 1:
        return _sweep2_linear(u, out, runs, dt, src, h, eps, sigma, C)
    resid = 0.0
    for r in range(runs.shape[0]):
        i = runs[r, 0]
        for j in range(runs[r, 1], runs[r, 2]):
            v = _op_cell2(u, i, j, h, eps, sigma, fam, k, l, C, pw, ncut, G) - src
            out[i, j] = u[i, j] + dt * v
            resid = max(resid, abs(v))
    return resid


@njit(cache=True, error_model="numpy")
def sweep3(u, out, runs, dt, src, h, eps, sigma, fam, k, l, C, pw, ncut, G):
    """As ``sweep2`` with runs ``(i, j, k0, k1)`` along the last axis."""
    if fam == 0 and k == 1:
        return _sweep3_linear(u, out, runs, dt, src, h, eps, sigma, C)
    resid = 0.0
    for r in range(runs.shape[0]):
        i = runs[r, 0]
        j = runs[r, 1]
        for m in range(runs[r, 2], runs[r, 3]):
            v = _op_cell3(u, i, j, m, h, eps, sigma, fam, k, l, C, pw, ncut, G) - src
            out[i, j, m] = u[i, j, m] + dt * v
            resid = max(resid, abs(v))
    return resid


@njit(cache=True, error_model="numpy")
def op_cells2(u, I, J, h, eps, sigma, fam, k, l, C, pw, ncut, G):
    out = np.empty(I.shape[0])
    for n in range(I.shape[0]):
        out[n] = _op_cell2(u, I[n], J[n], h, eps, sigma, fam, k, l, C, pw, ncut, G)
    return out


@njit(cache=True, error_model="numpy")
def op_cells3(u, I, J, K, h, eps, sigma, fam, k, l, C, pw, ncut, G):
    out = np.empty(I.shape[0])
    for n in range(I.shape[0]):
        out[n] = _op_cell3(u, I[n], J[n], K[n], h, eps, sigma, fam, k, l, C, pw, ncut, G)
    return out


@njit(cache=True, error_model="numpy")
def op_batch(P, H, eps, sigma, fam, k, l, C, pw, ncut, G):
    """Operator from explicit gradients ``P`` (N, d) and Hessians ``H`` (N, d, d)."""
    n = P.shape[0]
    out = np.empty(n)
    if P.shape[1] == 2:
        for r in range(n):
            out[r] = op_from2(P[r, 0], P[r, 1], H[r, 0, 0], 0.5 * (H[r, 0, 1] + H[r, 1, 0]), H[r, 1, 1],
                              eps, sigma, fam, k, l, C, pw, ncut, G)
    else:
        for r in range(n):
            out[r] = op_from3(P[r, 0], P[r, 1], P[r, 2], H[r, 0, 0], 0.5 * (H[r, 0, 1] + H[r, 1, 0]),
                              0.5 * (H[r, 0, 2] + H[r, 2, 0]), H[r, 1, 1], 0.5 * (H[r, 1, 2] + H[r, 2, 1]),
                              H[r, 2, 2], eps, sigma, fam, k, l, C, pw, ncut, G)
    return out


@njit(cache=True, error_model="numpy")
def jacobi_eigh(A, tol, max_sweeps):
    """Cyclic Jacobi for a small symmetric matrix; returns (values, vectors, sweeps)."""
    n = A.shape[0]
    a = A.copy()
    V = np.eye(n)
    fro = np.sqrt(np.sum(a * a))
    sweeps = 0
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    off += a[p, q] * a[p, q]
        off = np.sqrt(off)
        if off <= tol * fro or off == 0.0:
            break
        sweeps = sweep + 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for r in range(n):
                    arp = a[r, p]
                    arq = a[r, q]
                    a[r, p] = c * arp - s * arq
                    a[r, q] = s * arp + c * arq
                for r in range(n):
                    apr = a[p, r]
                    aqr = a[q, r]
                    a[p, r] = c * apr - s * aqr
                    a[q, r] = s * apr + c * aqr
                for r in range(n):
                    vrp = V[r, p]
                    vrq = V[r, q]
                    V[r, p] = c * vrp - s * vrq
                    V[r, q] = s * vrp + c * vrq
    w = np.empty(n)
    for i in range(n):
        w[i] = a[i, i]
    order = np.argsort(w)
    return w[order], V[:, order], sweeps
