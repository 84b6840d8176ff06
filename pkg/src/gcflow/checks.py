"""Randomized property checks reachable from the ``verify`` subcommand.

Each check returns a ``CheckResult`` with the number of cases tried, the
number that failed and the worst observed excess over the tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import inf_convolution, sup_convolution
from .cone import (ConeCut, CurvatureSpec, cone_membership, envelope_fhat, envelope_grad, eval_f, grad_f,
                   lipschitz_bound)
from .front import FrontSample, hausdorff
from .grid import eig_decompose, from_function, gamma_eps
from .noncollapse import ball_center, z_value

AUDIT_SPECS = (
    (CurvatureSpec("sigma", 1, 2), ConeCut(10)),
    (CurvatureSpec("sigma", 2, 2), ConeCut(10)),
    (CurvatureSpec("sigma", 2, 3), ConeCut(4)),
    (CurvatureSpec("sigma", 3, 3), ConeCut(4)),
    (CurvatureSpec("quotient", 3, 3, 2), ConeCut(4)),
)


@dataclass
class CheckResult:
    name: str
    cases: int
    failures: int
    worst: float


def _result(name, excess):
    excess = np.asarray(excess, dtype=float)
    return CheckResult(name, int(excess.size), int(np.count_nonzero(excess > 0)),
                       float(excess.max()) if excess.size else 0.0)


def random_in_cone(rng, spec: CurvatureSpec, count: int, scale: float = 1.0) -> np.ndarray:
    """Rejection sample of points of K with entries drawn from a scaled normal around (1, ..., 1)."""
    out = []
    while len(out) < count:
        x = scale * (1.0 + rng.normal(size=spec.n_dim) * rng.uniform(0.2, 2.0))
        if cone_membership(spec, x):
            out.append(x)
    return np.array(out)


def f_properties(rng, count=100):
    norm, hom, conc, euler, pos = [], [], [], [], []
    for spec, _ in AUDIT_SPECS:
        norm.append(abs(eval_f(spec, np.ones(spec.n_dim)) - 1.0) - 1e-12)
        X = random_in_cone(rng, spec, count)
        Y = random_in_cone(rng, spec, count)
        for x, y in zip(X, Y):
            t = rng.uniform(0.1, 10.0)
            hom.append(abs(eval_f(spec, t * x) - t * eval_f(spec, x)) - 1e-10 * t)
            th = rng.uniform()
            conc.append(th * eval_f(spec, x) + (1 - th) * eval_f(spec, y) - eval_f(spec, th * x + (1 - th) * y) - 1e-12)
            g = grad_f(spec, x)
            euler.append(abs(g @ x - eval_f(spec, x)) - 1e-10 * max(1.0, abs(eval_f(spec, x))))
            pos.append(-g.min() if g.min() <= 0 else -1.0)
    return [_result("f_normalization", norm), _result("f_homogeneity", hom), _result("f_concavity", conc),
            _result("f_euler_identity", euler), _result("f_gradient_positive", pos)]


def envelope_audit(rng, samples=10_000, pairs=100):
    """Equality with f in the cut region, concavity, monotonicity, Lipschitz and supergradient checks."""
    eq, conc, mono, lip, sup = [], [], [], [], []
    per_spec = max(1, samples // len(AUDIT_SPECS))
    for spec, cut in AUDIT_SPECS:
        n = cut.n_cut
        L = lipschitz_bound(spec, cut)
        taus = rng.uniform(-1.0, 1.0, size=(per_spec, spec.n_dim)) * rng.uniform(0.05, n, size=(per_spec, 1))
        for tau in taus:
            if cone_membership(spec, tau, cut):
                eq.append(abs(envelope_fhat(spec, tau, cut) - eval_f(spec, tau)) - 1e-6)
        for _ in range(pairs):
            a = rng.normal(size=spec.n_dim) * rng.uniform(0.1, n)
            b = rng.normal(size=spec.n_dim) * rng.uniform(0.1, n)
            fa, fb = envelope_fhat(spec, a, cut), envelope_fhat(spec, b, cut)
            conc.append(0.5 * (fa + fb) - envelope_fhat(spec, 0.5 * (a + b), cut) - 1e-7)
            up = a + np.abs(rng.normal(size=spec.n_dim))
            mono.append(fa - envelope_fhat(spec, up, cut) - 1e-9)
            lip.append(abs(fa - fb) - L * np.linalg.norm(a - b) - 1e-9)
            g = envelope_grad(spec, a, cut)
            for i in range(spec.n_dim):
                for s in (1e-3, -1e-3):
                    e = np.zeros(spec.n_dim)
                    e[i] = s
                    sup.append(envelope_fhat(spec, a + e, cut) - (fa + g[i] * s) - 1e-8)
    return [_result("envelope_equality", eq), _result("envelope_concavity", conc),
            _result("envelope_monotone", mono), _result("envelope_lipschitz", lip),
            _result("envelope_supergradient", sup)]


def gamma_identity(rng, count=1000):
    ex = []
    for _ in range(count):
        d = int(rng.integers(2, 4))
        p = rng.normal(size=d) * 10.0 ** rng.uniform(-3, 2)
        eps = 10.0 ** rng.uniform(-6, -0.01)
        g = gamma_eps(p, eps)
        ref = np.eye(d) - np.outer(p, p) / (eps * eps + p @ p)
        ex.append(np.abs(g @ g - ref).max() - 1e-12)
    return _result("gamma_identity", ex)


def eig_reconstruction(rng, count=500):
    ex = []
    for _ in range(count):
        d = int(rng.integers(2, 4))
        A = rng.normal(size=(d, d)) * 10.0 ** rng.uniform(-2, 2)
        A = 0.5 * (A + A.T)
        w, V = eig_decompose(A)
        scale = max(1.0, np.abs(A).max())
        rec = np.abs(V @ np.diag(w) @ V.T - A).max() / scale
        tr = abs(w.sum() - np.trace(A)) / scale
        srt = 0.0 if np.all(np.diff(w) >= 0) else 1.0
        ex.append(max(rec, tr) - 1e-10 + srt)
    return _result("eig_reconstruction", ex)


def z_identity(rng, count=1000, dims=2) -> float:
    """Largest residual of ``|y - C_x|^2 - (delta/F)^2 = (2/F) Z(x, y)`` relative to the term sizes."""
    worst = 0.0
    for _ in range(count):
        nu = rng.normal(size=dims)
        nu /= np.linalg.norm(nu)
        x = FrontSample(rng.normal(size=dims), nu, rng.uniform(0.1, 10.0), 1.0, 0.0, 0.0, 0)
        y = rng.normal(size=dims) * rng.uniform(0.1, 3.0)
        delta = rng.uniform(0.05, 2.0)
        c = ball_center(x, delta)
        lhs = (y - c) @ (y - c) - (delta / x.speed) ** 2
        rhs = 2.0 / x.speed * z_value(x, y, delta)
        scale = max(1.0, (y - c) @ (y - c), (delta / x.speed) ** 2)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def z_identity_check(rng, count=1000):
    ex = [z_identity(rng, 1, int(rng.integers(2, 4))) - 1e-12 for _ in range(count)]
    return _result("z_identity", ex)


def random_lipschitz_field(rng, n=301, h=0.01, S=0.5):
    """Plane waves plus a cone kink under a smooth cutoff: Lipschitz but not smooth.

    The field is rescaled to a grid Lipschitz constant drawn from [15, 30], so
    h < eps_c * Lip holds for eps_c down to 1e-3 and the discrete convolutions
    still differ from the field.  The grid is padded so the widest window fits.
    """
    ks = rng.normal(size=(3, 2)) * 3.0
    ph = rng.uniform(0, 2 * np.pi, 3)
    co = rng.normal(size=3)
    c = rng.uniform(-0.3, 0.3, 2)
    sl = rng.uniform(-1.0, 1.0)

    def fun(x, y):
        r = np.sqrt(x * x + y * y)
        s = np.clip(r / S, 0.0, 1.0)
        with np.errstate(divide="ignore", over="ignore"):
            cut = np.where(s < 1.0, np.exp(1.0 - 1.0 / np.maximum(1.0 - s * s, 1e-300)), 0.0)
        waves = sum(co[w] * np.sin(ks[w, 0] * x + ks[w, 1] * y + ph[w]) for w in range(3))
        return cut * (waves + sl * np.hypot(x - c[0], y - c[1]))

    w = from_function(fun, 2, n, h, S, 0.0)
    lip = max(float(np.abs(np.diff(w.values, axis=a)).max()) for a in range(2)) / h
    return w.with_values(w.values * (rng.uniform(15.0, 30.0) / lip))


def _line_second_differences(values, h, eps_c):
    """Second differences of ``values + |x|^2 / eps_c`` along every grid line (quadratic part exact)."""
    out = []
    for ax in range(values.ndim):
        d2 = np.diff(values, n=2, axis=ax)
        out.append((d2 + 2.0 * h * h / eps_c).ravel())
    return np.concatenate(out)


def convolution_suite(rng, fields=50, eps_list=(1e-1, 1e-2, 1e-3)):
    sandwich, shift, conv = [], [], []
    for _ in range(fields):
        w = random_lipschitz_field(rng)
        errs_sup, errs_inf = [], []
        for eps_c in eps_list:
            up = sup_convolution(w, eps_c)
            lo = inf_convolution(w, eps_c)
            sandwich.append(max(float((w.values - up.values).max()), float((lo.values - w.values).max())))
            shift.append(-float(_line_second_differences(up.values, w.h, eps_c).min()) - 1e-10)
            shift.append(-float(_line_second_differences(-lo.values, w.h, eps_c).min()) - 1e-10)
            errs_sup.append(float(np.abs(up.values - w.values).max()))
            errs_inf.append(float(np.abs(lo.values - w.values).max()))
        for errs in (errs_sup, errs_inf):
            # strictly decreasing: every consecutive difference must be negative
            conv.append(max(b - a for a, b in zip(errs, errs[1:])))
    sandwich = np.array(sandwich)
    return [CheckResult("convolution_sandwich", sandwich.size, int(np.count_nonzero(sandwich > 0)),
                        float(sandwich.max())),
            _result("convolution_convexity_shift", shift),
            CheckResult("convolution_convergence", len(conv), int(np.count_nonzero(np.array(conv) >= 0)),
                        float(max(conv)))]


def point_hausdorff(a, b) -> float:
    return hausdorff(a.points(), b.points())


def run_all(rng, samples=10_000, fields=50):
    out = f_properties(rng)
    out += envelope_audit(rng, samples=samples)
    out.append(gamma_identity(rng))
    out.append(eig_reconstruction(rng))
    out.append(z_identity_check(rng))
    out += convolution_suite(rng, fields=fields)
    return out
