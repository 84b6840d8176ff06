import numpy as np
import pytest

from gcflow.arrival import (DomainMask, band_distance, barrier_log, boundary_gradient, check_bounds,
                            extinction_time, gradient_magnitude, solve_stationary)
from gcflow.cone import CurvatureSpec
from gcflow.errors import NonConvergence
from gcflow.evolve import run_flow
from gcflow.front import Circle, Ellipse, GridSpec, extract_front, init_signed_distance, polyline_hausdorff
from gcflow.grid import RegularizationParams, ScalarField

S1_2 = CurvatureSpec("sigma", 1, 2)


def _template(R, h):
    S = R + 0.05
    n = 2 * int(np.ceil((S + 3 * h) / h)) + 1
    return ScalarField.centered(2, n, h, S)


def _solve(shape, R, h, eps=None, **kw):
    tmpl = _template(R, h)
    mask = DomainMask.from_shape(shape, tmpl)
    eps = 0.1 * np.sqrt(h) if eps is None else eps
    return mask, solve_stationary(mask, S1_2, RegularizationParams(eps, 2, 0.0), tol=1e-4,
                                  max_iters=2_000_000, **kw)


@pytest.fixture(scope="module")
def disk():
    return _solve(Circle(1.0), 1.0, 0.02)


@pytest.fixture(scope="module")
def ellipse():
    return _solve(Ellipse(1.0, 0.6), 1.0, 0.02)


@pytest.mark.parametrize("case", ["disk", "ellipse"])
def test_band_zero_and_sign(case, request):
    mask, sol = request.getfixturevalue(case)
    v = sol.v.values
    assert np.all(v[mask.band] == 0.0)
    assert np.all(v[~mask.inside] == 0.0)
    assert v[mask.inside].max() <= 1e-10
    assert sol.residual <= 1e-4


@pytest.mark.parametrize("case", ["disk", "ellipse"])
def test_lower_and_barrier_bounds(case, request):
    mask, sol = request.getfixturevalue(case)
    b = check_bounds(sol, mask)
    assert b["max_v"] <= 1e-10
    assert b["lower_violation"] <= 0.0
    assert b["barrier_violation"] <= 0.0
    assert b["lambda"] == pytest.approx(20 * sol.v.h * sol.A)


def test_reported_A_is_boundary_gradient(disk):
    mask, sol = disk
    assert sol.A == pytest.approx(boundary_gradient(sol.v, mask, cells=2), rel=1e-12)
    # the exact gradient 2|x| grows outward: deep interior stays below the boundary layer
    g = gradient_magnitude(sol.v)
    d = band_distance(mask)
    assert g[mask.inside & (d > 0.25)].max() < sol.A


DISK_LAYER = pytest.mark.xfail(strict=True, reason="zeroing the band flattens v in a boundary layer; on the "
                               "disk the discrete max of |Dv| sits about 4 cells in at h=0.02")


@pytest.mark.parametrize("case", [pytest.param("disk", marks=DISK_LAYER), "ellipse"])
def test_gradient_max_within_two_cells(case, request):
    mask, sol = request.getfixturevalue(case)
    g = gradient_magnitude(sol.v)[mask.inside].max()
    assert boundary_gradient(sol.v, mask, cells=2) == pytest.approx(g, rel=1e-12)


def test_disk_matches_radial_solution_at_first_order(disk):
    # zeroing the band moves the boundary inward by up to h, so the error is O(h)
    errs = []
    for h in (0.04, 0.02):
        mask, sol = (_solve(Circle(1.0), 1.0, h) if h != 0.02 else disk)
        r2 = sol.v.radius() ** 2
        errs.append(np.abs(sol.v.values - (r2 - 1.0))[mask.inside].max())
    assert errs[1] <= 4 * 0.02
    assert errs[1] / errs[0] <= 0.7


def test_extinction_scales_with_radius_squared():
    # x -> 2x, v -> 4v, eps -> 2 eps maps the discrete problem on grid h onto grid 2h exactly
    params = (RegularizationParams(0.02, 2, 0.0), RegularizationParams(0.04, 2, 0.0))
    t1 = ScalarField.centered(2, 61, 0.04, 1.1)
    t2 = ScalarField.centered(2, 61, 0.08, 2.2)
    inside = DomainMask.from_shape(Circle(1.0), t1).inside
    out = []
    for tmpl, prm in zip((t1, t2), params):
        mask = DomainMask(tmpl, inside)
        sol = solve_stationary(mask, S1_2, prm, tol=1e-4, max_iters=200_000)
        out.append((extinction_time(sol.v, mask), sol))
    (e1, s1), (e2, s2) = out
    assert e2 == pytest.approx(4.0 * e1, rel=1e-12)
    assert np.allclose(s2.v.values, 4.0 * s1.v.values, rtol=0, atol=1e-12)
    assert s1.iterations == s2.iterations


def test_extinction_is_sup_of_abs(disk):
    mask, sol = disk
    assert extinction_time(sol.v, mask) == np.abs(sol.v.values).max()
    c = tuple(n // 2 for n in sol.v.shape)
    assert extinction_time(sol.v, mask) == pytest.approx(-sol.v.values[c])


def test_empty_mask():
    tmpl = _template(1.0, 0.05)
    mask = DomainMask(tmpl, np.zeros(tmpl.shape, bool))
    sol = solve_stationary(mask, S1_2, RegularizationParams(0.02, 2, 0.0))
    assert extinction_time(sol.v, mask) == 0.0
    assert np.all(sol.v.values == 0.0)
    assert sol.iterations == 0


def test_mask_validation():
    tmpl = _template(1.0, 0.05)
    with pytest.raises(ValueError):
        DomainMask(tmpl, np.zeros((3, 3), bool))
    with pytest.raises(ValueError):
        DomainMask(tmpl, np.ones(tmpl.shape, bool))
    r = tmpl.radius()
    with pytest.raises(ValueError, match="connected"):
        DomainMask(tmpl, (r < 0.9) & (r > 0.4))


def test_nonconvergence_carries_residual():
    tmpl = _template(1.0, 0.05)
    mask = DomainMask.from_shape(Circle(1.0), tmpl)
    with pytest.raises(NonConvergence) as exc:
        solve_stationary(mask, S1_2, RegularizationParams(0.02, 2, 0.0), tol=1e-4, max_iters=10)
    assert exc.value.residual > 1e-4
    assert np.isfinite(exc.value.residual)


def test_band_distance_brute_force():
    tmpl = _template(0.5, 0.1)
    mask = DomainMask.from_shape(Circle(0.5), tmpl)
    d = band_distance(mask)
    pts = np.stack([c.ravel() for c in tmpl.coords()], 1)
    bp = pts[mask.band.ravel()]
    for i in (0, len(pts) // 2, len(pts) - 1):
        assert d.ravel()[i] == pytest.approx(np.min(np.linalg.norm(bp - pts[i], axis=1)))
    assert np.all(d[mask.band] == 0.0)


def test_barrier_log_ode():
    # g(0) = 0, g' <= -1/(2 delta0); g is concave with g'' = -g'^2
    d0 = 0.3
    assert barrier_log(0.0, d0, 1.0) == 0.0
    s = np.linspace(0.0, 0.5, 11)
    k = 1e-4
    g1 = (barrier_log(s + k, d0, 1.0) - barrier_log(s - k, d0, 1.0)) / (2 * k)
    g2 = (barrier_log(s + k, d0, 1.0) - 2 * barrier_log(s, d0, 1.0) + barrier_log(s - k, d0, 1.0)) / k**2
    assert np.all(g1 <= -1 / (2 * d0) + 1e-9)
    assert np.allclose(g2, -g1**2, rtol=1e-5)
    assert np.allclose(g1, -1.0 / (2 * d0 - s), rtol=1e-6)


def test_level_sets_match_flow(disk):
    mask, sol = disk
    h = 0.02
    grid = GridSpec(2, 2 * int(np.ceil(1.41 / h)) + 1, h, 1.35)
    u0 = init_signed_distance(Circle(1.0), grid, 0.3)
    snaps = run_flow(u0, S1_2, RegularizationParams(0.1 * np.sqrt(h), 2, 0.1 * h), 0.5, 0.25)
    for s in snaps[1:]:
        d = polyline_hausdorff(extract_front(s.field), extract_front(sol.v, -s.t))
        assert d <= 3 * h
