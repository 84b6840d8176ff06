import numpy as np
import pytest

from gcflow import checks
from gcflow.analysis import inf_convolution, relabel, sup_convolution, viscosity_probe
from gcflow.cone import CurvatureSpec
from gcflow.evolve import FlowState, run_flow
from gcflow.front import Circle, GridSpec, extract_front, init_signed_distance, polyline_hausdorff
from gcflow.grid import RegularizationParams, from_function

S1_2 = CurvatureSpec("sigma", 1, 2)
N, H, S = 81, 0.025, 0.6


def _field(fun, far=0.0):
    return from_function(fun, 2, N, H, S, far)


def _core(f, frac=0.5):
    return f.radius() <= frac * S


# --- convolutions -------------------------------------------------------


@pytest.mark.parametrize("c", [0.0, -1.5, 3.25])
@pytest.mark.parametrize("op", [sup_convolution, inf_convolution])
def test_constant_is_fixed(c, op):
    f = _field(lambda x, y: np.full_like(x, c), far=c)
    g = op(f, 0.1)
    assert np.all(g.values == c)
    assert g.far_value == c


@pytest.mark.parametrize("eps_c", [0.02, 0.05, 0.2])
def test_sup_of_negative_paraboloid(eps_c):
    # optimum y = x / (1 + eps): value -|x|^2 / (1 + eps)
    f = _field(lambda x, y: -(x * x + y * y), far=-S * S)
    g = sup_convolution(f, eps_c)
    r = f.radius()
    exact = -r**2 / (1 + eps_c)
    m = _core(f)
    assert np.all(g.values[m] <= exact[m] + 1e-12)
    assert np.all(g.values[m] >= exact[m] - 2 * H * r[m] - 1e-12)


@pytest.mark.parametrize("eps_c", [0.02, 0.05, 0.2])
def test_inf_of_paraboloid(eps_c):
    f = _field(lambda x, y: x * x + y * y, far=S * S)
    g = inf_convolution(f, eps_c)
    r = f.radius()
    exact = r**2 / (1 + eps_c)
    m = _core(f)
    assert np.all(g.values[m] >= exact[m] - 1e-12)
    assert np.all(g.values[m] <= exact[m] + 2 * H * r[m] + 1e-12)


def test_small_eps_bound_on_cone():
    # -|y| has Lip = 1; the continuous sup-convolution error is exactly eps/4 away from the tip
    eps_c = 1e-4
    f = _field(lambda x, y: -np.hypot(x, y), far=-S)
    g = sup_convolution(f, eps_c)
    err = np.abs(g.values - f.values)[_core(f, 0.9)]
    assert err.max() <= eps_c / 4 + H * 1.0
    assert np.all(g.values >= f.values)


def test_sandwich_and_shift_on_random_fields():
    rng = np.random.default_rng(7)
    res = {r.name: r for r in checks.convolution_suite(rng, fields=3)}
    for name in ("convolution_sandwich", "convolution_convexity_shift", "convolution_convergence"):
        assert res[name].failures == 0, res[name]
    assert res["convolution_sandwich"].worst <= 0.0


def test_shift_is_exact_for_a_kink():
    # x -> w^eps + |x|^2/eps convex along grid lines even at a kink
    f = _field(lambda x, y: np.abs(x - 0.1) - 0.5 * np.abs(y))
    for eps_c in (0.01, 0.1):
        g = sup_convolution(f, eps_c)
        d2 = checks._line_second_differences(g.values, H, eps_c)
        assert d2.min() >= -1e-10


def test_convolution_errors():
    f = _field(lambda x, y: x)
    with pytest.raises(ValueError):
        sup_convolution(f, 0.0)
    with pytest.raises(ValueError, match="too small"):
        sup_convolution(_field(lambda x, y: 100.0 * x), 10.0)


# --- relabel ------------------------------------------------------------


def _disk_sdf(h=0.02):
    return init_signed_distance(Circle(0.5), GridSpec(2, 2 * int(np.ceil(0.9 / h)) + 1, h, 0.85), 0.3)


def test_relabel_identity():
    f = _disk_sdf()
    g = relabel(f, lambda s: s)
    assert np.array_equal(g.values, f.values)
    assert g.far_value == f.far_value


def test_relabel_pointwise():
    f = _disk_sdf()
    g = relabel(f, lambda s: s**3)
    assert np.array_equal(g.values, f.values**3)
    assert g.far_value == f.far_value**3


def test_relabel_double_front_identical():
    f = _disk_sdf()
    a = extract_front(f)
    b = extract_front(relabel(f, lambda s: 2.0 * s))
    assert len(a.loops) == len(b.loops)
    for la, lb in zip(a.loops, b.loops):
        assert np.array_equal(la, lb)


def test_relabel_cube_same_front_after_flow():
    h = 0.02
    g = _disk_sdf(h)
    params = RegularizationParams(0.1 * np.sqrt(h), 2, 0.1 * h)
    u = run_flow(g, S1_2, params, 0.1, 0.1)[-1]
    w = run_flow(relabel(g, lambda s: s**3), S1_2, params, 0.1, 0.1)[-1]
    assert polyline_hausdorff(extract_front(u.field), extract_front(w.field)) <= 3 * h


# --- viscosity probe ------------------------------------------------------


def _states(fun, dt=0.01, ts=(0.0, 1.0, 2.0)):
    return [FlowState(_field(lambda x, y, t=t * dt: fun(x, y, t), far=0.0), t * dt) for t in ts]


PARAMS = RegularizationParams(1e-3, 2, 0.0)


def test_probe_exact_solution_has_no_violations():
    # u = |x|^2 + t: tangential Hessian eigenvalue 2, f = 1 = u_t; differences are exact
    states = _states(lambda x, y, t: x * x + y * y + t)
    rep = viscosity_probe(states, S1_2, PARAMS)
    assert rep.violations == []
    assert rep.n_probed > 0
    # sub slack 1 - (2 + m)/2 and super slack (2 - m)/2 - 1 are both -m/2
    assert rep.max_slack == pytest.approx(-0.5 * 10 * H * H, abs=1e-8)


def test_probe_flags_bump():
    rad = 2 * H
    c = np.array([0.3, 0.2])

    def fun(x, y, t):
        bump = 10 * H * H * np.maximum(0.0, 1 - ((x - c[0]) ** 2 + (y - c[1]) ** 2) / rad**2) ** 2
        return x * x + y * y + t + bump

    rep = viscosity_probe(_states(fun), S1_2, PARAMS)
    assert len(rep.violations) >= 1
    pos = np.array([[-0.5 * (N - 1) * H + H * i for i in v.cell] for v in rep.violations])
    assert np.min(np.linalg.norm(pos - c, axis=1)) <= rad + 1.5 * H * np.sqrt(2)


def test_probe_stationary_field_flagged_on_super_side():
    states = _states(lambda x, y, t: x * x + y * y)
    rep = viscosity_probe(states, S1_2, PARAMS)
    sides = {v.side for v in rep.violations}
    assert sides == {"super"}
    # F(g (R - m I) g) - 0 = (2 - m)/2 at every judged cell
    assert len(rep.violations) == rep.n_probed
    assert rep.violations[0].slack == pytest.approx(1 - 5 * H * H, abs=1e-8)


def test_probe_report_invariants():
    rng = np.random.default_rng(3)
    noise = [rng.normal(size=(N, N)) * 1e-3 for _ in range(3)]
    states = _states(lambda x, y, t: x * x + 0.5 * y * y + t)
    states = [FlowState(s.field.with_values(np.where(s.field.radius() < S, s.field.values + z, 0.0)), s.t)
              for s, z in zip(states, noise)]
    rep = viscosity_probe(states, S1_2, PARAMS)
    sl = [v.slack for v in rep.violations]
    assert len(sl) > 0
    assert np.all(np.isfinite(sl))
    assert sl == sorted(sl, reverse=True)


def test_probe_counts_every_cell():
    states = _states(lambda x, y, t: x * x + y * y + t)
    f = states[1].field
    rep = viscosity_probe(states, S1_2, PARAMS)
    total = np.count_nonzero(f.radius() < S - np.sqrt(2) * H)
    assert rep.n_probed + rep.n_indeterminate + rep.n_outside_cone == total
    # p = 2x vanishes only at the centre node
    assert rep.n_indeterminate == 1


def test_probe_dt_mismatch():
    states = _states(lambda x, y, t: x + t, ts=(0.0, 1.0, 2.5))
    with pytest.raises(ValueError, match="equally spaced"):
        viscosity_probe(states, S1_2, PARAMS)
