import numpy as np
import pytest

from gcflow.cone import CurvatureSpec
from gcflow.errors import DegenerateFront
from gcflow.evolve import run_flow
from gcflow.front import (Circle, Ellipse, FrontSample, GridSpec, extract_front, front_radius, front_samples,
                          init_signed_distance)
from gcflow.grid import RegularizationParams
from gcflow.noncollapse import andrews_alpha, ball_center, ball_radii, z_value

S1_2 = CurvatureSpec("sigma", 1, 2)


def _sample(pos, nu, speed):
    return FrontSample(np.asarray(pos, float), np.asarray(nu, float), float(speed), 1.0)


def _ellipse_samples(a, b, m, phase=0.0):
    """Exact points, inward normals and sigma_1 speeds kappa / 2 of an ellipse."""
    t = np.linspace(0, 2 * np.pi, m, endpoint=False) + phase
    X = np.stack([a * np.cos(t), b * np.sin(t)], axis=1)
    N = -np.stack([b * np.cos(t), a * np.sin(t)], axis=1)
    N /= np.linalg.norm(N, axis=1)[:, None]
    kappa = a * b / (a * a * np.sin(t) ** 2 + b * b * np.cos(t) ** 2) ** 1.5
    return [_sample(x, n, 0.5 * k) for x, n, k in zip(X, N, kappa)]


def _circle_samples(R, m, center=(0.0, 0.0)):
    t = np.linspace(0, 2 * np.pi, m, endpoint=False)
    X = np.stack([np.cos(t), np.sin(t)], axis=1)
    return [_sample(R * x + np.asarray(center), -x, 0.5 / R) for x in X]


def test_z_value_examples():
    x = _sample([0.0, 0.0], [0.0, 1.0], 2.0)
    assert z_value(x, [1.0, 1.0], 1.0) == pytest.approx(1.0, abs=1e-15)
    assert z_value(x, x.position, 1.0) == 0.0
    r = 1.0 / 2.0
    c = ball_center(x, 1.0)
    for th in np.linspace(0, 2 * np.pi, 17):
        y = c + r * np.array([np.cos(th), np.sin(th)])
        assert abs(z_value(x, y, 1.0)) <= 1e-12


def test_z_value_needs_positive_speed():
    with pytest.raises(ValueError):
        z_value(_sample([0.0, 0.0], [0.0, 1.0], 0.0), [1.0, 0.0], 1.0)


def test_ball_identity_random():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        d = int(rng.integers(2, 4))
        nu = rng.normal(size=d)
        nu /= np.linalg.norm(nu)
        x = _sample(rng.normal(size=d), nu, rng.uniform(0.1, 10.0))
        y = rng.normal(size=d) * rng.uniform(0.1, 3.0)
        delta = rng.uniform(0.05, 2.0)
        c = x.position + delta / x.speed * nu
        lhs = (y - c) @ (y - c) - (delta / x.speed) ** 2
        scale = max(1.0, (y - c) @ (y - c), (delta / x.speed) ** 2)
        assert abs(lhs - 2.0 / x.speed * z_value(x, y, delta)) <= 1e-12 * scale


def test_circle_radii():
    front = _circle_samples(1.0, 400)
    for x in front[::37]:
        r_in, r_ex = ball_radii(x, front)
        assert r_in == pytest.approx(1.0, rel=1e-12)
        assert r_ex == np.inf


def test_radii_of_extracted_circle():
    h = 0.02
    g = init_signed_distance(Circle(1.0), GridSpec(2, 2 * int(np.ceil(1.41 / h)) + 1, h, 1.35), 0.3)
    smp = front_samples(g, extract_front(g), S1_2, RegularizationParams(1e-3, 4, 0.0))
    for x in smp[::25]:
        r_in, r_ex = ball_radii(x, smp, exclude=4 * h)
        assert r_in == pytest.approx(1.0, rel=0.05)
        assert r_ex > 10.0


def test_exterior_radius_between_two_circles():
    front = _circle_samples(1.0, 2000, (-2.0, 0.0)) + _circle_samples(1.0, 2000, (2.0, 0.0))
    x = front[0]  # (-1, 0) on the left circle, facing the gap
    np.testing.assert_allclose(x.position, [-1.0, 0.0], atol=1e-15)
    _, r_ex = ball_radii(x, front)
    assert r_ex == pytest.approx(1.0, rel=0.1)


def test_radii_need_two_points():
    with pytest.raises(DegenerateFront):
        ball_radii(_sample([0, 0], [0, 1], 1.0), [_sample([0, 0], [0, 1], 1.0)])


def test_radius_matches_z_characterization():
    front = _ellipse_samples(1.0, 0.5, 600)
    Y = np.array([s.position for s in front])
    for x in front[::41]:
        r, _ = ball_radii(x, front)
        delta = r * x.speed
        zs = [z_value(x, y, delta) for y in Y]
        assert min(zs) >= -1e-9
        bigger = [z_value(x, y, delta * (1 + 1e-6)) for y in Y]
        assert min(bigger) < 0


def test_refinement_never_increases_radius():
    coarse = _ellipse_samples(1.0, 0.5, 300)
    fine = _ellipse_samples(1.0, 0.5, 600)  # contains every coarse point
    for i in range(0, 300, 13):
        np.testing.assert_allclose(fine[2 * i].position, coarse[i].position, atol=1e-15)
        assert ball_radii(fine[2 * i], fine)[0] <= ball_radii(coarse[i], coarse)[0] + 1e-9


def test_alpha_circle_and_scale_invariance():
    for R in (1.0, 0.6):
        rep = andrews_alpha(_circle_samples(R, 500))
        assert rep.alpha_int == pytest.approx(0.5, rel=1e-9)
        assert rep.alpha_ext == np.inf
        assert rep.n_samples == 500 and rep.n_flagged == 0


def test_alpha_circle_flow():
    h = 0.02
    spec, params = S1_2, RegularizationParams(0.1 * np.sqrt(h), 2, 0.1 * h)
    g = init_signed_distance(Circle(1.0), GridSpec(2, 2 * int(np.ceil(1.41 / h)) + 1, h, 1.35), 0.3)
    for s in run_flow(g, spec, params, 0.64, 0.64):
        fr = extract_front(s.field)
        rep = andrews_alpha(front_samples(s.field, fr, spec, params), exclude=4 * h)
        assert rep.alpha_int == pytest.approx(0.5, rel=0.07)
    assert front_radius(fr) == pytest.approx(0.6, rel=0.02)


def _brute_alpha(samples):
    X = np.array([s.position for s in samples])
    N = np.array([s.inward_normal for s in samples])
    F = np.array([s.speed for s in samples])
    best = np.inf
    for i in range(len(X)):
        d = X - X[i]
        s = d @ N[i]
        ok = s > 0
        best = min(best, F[i] * float((np.einsum("ij,ij->i", d[ok], d[ok]) / (2 * s[ok])).min()))
    return best


def test_alpha_ellipse_against_brute_force():
    oracle = _brute_alpha(_ellipse_samples(1.0, 0.5, 2000))
    assert andrews_alpha(_ellipse_samples(1.0, 0.5, 2000)).alpha_int == pytest.approx(oracle, rel=1e-12)
    h = 0.01
    g = init_signed_distance(Ellipse(1.0, 0.5), GridSpec(2, 2 * int(np.ceil(1.41 / h)) + 1, h, 1.35), 0.3)
    params = RegularizationParams(1e-3, 4, 0.0)
    rep = andrews_alpha(front_samples(g, extract_front(g), S1_2, params), exclude=4 * h)
    assert rep.alpha_int == pytest.approx(oracle, rel=0.05)


def test_flagged_and_violations():
    samples = _circle_samples(1.0, 100)
    samples[3].speed = 0.0
    rep = andrews_alpha(samples)
    np.testing.assert_array_equal(rep.flagged, [3])
    assert rep.alpha_int == pytest.approx(0.5)
    assert len(rep.violations(0.4)) == 0
    assert len(rep.violations(0.6)) == 99
    use = np.ones(100, dtype=bool)
    use[rep.flagged] = False
    assert np.all(rep.speed[use] * rep.interior_radius[use] >= rep.alpha_int - 1e-12)


def test_empty_front():
    with pytest.raises(DegenerateFront):
        andrews_alpha([])
