"""Interior/exterior ball radii of extracted fronts and the Andrews ratio alpha = F * r."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import DegenerateFront
from .front import FrontSample


def z_value(x: FrontSample, y, delta: float) -> float:
    """``F_x/2 |x - y|^2 + delta <x - y, nu_x>``."""
    if not x.speed > 0:
        raise ValueError(f"z_value needs a positive speed, got {x.speed}")
    d = np.asarray(x.position, dtype=float) - np.asarray(y, dtype=float)
    return float(0.5 * x.speed * (d @ d) + delta * (d @ np.asarray(x.inward_normal, dtype=float)))


def ball_center(x: FrontSample, delta: float) -> np.ndarray:
    """Center ``x + (delta / F_x) nu_x`` of the ball attached to ``x``."""
    return np.asarray(x.position) + (delta / x.speed) * np.asarray(x.inward_normal)


def _radii(X, N, Y, exclude):
    """Interior and exterior radii for rows of X (normals N) against the point set Y."""
    D = Y[None, :, :] - X[:, None, :]
    d2 = (D * D).sum(-1)
    s = np.einsum("mkd,md->mk", D, N)
    far = d2 > exclude * exclude if exclude > 0 else d2 > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        r_in = np.where(far & (s > 0), d2 / (2 * s), np.inf).min(1)
        r_ex = np.where(far & (s < 0), d2 / (-2 * s), np.inf).min(1)
    return r_in, r_ex


def _local_caps(kmin, kmax):
    with np.errstate(divide="ignore"):
        cap_in = np.where(kmax > 0, 1.0 / np.maximum(kmax, 1e-300), np.inf)
        cap_ex = np.where(kmin < 0, 1.0 / np.maximum(-kmin, 1e-300), np.inf)
    return cap_in, cap_ex


def ball_radii(x: FrontSample, front, exclude: float = 0.0) -> tuple[float, float]:
    """Largest interior and exterior tangent balls at ``x`` that contain no front point.

    interior = min over y with <y - x, nu_x> > 0 of |x - y|^2 / (2 <y - x, nu_x>),
    exterior likewise with -nu_x; +inf when no point qualifies.  With
    ``exclude > 0`` points closer than ``exclude`` are ignored and the local
    curvature bound (1 / kmax inside, 1 / -kmin outside) is used instead.
    """
    Y = np.array([s.position for s in front], dtype=float)
    if len(Y) < 2:
        raise DegenerateFront("ball radii need at least two front samples")
    X = np.asarray(x.position, dtype=float)[None, :]
    N = np.asarray(x.inward_normal, dtype=float)[None, :]
    r_in, r_ex = _radii(X, N, Y, exclude)
    if exclude > 0:
        cap_in, cap_ex = _local_caps(np.array([x.kmin]), np.array([x.kmax]))
        r_in = np.minimum(r_in, cap_in)
        r_ex = np.minimum(r_ex, cap_ex)
    return float(r_in[0]), float(r_ex[0])


@dataclass
class AndrewsReport:
    interior_radius: np.ndarray
    exterior_radius: np.ndarray
    speed: np.ndarray
    alpha_int: float
    alpha_ext: float
    flagged: np.ndarray = dc_field(default_factory=lambda: np.zeros(0, dtype=int))
    n_samples: int = 0

    @property
    def n_flagged(self) -> int:
        return int(len(self.flagged))

    def violations(self, alpha: float) -> np.ndarray:
        """Indices of audited samples with F * r below ``alpha`` on either side."""
        ok = np.ones(len(self.speed), dtype=bool)
        ok[self.flagged] = False
        with np.errstate(invalid="ignore"):
            bad = ok & ((self.speed * self.interior_radius < alpha) | (self.speed * self.exterior_radius < alpha))
        return np.flatnonzero(bad)


def andrews_alpha(samples, exclude: float = 0.0, speed_floor: float = 0.0, chunk: int = 512) -> AndrewsReport:
    """Aggregate ``alpha = inf F * r`` over the samples.

    Samples with speed <= ``speed_floor`` are flagged and left out of the
    aggregates (a flat point needs no ball).
    """
    if len(samples) == 0:
        raise DegenerateFront("empty front")
    X = np.array([s.position for s in samples], dtype=float)
    N = np.array([s.inward_normal for s in samples], dtype=float)
    F = np.array([s.speed for s in samples], dtype=float)
    kmin = np.array([s.kmin for s in samples], dtype=float)
    kmax = np.array([s.kmax for s in samples], dtype=float)
    r_in = np.empty(len(X))
    r_ex = np.empty(len(X))
    for a in range(0, len(X), chunk):
        r_in[a : a + chunk], r_ex[a : a + chunk] = _radii(X[a : a + chunk], N[a : a + chunk], X, exclude)
    if exclude > 0:
        cap_in, cap_ex = _local_caps(kmin, kmax)
        r_in = np.minimum(r_in, cap_in)
        r_ex = np.minimum(r_ex, cap_ex)
    flagged = np.flatnonzero(~(F > speed_floor))
    use = np.ones(len(X), dtype=bool)
    use[flagged] = False
    a_in = float(np.min(F[use] * r_in[use])) if use.any() else np.inf
    a_ex = float(np.min(F[use] * r_ex[use])) if use.any() else np.inf
    return AndrewsReport(r_in, r_ex, F, a_in, a_ex, flagged, len(X))
