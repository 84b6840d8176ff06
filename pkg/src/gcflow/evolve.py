"""Forward-Euler integration of u_t = fhat(eig(gamma_eps D2u gamma_eps)) + sigma Lap u."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .cone import ConeCut, CurvatureSpec, lipschitz_bound
from .errors import CFLViolation, NonFiniteValue
from .grid import RegularizationParams, ScalarField, first_nonfinite, kernel_args


@dataclass
class FlowState:
    field: ScalarField
    t: float = 0.0
    step_count: int = 0
    dt: float = 0.0


def cfl_dt(params: RegularizationParams, h: float, spec: CurvatureSpec, cut: ConeCut | None = None,
           lam: float | None = None) -> float:
    """``h^2 / (2 dims (Lambda + sigma))`` with Lambda the envelope's Lipschitz constant."""
    if not h > 0:
        raise ValueError("h must be positive")
    if lam is None:
        lam = lipschitz_bound(spec, cut if cut is not None else params.cut)
    return h * h / (2.0 * spec.n_dim * (lam + params.sigma))


def sweep(field: ScalarField, spec: CurvatureSpec, params: RegularizationParams, dt: float,
          source: float = 0.0) -> tuple[np.ndarray, float]:
    """One explicit update ``u + dt (op - source)`` on the active cells; returns (values, max|op - source|)."""
    runs = field.active_runs()
    out = field.values.copy()
    kern = K.sweep2 if field.dims == 2 else K.sweep3
    resid = kern(field.values, out, runs, dt, source, field.h, params.eps, params.sigma,
                 *kernel_args(spec, params))
    if not (np.isfinite(resid) and np.isfinite(out).all()):
        cell = first_nonfinite(out, field.radius() < field.S)
        raise NonFiniteValue(f"non-finite value produced at cell {cell}", cell=cell)
    return out, resid


def step(state: FlowState, spec: CurvatureSpec, params: RegularizationParams,
         dt: float | None = None) -> FlowState:
    """Advance one step; the input state is left untouched."""
    limit = cfl_dt(params, state.field.h, spec)
    dt = limit if dt is None else float(dt)
    if not 0.0 < dt <= limit * (1.0 + 1e-12):
        raise CFLViolation(f"dt={dt} violates the stability limit {limit}")
    vals, _ = sweep(state.field, spec, params, dt)
    return FlowState(state.field.with_values(vals, check=False), state.t + dt, state.step_count + 1, dt)


def run_flow(initial: ScalarField, spec: CurvatureSpec, params: RegularizationParams, t_max: float,
             snap_every: float, dt: float | None = None, on_step=None) -> list[FlowState]:
    """Integrate to ``t_max``, returning deep-copied snapshots at t = 0, multiples of ``snap_every`` and t_max.

    Step sizes are shortened so snapshot times are hit exactly.  ``on_step`` is
    called as ``on_step(prev_state, new_state)`` after every step.
    """
    if snap_every <= 0:
        raise ValueError("snap_every must be positive")
    limit = cfl_dt(params, initial.h, spec)
    dt = limit if dt is None else min(float(dt), limit)
    state = FlowState(initial.copy(), 0.0, 0, 0.0)
    snaps = [FlowState(state.field.copy(), 0.0, 0, 0.0)]
    n_snaps = int(np.floor(t_max / snap_every + 1e-9))
    targets = [snap_every * i for i in range(1, n_snaps + 1)]
    if not targets or t_max - targets[-1] > 1e-12 * max(1.0, t_max):
        targets.append(t_max)
    for target in targets:
        while state.t < target - 1e-13 * max(1.0, target):
            d = min(dt, target - state.t)
            new = step(state, spec, params, d)
            if target - new.t < 1e-13 * max(1.0, target):
                new.t = target
            if on_step is not None:
                on_step(state, new)
            state = new
        snaps.append(FlowState(state.field.copy(), state.t, state.step_count, state.dt))
    return snaps


def barrier_phi(s):
    """(s - 2)^3 on [0, 2], zero beyond."""
    s = np.asarray(s, dtype=float)
    return np.where(s < 2.0, (s - 2.0) ** 3, 0.0)


def barrier_omega(field: ScalarField, t: float, c0: float, C: float, eps: float) -> np.ndarray:
    """Far-field subsolution ``phi(|x|^2/2 + c0 t) - C t eps^(1/2)`` sampled on the grid."""
    r2 = field.radius() ** 2
    return barrier_phi(0.5 * r2 + c0 * t) - C * t * np.sqrt(eps)
