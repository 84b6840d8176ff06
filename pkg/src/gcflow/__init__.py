"""Level-set solver for motion by general curvature."""

from .analysis import ProbeReport, ProbeViolation, inf_convolution, relabel, sup_convolution, viscosity_probe
from .arrival import ArrivalSolution, DomainMask, check_bounds, extinction_time, solve_stationary
from .cone import (ConeCut, CurvatureSpec, cone_membership, default_n_cut, envelope_fhat, envelope_grad, eval_f,
                   grad_f, in_equality_region)
from .errors import (CFLViolation, ConeViolation, ConfigError, DegenerateFront, EnvelopeError, GCFlowError,
                     NonConvergence, NonFiniteValue, StencilError)
from .evolve import FlowState, cfl_dt, run_flow, step, sweep
from .front import (Ball, Circle, Ellipse, Front, FrontSample, GridSpec, UnionOfBalls, extract_front,
                    front_samples, init_signed_distance)
from .grid import RegularizationParams, ScalarField, gamma_eps, operator_field, operator_value
from .harness import ExperimentConfig, ExperimentResult, parse_config, run_experiment
from .noncollapse import AndrewsReport, andrews_alpha, ball_radii, z_value

__version__ = "0.1.0"
