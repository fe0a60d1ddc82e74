"""Backstepping boundary control of an ODE cascaded with a linearized KdV equation.

Modules
-------
linops      small dense linear algebra (expm, Lyapunov, Hurwitz and rank tests)
poly2       bivariate polynomials in (s, t) with a total-degree cap
gains       plant data and the closed-form gains phi, psi
kernels     successive approximation of the transformation kernels q, h
transform   grid evaluation of the transformation, its inverse and the feedback
sim         method-of-lines simulation of the closed loop and the target system
certify     Lyapunov certificate and decay-rate checks
config      scenario files
cli         command-line front end
"""
from .errors import (CertificationError, ConvergenceError, DimensionError,
                     DivergenceError, DomainError, InputError, KdvCascadeError,
                     PlantError, SimulationError)
from .gains import Plant, phi, psi, theta_series
from .kernels import KernelSolution, iterate_once, solve_kernel
from .transform import SampledState, build_table, forward, h_norm, inverse, feedback_U
from .sim import SimConfig, simulate_closed_loop, simulate_target
from .certify import design

__version__ = "0.1.0"
