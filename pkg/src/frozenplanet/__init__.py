"""Symmetric frozen planet orbits of classical helium, computed as critical
points of regularized action functionals on loops."""
from ._kernels import BACKEND
from .functionals import (
    DomainError,
    ModelParams,
    Momentum,
    decoupled_F,
    eval_A,
    eval_B,
    eval_I,
    eval_Q,
    grad_A,
    grad_B,
    grad_I,
    grad_Q,
    hamilton_residual,
    legendre,
)
from .grid import LoopGrid, SymmetryClass, ZLoop, ZPair
from .levi_civita import QOrbit, TimeChange, kepler_energy, orbit_from_pair, q_to_z, time_change, z_to_q
from .solvers import (
    ContinuationTrace,
    SolveOptions,
    SolveReport,
    continue_homotopy,
    hessian_spectrum,
    kepler_seed,
    newton_solve,
)
from .verify import VerificationReport, verify_kepler, verify_pair

__version__ = "0.1.0"
