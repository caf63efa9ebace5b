"""Mesh-free neural solver for Helmholtz interface problems.

Two sine-activated networks represent the solution on either side of a
level-set interface. They are trained by minimizing Jacobi-preconditioned
residuals of a sharp jump-corrected finite-difference stencil, assembled on
the fly in implicit cells around random or grid collocation points.
"""

from .errors import (
    ConfigError,
    DegenerateGradient,
    EvalError,
    InvalidArchitecture,
    NonPositiveError,
    NumericalFailure,
    OutOfDomain,
    ParseError,
)
from .evalmetrics import ErrorReport, convergence_order, evaluate_errors, export_field, export_field_csv
from .expr import Expression, evaluate, parse, to_string
from .geometry import AnalyticLevelSet, Crossing, LevelSet, SampledLevelSet, Side, sphere
from .kernel import (
    PointResidual,
    ProblemSpec,
    StencilAssembly,
    assemble,
    assemble_batch,
    boundary_residual,
    residual,
    residual_cotangents,
)
from .surrogate import SineMlp, SolutionPair, backward, evaluate_solution, forward, init, init_pair
from .training import Batch, OptimizerState, TrainConfig, adam_step, loss_and_grad, sample_epoch, train

__version__ = "0.1.0"
