"""Finite element solver for the total variation flow and ROF minimization."""
from .mesh import (Mesh, MeshMismatchError, ScalarField, assemble_mass_matrix,
                   build_uniform_mesh, cell_vertex_gradients, l2_inner, l2_norm,
                   lagrange_interpolate)
from .tv import (DualField, QuadratureRule, apply_div_transpose, discrete_tv_energy,
                 dual_l1_norm, dual_pairing, dual_sup_norm, grad_to_dual, inner_h,
                 project_unit_ball, quadrature_weights)
from .primal_dual import (DIRICHLET_ZERO, NEUMANN, BoundaryCondition, InnerResult,
                          SolverParams, check_step_constraint, inner_solve, lambda_update,
                          residual_r, stopping_check, v_update)
from .flow import (FlowConfig, FlowTrace, IncompatibleDataError, annulus_diagnostics,
                   detect_extinction, run_flow)

__version__ = "0.1.0"
