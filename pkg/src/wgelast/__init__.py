"""Locking-free weak Galerkin finite elements for planar linear elasticity.

Displacement is approximated by element-interior and edge polynomials of
equal degree; the scheme tests the body force against an H(div)-conforming
flux reconstruction of the test function, which makes the error constants
independent of the grad-div coefficient (no volumetric locking).
"""

from .assembly import (DofMap, SolverError, SparseSystem, WgField, assemble,
                       dof_map, local_load, local_stiffness, matrix_parts, solve)
from .kernels import ElementOperators, available_backends, default_backend
from .localops import (RtSpace, divergence_identity_check, element_operators,
                       normal_trace_gap, rt_reconstruction, stabilizer,
                       weak_divergence, weak_gradient)
from .mesh import (Mesh, MeshError, build_square_mesh, edge_geometry,
                   export_mesh, import_mesh)
from .polyspace import (EdgeBasis, QuadratureRule, TriBasis, edge_rule,
                        project_edge, project_element, triangle_rule)
from .study import (ConvergenceTable, ManufacturedProblem, convergence_study,
                    errors_against, error_equation_residual, example_problem,
                    patch_suite, polynomial_problem, project_onto_space,
                    triple_bar_norm)

__version__ = "0.1.0"
