"""Multi-resource quantum resource theories: monotones, bank curves and interconversion."""
from .bank import (
    BankCurve,
    BankGeometryError,
    BankMonotoneCoeffs,
    bank_vs_relent_check,
    first_law_check,
    is_bank_state,
    normal_vector_coeffs,
    resource_deltas,
    tangency_margin,
    tangent_coeffs,
    tangent_plane_coeffs,
    trace_bank_curve,
)
from .free_sets import ParamFamily, Singleton, VertexPolytope, closest_state, grid_oracle, membership
from .kernels import BACKEND
from .monotones import (
    AvgObservable,
    RelEntropyDistance,
    delta_W,
    evaluate,
    property_suite_M,
    regularization_trend,
    transformation_cost,
)
from .protocol import back_action_scaling, run_interconversion, solve_p0_prime
from .quantum import DensityMatrix, Observable, gibbs_state, relative_entropy, von_neumann_entropy
from .theories import build_local_control_theory, build_thermo_theory, solve_betas

__version__ = "0.1.0"
