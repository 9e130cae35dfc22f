"""Numerical Gamma-calculus for time changes of Dirichlet forms.

Discrete generators on periodic meshes, an independent finite-difference
Riemannian oracle for curvature-dimension bounds, heat semigroups and
time-changed random walks, conformal distances, and the convexification of
domains by conformal weights.
"""

from .dimension import INF, format_dimension, parse_dimension
from .mesh import (
    Mesh,
    MeshError,
    MetricField,
    ScalarField,
    build_circle_mesh,
    build_torus_mesh,
    flat_metric,
    sample_metric,
    sample_scalar,
)
from .dirichlet import (
    Generator,
    StencilError,
    TimeChangedPair,
    assemble_generator,
    be_defect,
    carre_du_champ,
    gamma2_form,
    generator_checks,
    hessian_via_gamma,
    sqrt_gamma_energy_check,
    time_change,
)
from .timechange import (
    HessianSample,
    coefficient,
    matrix_inequality_defect,
    quartic_form_matrix,
    sweep_matrix_inequality,
    sweep_quartic_form,
)
from .smooth_oracle import (
    CurvatureReport,
    bakry_emery_tensor,
    christoffel,
    conformal_data,
    improved_bochner_check,
    optimal_k,
    predicted_kprime,
    ricci,
    verify_theorem_B,
)
from .heatflow import (
    feynman_kac_check,
    gradient_estimate_check,
    heat_solve,
    simulate_time_changed_bm,
)
from .metricgeom import (
    PathGraph,
    build_path_graph,
    comparison_bounds_check,
    conformal_distance,
    dual_distance,
    volume_growth_condition,
)
from .convexify import (
    ConvexifyParams,
    Cutoff,
    DomainMask,
    build_weight,
    convexity_certificate,
    cot_kn,
    cutoff_phi,
    disc_mask,
    laplacian_bound_check,
    minkowski_content,
    signed_distance,
)

__version__ = "0.1.0"
