"""Numerical toolkit for L_p surface-area measures and the discrete L_p Minkowski problem."""
from .bodies import (
    HPolytope,
    SupportField,
    VertexComplex,
    ball_polytope,
    chebyshev_center,
    enumerate_vertices,
    polar,
    support_eval,
    support_field_from_polytope,
    volume,
)
from .constructions import ConeModel, ConstructionParams, density_limit, density_phi, lower_dim_measure
from .errors import GeometryError
from .jfunctional import JFunctionalEval, eval_J, holder_interpolation_check, nonuniqueness_probe
from .measures import (
    DensityField,
    DiscreteMeasure,
    LinearMap,
    cone_volume_measure,
    lp_measure,
    pushforward,
    surface_area_measure,
)
from .solver import (
    MinkowskiProblem,
    SolveReport,
    SolverConfig,
    linearized_operator,
    monge_ampere_residual,
    solve_minkowski,
)
from .sphere import SphereGrid, build_grid, integrate, laplacian_matrix

__all__ = [
    "ConeModel", "ConstructionParams", "DensityField", "DiscreteMeasure", "GeometryError", "HPolytope",
    "JFunctionalEval", "LinearMap", "MinkowskiProblem", "SolveReport", "SolverConfig", "SphereGrid",
    "SupportField", "VertexComplex", "ball_polytope", "build_grid", "chebyshev_center", "cone_volume_measure",
    "density_limit", "density_phi", "enumerate_vertices", "eval_J", "holder_interpolation_check", "integrate",
    "laplacian_matrix", "linearized_operator", "lower_dim_measure", "lp_measure", "monge_ampere_residual",
    "nonuniqueness_probe", "polar", "pushforward", "solve_minkowski", "support_eval",
    "support_field_from_polytope", "surface_area_measure", "volume",
]
