"""spherekit: sphericalization of finite metric measure spaces.

Attach a point at infinity to a weighted graph, replace the path metric by
the bounded quasimetric and its chain metric, rescale the vertex masses,
and study what the transform preserves: doubling and dimension conditions,
Ahlfors regularity, Poincaré-type inequalities, p-harmonic functions and
the Dirichlet problem with boundary data at infinity.
"""
from .space import (
    INFINITY,
    BallQuery,
    Space,
    SpaceValidationError,
    UnknownPointError,
    generate_grid,
    load_space,
    loads_space,
    random_space,
    serialize_space,
    subspace_by_remoteness,
)
from .sphere import (
    EdgeGradientField,
    InclusionReport,
    SphericalizedSpace,
    chain_metric_bruteforce,
    sphericalize,
)
from .geometry import (
    AhlforsEstimate,
    AnnularResult,
    DimensionFit,
    Estimate,
    GeometryProfile,
    NecessityReport,
    PerfectnessResult,
    PoincareEstimate,
    WhitneyCover,
    ahlfors_regularity,
    annular_connectedness,
    dimension_exponents,
    doubling_constant,
    make_test_battery,
    necessity_experiment,
    poincare_probe,
    uniform_perfectness,
    whitney_cover,
)
from .potential import (
    CapacityTrendReport,
    EnergyForm,
    FunctionField,
    ParabolicityReport,
    SolveInfo,
    capacity_at_infinity_probe,
    classify_parabolicity,
    condenser_capacity,
    edge_gradient,
    energy_gradient,
    extended_spherical_graph,
    minimize_edge_energy,
    p_energy,
    solve_p_harmonic,
)
from .dirichlet import (
    BarrierReport,
    DirichletProblem,
    InvarianceReport,
    PerronResult,
    PerturbationReport,
    RegularityReport,
    barrier_check,
    exterior_domain,
    invariance_under_sphericalization,
    perron_solve,
    regularity_probe,
    resolutive_perturbation_test,
)

__version__ = "0.1.0"
