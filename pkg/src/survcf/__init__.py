"""Counterfactual explanations for survival models.

Exact convex route for Cox models, constrained particle swarm search for any
black box, and a sampling oracle for verification.
"""

__version__ = "0.1.0"

from .counterfactual import (
    DEFAULT_C,
    CounterfactualQuery,
    SearchRegion,
    build_search_region,
    closest_feasible_train,
    feature_bounds,
    loss,
    psi,
    restrict,
)
from .cox import CoxFitReport, CoxModel, breslow_baseline, cox_mean, cox_predict_sf, fit_cox, log_partial_likelihood
from .data import CsvSchema, GeneratorConfig, draw_coefficients, generate_synthetic, load_csv, write_csv
from .errors import (
    DimensionMismatchError,
    InadmissibleMarginError,
    InfeasibleQueryError,
    NoFeasibleSampleError,
    NumericalError,
    SurvCFError,
)
from .exact import (
    LinearCounterfactualConstraint,
    ZetaProblem,
    pi_of_u,
    project_halfspace_box,
    r_admissible_range,
    solve_exact,
    solve_zeta_root,
)
from .pso import SwarmConfig, derive_coefficients, pso_minimize, solve_counterfactual_pso
from .rsf import RandomSurvivalForest, fit_rsf, rsf_predict_sf
from .survival import (
    Dataset,
    EventRecord,
    StepSurvivalFunction,
    TimeGrid,
    build_time_grid,
    restricted_mean,
)
from .verify import VerificationReport, build_report, sample_verify
