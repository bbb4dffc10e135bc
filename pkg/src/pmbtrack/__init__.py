"""Multi-target tracking with Poisson multi-Bernoulli mixtures.

The toolkit covers the point-target PMBM filtering recursion, four
PMBM-to-PMB reductions (track-oriented, global nearest neighbour, loopy
belief propagation, and the variational coordinate-descent projection),
GOSPA evaluation, and a Monte-Carlo benchmark harness.
"""

from .assignment import Assignment, murty_kbest, solve_assignment
from .errors import (
    ContractViolationError,
    InfeasibleAssignmentError,
    NumericalError,
    TrackingError,
)
from .experiment import ExperimentConfig, ExperimentResult, run_experiment, run_table1
from .filtering import BirthModel, FilterThresholds, SensorModel, predict, step, update
from .gaussian import (
    GaussianDensity,
    LinearGaussianModel,
    gaussian_kld,
    kalman_predict,
    kalman_update,
    moment_match,
)
from .gospa import GospaResult, gospa, rms_gospa
from .pmbm import (
    BernoulliComponent,
    GlobalHypothesis,
    PmbDensity,
    PmbmDensity,
    PppIntensity,
    PppTerm,
    Track,
    bernoulli_kld,
    compute_phd,
    empty_pmbm,
    estimate_targets,
    is_pmb,
    make_pmb,
    parse_pmbm,
    prune_and_cap,
    serialize_pmbm,
)
from .projections import (
    PermutationSet,
    ProjectionReport,
    bp_pmb_update,
    gnn_pmb,
    merge_bernoullis_under_permutations,
    optimize_permutations,
    to_pmb,
    vpmb_project,
)
from .scenario import (
    ScenarioTruth,
    TargetTruth,
    generate_scenario,
    make_cv_model,
    simulate_measurements,
)

__version__ = "0.1.0"
