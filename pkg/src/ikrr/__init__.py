"""Group-invariant kernel ridge regression on compact manifolds.

Closed-form Laplace-Beltrami spectra (circle, flat torus, 2-sphere,
products), isometric group actions with exact invariant-dimension
counting, spectral kernels restricted to invariant sub-bases, closed-
form ridge regression with exact excess risk, and a seeded experiment
harness for rate and sample-gain measurements.
"""

__version__ = "0.1.0"

from .actions import (
    GroupAction,
    InvariantProjector,
    QuotientInvariants,
    apply_action,
    count_invariant,
    invariant_projector,
    parse_action,
    quotient_invariants,
    sample_elements,
    trivial_action,
)
from .errors import (
    ConfigurationError,
    DomainError,
    IkrrError,
    NumericalError,
    ResourceLimitError,
    UnknownQuotientError,
)
from .harness import (
    ExperimentConfig,
    GainReport,
    RateFit,
    RunRecord,
    config_from_dict,
    count_sweep,
    fit_rate,
    gain_report,
    gen_target,
    run_sweep,
)
from .kernels import (
    Bandlimited,
    Heat,
    Sobolev,
    SpectralKernel,
    build_kernel,
    choose_lambda_max,
    dirichlet_energy,
    haar_average_kernel,
    parse_kernel,
    space_complexity,
)
from .regress import (
    Dataset,
    KrrModel,
    TargetFunction,
    effective_estimator,
    excess_risk_exact,
    excess_risk_mc,
    fit,
    optimal_eta,
    predict,
    rate_upper_bound,
)
from .spectra import (
    EigenBasis,
    Manifold,
    Product,
    ProductIndex,
    Sphere2,
    SphereIndex,
    Torus,
    TorusIndex,
    circle,
    enumerate_eigenbasis,
    eval_basis,
    eval_eigenfunction,
    geodesic_distance,
    parse_manifold,
    uniform_sample,
    weyl_count,
)
