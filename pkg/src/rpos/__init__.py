"""R-classification of irreducible nonnegative matrices on countable state spaces."""
__version__ = "0.1.0"

from .classify import (
    Classification,
    PerturbationReport,
    classify,
    essential_radius,
    exp_moment_invariance_check,
    exp_moment_positivity,
    rtrans_test,
    strong_rpos_test,
)
from .core import (
    SparseNonnegMatrix,
    StateGenerator,
    Subgraph,
    Walk,
    build_matrix,
    format_tsv,
    parse_tsv,
    read_tsv,
    truncate,
    walk_weight,
)
from .exceptions import *  # noqa: F401,F403
from .excursion import excursion_gf, excursion_table, psi_profile, psi_samples, psi_value
from .htransform import (
    doob_transform,
    excessive_function,
    lyapunov_certificate,
    pf_eigenpair,
    simulate_returns,
    strictly_excessive,
    verify_certificate,
)
from .models import ModelSpec, birth_death, finite_random, model_from_spec, pinning, pinning_beta_c, srw
from .spectral import green, rho_bisect, rho_lower, rho_upper
