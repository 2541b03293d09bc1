"""Model-based clustering of large discrete-valued networks.

Finite-mixture (stochastic block) models fit by a variational generalized
EM algorithm with an MM-minorized E-step, plus exponential-family dyad
models, sparse network simulation and parametric-bootstrap uncertainty
quantification.
"""

__version__ = "0.1.0"

from .network import (  # noqa: F401
    EdgeAlphabet,
    DyadAlphabet,
    SparseNetwork,
    binary_alphabet,
    signed_alphabet,
    make_dyad_alphabet,
    load_edge_list,
    save_edge_list,
    excess_trust,
)
from .models import (  # noqa: F401
    TabularBlockModel,
    ExpFamBlockModel,
    BlockMoments,
    dyad_log_prob,
    block_moments,
    build_p1_mixture,
    build_excess_trust,
    build_saturated,
    invert_mean_parameters,
)
from .engine import (  # noqa: F401
    VariationalState,
    BlockDyadStats,
    FitConfig,
    FitResult,
    init_random,
    accumulate_block_stats,
    lower_bound,
    minorizer_value,
    solve_simplex_qp,
    e_step_mm,
    e_step_fp,
    m_step_gamma,
    m_step_pi_tabular,
    m_step_theta_newton,
    fit,
    fit_from_alpha,
)
from .simulator import (  # noqa: F401
    SimSpec,
    sample_memberships,
    sample_distinct_pairs,
    sample_network,
)
from .bootstrap import (  # noqa: F401
    BootstrapConfig,
    BootstrapResult,
    anchor_alpha,
    run_bootstrap,
)
