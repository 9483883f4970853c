"""
Frank-Wolfe and conditional gradient sliding solvers for co-localization
========================================================================

Modules
-------
::

 domain      -- box indexing, trellis domains, shortest-path oracle, rounding
 objective   -- similarity matrices, Laplacians, discriminative term, QP
 active_set  -- convex-combination bookkeeping for away/pairwise steps
 solvers     -- fw, afw, pairfw, cgs, acgs, pcgs
 instances   -- seeded synthetic instances and their text format
 cli         -- ``colocfw generate | run | round``
"""
from .active_set import ActiveSet
from .domain import Atom, BoxIndexing, TrellisDomain, TrellisError, build_trellis, complete_trellis
from .instances import InstanceSpec, SyntheticInstance, generate, load_instance, save_instance
from .objective import (
    BoxGeometry,
    ModelParams,
    QuadraticProblem,
    assemble,
    chi2_similarity,
    colocalization_problem,
    discriminative_term,
    normalized_laplacian,
    saliency_prior_term,
    temporal_similarity,
)
from .solvers import (
    SOLVERS,
    SolverConfig,
    SolverTrace,
    exact_line_search,
    fw_procedure,
    solve,
    wolfe_gap,
)

__version__ = "0.1.0"
