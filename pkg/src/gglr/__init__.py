"""Sparse-numerics library and batch CLI for restoring signals on manifold
graphs with a gradient-graph Laplacian regularizer.
"""

import os as _os

# Cap internal (BLAS) parallelism before numpy is first imported.
_threads = _os.environ.get("GGLR_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .daggrad import (  # noqa: E402
    DagGradientPlan,
    GradientField,
    acyclic_condition,
    build_dag,
    gradient_field,
    gradient_operator_apply,
    manifold_gradient,
)
from .embedding import (  # noqa: E402
    Embedding,
    TwoHopMatrix,
    betweenness,
    choose_gamma,
    embed,
    is_manifold_graph,
    two_hop_matrix,
    vbc,
)
from .errors import GglrError  # noqa: E402
from .gng import (  # noqa: E402
    GnlOperator,
    GradientGraph,
    detect_false_gradients,
    gglr_edge_sum,
    gglr_value,
    gng_apply,
    gradient_graph,
    zero_eigenvectors_1d,
)
from .graphs import (  # noqa: E402
    Graph,
    gershgorin_lower_bound,
    glr,
    laplacian,
    laplacian_apply_x,
    sdglr_weights,
)
from .io import grid_graph, knn_graph, load_graph, make_rng, psnr, save_graph  # noqa: E402
from .restore import (  # noqa: E402
    ObservationMap,
    RestoreProblem,
    RestoreReport,
    restore,
    restore_sdglr,
    separable_grid_restore,
    solve_quadratic,
)
from .sparsela import (  # noqa: E402
    LinearOperator,
    SparseMatrix,
    cg_solve,
    largest_eigenvalue,
    left_pseudo_inverse,
    right_pseudo_inverse_apply,
    smallest_eigenpairs,
)
from .tradeoff import (  # noqa: E402
    SpectralFit,
    fit_spectrum,
    minimize_mu,
    mse_approx,
    mse_exact,
)

__version__ = "0.1.0"
