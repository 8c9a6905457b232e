"""Partition maps for VVC inter CTUs: tree/map conversion, map-tree
post-processing, RDO gating simulation, adaptive warping and metrics."""

from .partition import (
    CTU_GEOMETRY,
    CTU_SIZE,
    DEFAULT_RULES,
    CuGeometry,
    FramePartition,
    InconsistentMapError,
    PartitionMap,
    PartitionRules,
    SplitMode,
    SplitTree,
    check_tree,
    derive_mtt_mask,
    enumerate_trees,
    layer_accuracy,
    legal_splits,
    map_to_tree_exact,
    prune_map,
    random_tree,
    tree_to_map,
    validate_map,
)
from .post import (
    PostConfig,
    SearchBudgetExceeded,
    brute_force_best_tree,
    generate_map_tree,
    reconstruct,
    select_best_path,
    tree_error,
)
from .gating import (
    CtuClass,
    CtuPrediction,
    GatingConfig,
    GatingReport,
    classify_ctu,
    full_search_nodes,
    gate_node,
    simulate_frame,
)
from .pwarp import FlowField, adaptive_flow, pool_flow, pwarp_residual, warp
from .metrics import bd_rate, delta_metrics, eta, ets, overhead_rho, robust_mean_time, t_quantile

__version__ = "0.1.0"
