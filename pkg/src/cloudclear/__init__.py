"""Point-cloud kernel embeddings, occlusion scoring, and a deformable-branch
clearance environment with a PPO trainer."""

__version__ = "0.1.0"

from .clouds import PointCloud
from .embedding import (
    CloudEmbedder,
    Embedding,
    RffBasis,
    embed_cloud,
    exact_mean_inner,
    feature_map,
    feature_maps,
    load_rff_basis,
    mmd2,
    rbf_kernel,
    sample_rff_basis,
    save_rff_basis,
)
from .errors import (
    CheckpointError,
    CloudClearError,
    ConfigError,
    EmptyCloudError,
    ScenarioError,
    SimulationDivergedError,
    StaleObservationError,
)
from .observation import (
    FEATURE_GROUPS,
    GROUP_OFFSETS,
    OBS_DIM,
    EpisodeMetrics,
    EpisodeTracker,
    Observation,
    ObservationBuilder,
    RewardBreakdown,
    clearance_reward,
    group_offsets,
    observe_world,
    safety_reward,
    smoothness_reward,
    total_reward,
)
from .occlusion import (
    NearestPairSet,
    OcclusionParams,
    ee_branch_distances,
    mean_knn_distance,
    nearest_pair_distances,
    occlusion_heuristic,
    safety_breach,
)
from .config import (
    EmbeddingConfig,
    EvalConfig,
    RunConfig,
    config_to_dict,
    load_config,
    save_config_snapshot,
)
from .bench import bench_report, format_bench_table
