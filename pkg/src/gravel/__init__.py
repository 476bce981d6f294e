"""gravel: hybrid pair-wise / two-tower graph recommendation with a
reproducible benchmarking pipeline.

The package is organized as small numpy-based modules:

- data: dataset container, benchmark file formats, synthetic generator
- graph: immutable bipartite CSR graph, k-hop neighborhoods, fanout sampling
- autodiff: minimal reverse-mode tape with gradient checking
- models: the hybrid GNN scorer and three simplified baselines
- training: BPR loop with Adam, step cap and validation checkpointing
- evaluation: masked top-K ranking, Recall@K and nDCG@K
- checkpoint: flat binary tensor files ("GRVL")
- config / experiment / cli: YAML-subset experiment configs and the runner
"""

from .autodiff import (
    GradCheckReport,
    ParamTensor,
    Tape,
    affine,
    embedding_lookup,
    grad_check,
    message_pass_layer,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import (
    ConfigError,
    DataConfig,
    ExperimentConfig,
    MetaConfig,
    ModelSpec,
    expand_grid,
    parse_config,
    render_config,
)
from .data import (
    DataError,
    InteractionDataset,
    convert_for_benchmark,
    generate_synthetic,
    read_dataset,
    read_elliot_split,
    write_dataset,
)
from .evaluation import (
    MetricReport,
    RankingResult,
    evaluate,
    ndcg_at_k,
    rank_topk,
    recall_at_k,
)
from .experiment import (
    ExperimentError,
    ResultRow,
    ResultsFile,
    read_results_file,
    report_table,
    run_experiment,
)
from .graph import (
    BipartiteGraph,
    GraphConstructionError,
    Neighborhood,
    SampledSubgraph,
    build_graph,
    dataset_stats,
    khop_neighborhood,
    locality_score,
    sample_subgraph,
    stats_from_counts,
)
from .models import (
    ContextGNN,
    ContextGNNParams,
    ItemCooccurrenceFilter,
    LightGCNScorer,
    MatrixFactorizationBPR,
    ScoreVector,
    fused_scores,
    gnn_forward,
    init_contextgnn_params,
    item_filter_score,
    lightgcn_propagate,
    mf_bpr_score,
    pair_score,
    tower_score,
)
from .training import (
    TrainConfig,
    TrainingLog,
    TrainResult,
    adam_step,
    bpr_loss,
    init_adam_state,
    make_model,
    sample_negatives,
    train,
)

__version__ = "0.1.0"
