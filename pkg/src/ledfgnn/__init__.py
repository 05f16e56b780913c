"""Graph learning with layer-fused embeddings over dual topologies."""

from .datasets import (
    DatasetFormatError,
    DatasetStats,
    HyperPreset,
    dataset_stats,
    known_datasets,
    load_dataset,
    make_stratified_split,
    normalize_dataset_name,
    preset,
    save_dataset,
    sbm_preset,
)
from .graph import (
    Graph,
    NormAdj,
    SbmSpec,
    edge_homophily,
    is_connected,
    make_graph,
    normalize,
    propagate,
    rank1_distance,
    sbm_generate,
)
from .model import (
    FULL_VARIANT,
    BackboneConfig,
    BackboneOnly,
    DtpsHead,
    ForwardResult,
    LedfGnn,
    LedfHead,
    ModelVariant,
    backbone_forward,
    channel_attention,
    dtps_fuse,
    export_layer_attention,
    ledf_fuse,
    ledf_widths,
    load_model,
    save_model,
    stack_layers,
)
from .reports import Figure, ReportBundle, Table, write_bundle
from .rewire import (
    BitFeatureMatrix,
    RewireResult,
    cosine_pair,
    cosine_scores,
    discretize,
    lsc_pair,
    lsc_scores,
    reconstruct,
    rewire,
    rewire_benchmark,
    topk_select,
)
from .training import (
    SeedSummary,
    SweepCurve,
    TrainRun,
    config_hash,
    evaluate,
    multi_seed,
    oversmoothing_sweep,
    train,
    train_seeds,
    write_run_log,
)

__version__ = "0.1.0"

__all__ = [
    "BackboneConfig",
    "BackboneOnly",
    "BitFeatureMatrix",
    "DatasetFormatError",
    "DatasetStats",
    "DtpsHead",
    "FULL_VARIANT",
    "Figure",
    "ForwardResult",
    "Graph",
    "HyperPreset",
    "LedfGnn",
    "LedfHead",
    "ModelVariant",
    "NormAdj",
    "ReportBundle",
    "RewireResult",
    "SbmSpec",
    "SeedSummary",
    "SweepCurve",
    "Table",
    "TrainRun",
    "backbone_forward",
    "channel_attention",
    "config_hash",
    "cosine_pair",
    "cosine_scores",
    "dataset_stats",
    "discretize",
    "dtps_fuse",
    "edge_homophily",
    "evaluate",
    "export_layer_attention",
    "is_connected",
    "known_datasets",
    "ledf_fuse",
    "ledf_widths",
    "load_dataset",
    "load_model",
    "lsc_pair",
    "lsc_scores",
    "make_graph",
    "make_stratified_split",
    "multi_seed",
    "normalize",
    "normalize_dataset_name",
    "oversmoothing_sweep",
    "preset",
    "propagate",
    "rank1_distance",
    "reconstruct",
    "rewire",
    "rewire_benchmark",
    "save_dataset",
    "save_model",
    "sbm_generate",
    "sbm_preset",
    "stack_layers",
    "topk_select",
    "train",
    "train_seeds",
    "write_bundle",
    "write_run_log",
]
