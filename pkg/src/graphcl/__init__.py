"""Self-supervised contrastive node representation learning.

Pipeline: two stochastic graph views -> shared GCN/MLP encoder ->
postprocessing (identity, column standardization, ZCA whitening, or an
MLP head) -> unit-sphere projection -> subsampled NT-Xent loss. Frozen
embeddings are scored with a linear probe, alignment/uniformity, and
clustering indices.
"""

from .augment import AugmentConfig, ViewPair, drop_edges, make_views, mask_features
from .evaluation import (
    MetricsReport,
    ProbeConfig,
    alignment,
    calinski_harabasz,
    davies_bouldin,
    linear_probe,
    silhouette,
    uniformity,
)
from .graph import (
    GraphBundle,
    generate_sbm,
    load_bundle,
    normalize_adjacency,
    perturb_edges,
    save_bundle,
    validate_bundle,
)
from .model import (
    EncoderConfig,
    ModelParams,
    PostprocessorKind,
    embed_full,
    encode,
    forward_embeddings,
    init_params,
    postprocess,
    project_sphere,
)
from .objective import Adam, TrainConfig, cca_ssg_loss, nt_xent, train

__all__ = [
    "AugmentConfig", "ViewPair", "drop_edges", "make_views", "mask_features",
    "MetricsReport", "ProbeConfig", "alignment", "calinski_harabasz",
    "davies_bouldin", "linear_probe", "silhouette", "uniformity",
    "GraphBundle", "generate_sbm", "load_bundle", "normalize_adjacency",
    "perturb_edges", "save_bundle", "validate_bundle",
    "EncoderConfig", "ModelParams", "PostprocessorKind", "embed_full",
    "encode", "forward_embeddings", "init_params", "postprocess",
    "project_sphere",
    "Adam", "TrainConfig", "cca_ssg_loss", "nt_xent", "train",
]

__version__ = "0.1.0"
