"""Gaussian word embeddings: words as densities, not points.

Each word type maps to a Gaussian (mean vector plus spherical or diagonal
covariance) trained with a max-margin ranking loss over either the log
expected likelihood inner product or a directional KL-divergence energy.
"""

__version__ = "0.1.0"

from .corpus import (
    NegativeSampler,
    SubsampleConfig,
    TrainingTriple,
    Vocabulary,
    WindowConfig,
    build_vocab,
    extract_pairs,
    sample_negative,
    subsample_keep,
)
from .gaussian import (
    DIAGONAL,
    SPHERICAL,
    DotProductMoments,
    EnergyGradient,
    Gaussian,
    cosine_of_distributions,
    cosine_of_means,
    dot_product_moments,
    dot_product_range,
    grad_kl,
    grad_log_el,
    kl_energy,
    log_el_energy,
)
from .hierarchy import (
    HierTrainConfig,
    TreeSpec,
    ancestor_pairs,
    containment_report,
    embed_tree,
)
from .optim import (
    AdaGradState,
    ConstraintConfig,
    MarginLossConfig,
    adagrad_step,
    margin_loss,
    project_covariance,
    project_mean,
)
from .table import EmbeddingTable, init_table, load_model, save_model
from .train import TrainConfig, empirical_covariance, hinge_satisfaction, train
from .evaluate import (
    EntailmentRecord,
    ScoredRecord,
    SimilarityRecord,
    average_precision,
    best_f1,
    entailment_scores,
    neighbors,
    spearman,
)
