"""Cluster event sequences with per-sequence hidden Markov models.

The pipeline fits one discrete HMM to every sequence, measures pairwise
dissimilarity through cross log-likelihoods, embeds the resulting
similarity graph spectrally, and clusters the embedding with K-means.
"""

from .cohort import (
    BatchSpec,
    Cohort,
    CohortSpec,
    default_cohort_spec,
    default_generators,
    load_cohort,
    synthesize_cohort,
    write_cohort,
)
from .distance import (
    DistanceSet,
    build_distance_set,
    cross_loglik_matrix,
    normalize_by_length,
    similarity_kernel,
    symmetric_distance,
)
from .errors import (
    DataError,
    DegenerateGraphError,
    NumericalError,
    ParameterError,
    TrajclustError,
)
from .evaluate import (
    LabelAgreement,
    adjusted_rand_index,
    evaluate_against_labels,
    purity,
)
from .exports import (
    export_results,
    read_coordinates_csv,
    read_labels_csv,
    read_matrix_csv,
)
from .hmm import (
    DiscreteHmm,
    FitReport,
    ObservationSequence,
    baum_welch_fit,
    forward_log_likelihood,
    forward_log_likelihood_many,
    posterior_marginals,
    sample_sequence,
    uninformative_init,
)
from .cli import PipelineConfig, run_pipeline
from .spectral import (
    ClusterResult,
    SpectralEmbedding,
    degree_vector,
    eigendecompose,
    eigengaps,
    embed,
    kmeans,
    normalized_affinity,
)

__version__ = "0.1.0"

__all__ = [
    "BatchSpec",
    "Cohort",
    "CohortSpec",
    "ClusterResult",
    "DataError",
    "DegenerateGraphError",
    "DiscreteHmm",
    "DistanceSet",
    "FitReport",
    "LabelAgreement",
    "NumericalError",
    "ObservationSequence",
    "ParameterError",
    "PipelineConfig",
    "SpectralEmbedding",
    "TrajclustError",
    "adjusted_rand_index",
    "baum_welch_fit",
    "build_distance_set",
    "cross_loglik_matrix",
    "default_cohort_spec",
    "default_generators",
    "degree_vector",
    "eigendecompose",
    "eigengaps",
    "embed",
    "evaluate_against_labels",
    "export_results",
    "forward_log_likelihood",
    "forward_log_likelihood_many",
    "kmeans",
    "load_cohort",
    "normalize_by_length",
    "normalized_affinity",
    "posterior_marginals",
    "purity",
    "read_coordinates_csv",
    "read_labels_csv",
    "read_matrix_csv",
    "run_pipeline",
    "sample_sequence",
    "similarity_kernel",
    "symmetric_distance",
    "synthesize_cohort",
    "uninformative_init",
    "write_cohort",
]
