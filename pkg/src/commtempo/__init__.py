"""Joint model of communities, topics and their per-community time dynamics
over social text with directed links, fit by collapsed Gibbs sampling."""

from .corpus import (
    Corpus,
    CorpusFormatError,
    IngestStats,
    LinkSet,
    Post,
    Vocabulary,
    build_corpus,
    discretize_time,
    ingest_links,
    ingest_posts,
)
from .model import (
    CorpusArrays,
    CountTables,
    Hyperparameters,
    LatentState,
    ModelEstimates,
    build_count_tables,
    complete_log_likelihood,
    compute_lambda0,
    estimate_parameters,
    init_state,
    load_checkpoint,
    negative_link_count,
    save_checkpoint,
)
from .sampler import (
    TrainResult,
    gibbs_iteration,
    run_sweep,
    sample_link_communities,
    sample_post_community,
    sample_post_topic,
    sample_word_foreground,
    train,
)
from .synthetic import (
    GroundTruth,
    RecoveryReport,
    SyntheticConfig,
    community_link_prob,
    discretized_gaussian,
    evaluate_recovery,
    generate_corpus,
    generate_ground_truth,
)
from .evaluation import (
    auc,
    auc_null_sigma,
    link_probability,
    perplexity,
    predict_timestamp,
    split_corpus,
    time_accuracy_curve,
    time_prediction_accuracy,
)
from .analysis import (
    community_topic_over_time,
    detect_peaks,
    global_topic_dynamics,
    top_words,
    user_contribution,
)

__version__ = "0.1.0"
