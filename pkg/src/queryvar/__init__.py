"""Generate query variations and measure how retrieval pipelines cope with them."""

from .core import Category, MethodId, Query, Validity, Variation, derive_rng, tokenize
from .evaluation import Metric, Qrels, ndcg_at_k, paired_t_test, recall_at_k
from .fusion import FusionConfig, best_query_oracle, fuse_experiment, rrf_fuse
from .generators import generate_all
from .retrieval import Document, RunList, build_index, retrieve_top_k, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "Category", "MethodId", "Query", "Validity", "Variation", "derive_rng", "tokenize",
    "Metric", "Qrels", "ndcg_at_k", "paired_t_test", "recall_at_k",
    "FusionConfig", "best_query_oracle", "fuse_experiment", "rrf_fuse",
    "generate_all", "Document", "RunList", "build_index", "retrieve_top_k", "run_pipeline",
]
