"""Rank off-topic, near-duplicate and label-error samples from embeddings."""

from ._core import (
    AuditError,
    __version__,
    auroc,
    average_precision,
    default_recall_grid,
    effort_summary,
    flip_label,
    foe_curve,
    gen_synthetic_embeddings,
    load_embeddings,
    rank_label_errors,
    rank_near_duplicates,
    rank_off_topic,
    select_targets,
    write_embeddings,
)

__all__ = [
    "AuditError",
    "auroc",
    "average_precision",
    "default_recall_grid",
    "effort_summary",
    "flip_label",
    "foe_curve",
    "gen_synthetic_embeddings",
    "load_embeddings",
    "rank_label_errors",
    "rank_near_duplicates",
    "rank_off_topic",
    "select_targets",
    "write_embeddings",
]
