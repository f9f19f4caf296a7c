# Copyright 2026  The openmod authors
# Apache 2.0

"""Python access to the openmod corpus, training and evaluation routines."""

from ._openmod import (
    OpenmodError,
    cluster_prompt_apply,
    common_word_split,
    count_tunable,
    cross_domain_term_counts,
    default_corpus_config,
    default_stage_config,
    evaluate,
    generate_corpus,
    kmeans,
    load_manifest,
    lr_schedule,
    read_tensor,
    run_stage,
    vocab_iou_at_topk,
    wer,
    word_frequency_table,
    write_tensor,
)

__all__ = [
    "OpenmodError",
    "cluster_prompt_apply",
    "common_word_split",
    "count_tunable",
    "cross_domain_term_counts",
    "default_corpus_config",
    "default_stage_config",
    "evaluate",
    "generate_corpus",
    "kmeans",
    "load_manifest",
    "lr_schedule",
    "read_tensor",
    "run_stage",
    "vocab_iou_at_topk",
    "wer",
    "word_frequency_table",
    "write_tensor",
]
