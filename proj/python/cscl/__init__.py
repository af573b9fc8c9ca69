"""Curriculum contrastive EEG-to-text pipeline.

Thin package wrapper around the native module; see the function docstrings
for the operation-level API, or use run_cli() for the full command surface.
"""

from ._cscl import (
    Corpus,
    CurriculumIndex,
    PreEncoder,
    Seq2Seq,
    apply_zscore,
    audit,
    build_curriculum,
    cluster_report,
    evaluate,
    finetune,
    generate,
    init_pre_encoder,
    pretrain,
    project2d,
    run_cli,
    score_pairs,
    set_log_level,
    split,
    translate,
    zscore,
)

__all__ = [
    "Corpus",
    "CurriculumIndex",
    "PreEncoder",
    "Seq2Seq",
    "apply_zscore",
    "audit",
    "build_curriculum",
    "cluster_report",
    "evaluate",
    "finetune",
    "generate",
    "init_pre_encoder",
    "pretrain",
    "project2d",
    "run_cli",
    "score_pairs",
    "set_log_level",
    "split",
    "translate",
    "zscore",
]
