"""Python access to the memadapter C++ core."""

from ._memadapter import (
    DecodeError,
    IoError,
    ParseError,
    ValidationError,
    canonical_evidence,
    canonical_full_graph,
    contains_answer,
    cosine_sim,
    evidence_confidence,
    exact_match,
    fuse_max,
    generate_corpus_jsonl,
    infonce_loss,
    normalize_answer,
    rouge1,
    run_cli,
    token_f1,
    verify_subset,
)

__all__ = [
    "DecodeError",
    "IoError",
    "ParseError",
    "ValidationError",
    "canonical_evidence",
    "canonical_full_graph",
    "contains_answer",
    "cosine_sim",
    "evidence_confidence",
    "exact_match",
    "fuse_max",
    "generate_corpus_jsonl",
    "infonce_loss",
    "normalize_answer",
    "rouge1",
    "run_cli",
    "token_f1",
    "verify_subset",
]
