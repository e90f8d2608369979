"""Knowledge-graph construction and evaluation for narrative case documents."""

from .coref import DEFAULT_TYPE_ORDER, EntityType
from .corpus import CaseDocument, Chunk, ChunkingConfig, chunk_text, count_tokens, extract_opinion
from .evaluation import (
    DuplicateCluster,
    cluster_duplicates,
    comparison_metrics,
    duplication_metrics,
    noise_metrics,
    partial_ratio,
)
from .extraction import (
    DelimiterSet,
    EntityRecord,
    ExtractionMode,
    ExtractionPromptConfig,
    RelationshipRecord,
    build_extraction_prompt,
    filter_government_entities,
    parse_extraction_output,
)
from .graph_builder import KnowledgeGraph, build_graph, degree_stats, export_tabular, serialize_graphml
from .pipeline import RunConfig, run_eval, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "CaseDocument",
    "Chunk",
    "ChunkingConfig",
    "DEFAULT_TYPE_ORDER",
    "DelimiterSet",
    "DuplicateCluster",
    "EntityRecord",
    "EntityType",
    "ExtractionMode",
    "ExtractionPromptConfig",
    "KnowledgeGraph",
    "RelationshipRecord",
    "RunConfig",
    "build_extraction_prompt",
    "build_graph",
    "chunk_text",
    "cluster_duplicates",
    "comparison_metrics",
    "count_tokens",
    "degree_stats",
    "duplication_metrics",
    "export_tabular",
    "extract_opinion",
    "filter_government_entities",
    "noise_metrics",
    "parse_extraction_output",
    "partial_ratio",
    "run_eval",
    "run_pipeline",
    "serialize_graphml",
]
