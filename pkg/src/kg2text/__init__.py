"""Knowledge-graph-to-text generation with graph attention encoders and a copy decoder."""

from .config import RunConfig
from .generator import beam_search, bleu, postprocess
from .graph import KnowledgeGraph, SciAnnotation, collapse_coref, prepare_graph
from .model import GraphWriter, ModelConfig
from .trainer import TrainConfig, train

__all__ = [
    "GraphWriter", "KnowledgeGraph", "ModelConfig", "RunConfig", "SciAnnotation", "TrainConfig",
    "beam_search", "bleu", "collapse_coref", "postprocess", "prepare_graph", "train",
]
__version__ = "0.1.0"
