"""Hierarchical graph reasoning for video-text retrieval on a small numpy autodiff engine."""

from .graph import SemanticRoleGraph, build_graph, rule_parse
from .model import HGRModel, ModelConfig
from .train import TrainConfig, train

__version__ = "0.1.0"

__all__ = ["HGRModel", "ModelConfig", "SemanticRoleGraph", "TrainConfig", "build_graph", "rule_parse", "train",
           "__version__"]
