"""Graph neural network layers, models and training written directly on numpy."""

from .data import GraphBatch, MLPBatch, SampleSet, pose_target
from .layers import gat_forward, gcn_forward, rgcn_forward
from .model import (Architecture, LayerSpec, Model, PoseEstimate, graph_architecture,
                    mlp_architecture, mse_components, mse_loss, pose_from_output, predict)
from .structure import GraphStructure
from .training import (SearchSpace, TrainConfig, TrainingDiverged, random_search, train)

__all__ = [
    "Architecture", "GraphBatch", "GraphStructure", "LayerSpec", "MLPBatch", "Model",
    "PoseEstimate", "SampleSet", "SearchSpace", "TrainConfig", "TrainingDiverged",
    "gat_forward", "gcn_forward", "graph_architecture", "mlp_architecture", "mse_components",
    "mse_loss", "pose_from_output", "pose_target", "predict", "random_search", "rgcn_forward",
    "train",
]
