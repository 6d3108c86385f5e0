"""Contextual scene augmentation: scene-graph features, KDE priors and pose heat maps."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .augment import HeatMap, PlacementRecommendation, SamplingSpec, orientation_scores, place, place_iterative, position_heatmap
from .dataset import kfold, load_corpus, load_scene, save_scene, write_corpus
from .errors import RoomAugError
from .geometry import OrientedBox, RoomShell, Thresholds
from .knowledge_model import FeatureSelection, KnowledgeModel, likelihood_orientation, likelihood_position, load, save, train
from .scene_graph import Category, Scene, SceneGraph, SceneObject, extract_features
from .synth import SynthConfig, synthesize

__all__ = [
    "BACKEND",
    "Category",
    "FeatureSelection",
    "HeatMap",
    "KnowledgeModel",
    "OrientedBox",
    "PlacementRecommendation",
    "RoomAugError",
    "RoomShell",
    "SamplingSpec",
    "Scene",
    "SceneGraph",
    "SceneObject",
    "SynthConfig",
    "Thresholds",
    "extract_features",
    "kfold",
    "likelihood_orientation",
    "likelihood_position",
    "load",
    "load_corpus",
    "load_scene",
    "orientation_scores",
    "place",
    "place_iterative",
    "position_heatmap",
    "save",
    "save_scene",
    "synthesize",
    "train",
    "write_corpus",
]
