"""
Human pose parsing with learned visual symbols.

Exports the model, inference, learning and data helpers used by the command
entrypoints in ``symparse.cli`` and under ``scripts/``.
"""

from .dataset import DatasetManifest, load_dataset, load_image_dir
from .errors import SymparseError
from .evaluation import PcpReport, evaluate, pcp_correct
from .features import FeatureMap, extract_features
from .inference import detect_all, parse
from .learning import TrainingExample, train
from .model import ModelParams, ParseResult, SymbolId, score_decomposition
from .persistence import load_model, save_model
from .pipeline import PipelineResult, parse_entries, train_pipeline
from .settings import Settings, get_settings
from .skeleton import Annotation, SkeletonTree, default_tree
from .synth import SynthConfig, generate_synthetic, write_synthetic

__all__ = [
    "DatasetManifest",
    "load_dataset",
    "load_image_dir",
    "SymparseError",
    "PcpReport",
    "evaluate",
    "pcp_correct",
    "FeatureMap",
    "extract_features",
    "detect_all",
    "parse",
    "TrainingExample",
    "train",
    "ModelParams",
    "ParseResult",
    "SymbolId",
    "score_decomposition",
    "load_model",
    "save_model",
    "PipelineResult",
    "parse_entries",
    "train_pipeline",
    "Settings",
    "get_settings",
    "Annotation",
    "SkeletonTree",
    "default_tree",
    "SynthConfig",
    "generate_synthetic",
    "write_synthetic",
]
