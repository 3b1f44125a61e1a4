from __future__ import annotations

from pathlib import Path
from typing import Optional, Union


class SymparseError(Exception):
    """
    Base error. ``category`` is the machine-readable tag printed by the CLI.
    """

    category = "error"

    def __init__(self, message: str) -> None:
        super().__init__(message)
        self.message = message


class ImageTooSmallError(SymparseError):
    category = "image_too_small"


class FilterShapeError(SymparseError):
    category = "shape_mismatch"


class InsufficientSamplesError(SymparseError):
    category = "insufficient_samples"


class DegenerateSymbolSetError(SymparseError):
    category = "degenerate_symbol_set"


class NonConcaveDeformationError(SymparseError):
    category = "non_concave_deformation"


class InfeasibleConfigurationError(SymparseError):
    category = "infeasible_configuration"


class InfeasibleModelError(SymparseError):
    category = "infeasible_model"


class UnknownSymbolError(SymparseError):
    category = "unknown_symbol"


class DisconnectedContextError(SymparseError):
    category = "disconnected_context"


class TreeError(SymparseError):
    category = "invalid_tree"


class SynthError(SymparseError):
    category = "synth"


class TrainingError(SymparseError):
    category = "training"


class ModelFormatError(SymparseError):
    category = "model_format"


class ModelVersionError(ModelFormatError):
    category = "model_version_mismatch"


class DatasetError(SymparseError):
    category = "dataset"

    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        path: Optional[Union[str, Path]] = None,
    ) -> None:
        parts = []
        if path is not None:
            parts.append(str(path))
        if line is not None:
            parts.append(f"line {line}")
        prefix = ":".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.line = line
        self.path = path
