"""Exception hierarchy. Every error carries a short machine-readable ``code``."""


class RoomAugError(Exception):
    code = "error"


class GeometryError(RoomAugError, ValueError):
    code = "geometry"


class DensityError(RoomAugError, ValueError):
    code = "density"


class SceneValidationError(RoomAugError, ValueError):
    code = "scene_invalid"


class CorpusError(RoomAugError):
    code = "corpus"


class FoldError(RoomAugError, ValueError):
    code = "fold"


class UnsatisfiableRuleError(RoomAugError):
    code = "unsatisfiable_rule"

    def __init__(self, rule: str, message: str | None = None):
        self.rule = rule
        super().__init__(message or f"rule {rule!r} could not be satisfied")


class TrainingError(RoomAugError):
    code = "training"


class UntrainedCategoryError(RoomAugError, KeyError):
    code = "untrained_category"

    def __str__(self):
        return str(self.args[0]) if self.args else "untrained category"


class OrientationRuleError(RoomAugError, ValueError):
    code = "orientation_rule_determined"


class ThresholdMismatchError(RoomAugError, ValueError):
    code = "threshold_mismatch"


class ModelFileError(RoomAugError):
    code = "model_file"


class ModelVersionError(ModelFileError):
    code = "model_version"


class ModelChecksumError(ModelFileError):
    code = "model_checksum"


class ModelTruncatedError(ModelFileError):
    code = "model_truncated"


class NoValidCellError(RoomAugError):
    code = "no_valid_cell"


class PlacementStepError(RoomAugError):
    """Raised by iterative placement; keeps the scene built so far. ``step`` counts from 1."""

    code = "placement_step"

    def __init__(self, step: int, category: str, partial_scene, cause: Exception):
        self.step = step
        self.category = category
        self.partial_scene = partial_scene
        self.cause = cause
        super().__init__(f"step {step} ({category}) failed: {cause}")
