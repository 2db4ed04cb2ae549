"""Exception types shared across the biliscope package."""


class BiliscopeError(Exception):
    """Base class for all biliscope-specific errors."""


class PgmParseError(BiliscopeError):
    """Malformed netpbm payload; the message names the offending token."""


class UnsupportedFormatError(BiliscopeError):
    """Recognizable but unsupported image format (e.g. ASCII graymap, maxval != 255)."""


class ModelShapeError(BiliscopeError):
    """Inconsistent layer shapes in a convolutional net."""


class WeightFormatError(BiliscopeError):
    """Malformed denoiser weight file or model blob."""


class GeometryError(BiliscopeError):
    """Requested synthetic geometry does not fit inside the image."""


class SeedError(BiliscopeError):
    """Segmentation seed does not fit inside the image."""


class NoRegionError(BiliscopeError):
    """A region-dependent feature was requested on an empty region."""


class DegenerateTextureError(BiliscopeError):
    """No valid pixel pair available to build a co-occurrence matrix."""


class DegenerateDataError(BiliscopeError):
    """Training data unusable for the requested model (e.g. single class)."""


class StratificationError(BiliscopeError):
    """A class is too small for the requested number of folds."""


class UndefinedAucError(BiliscopeError):
    """ROC/AUC requested with only one class present."""


class CorpusQualityError(BiliscopeError):
    """Too many degenerate segmentations to build a usable dataset."""


class StageError(BiliscopeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage


class ConfigError(BiliscopeError):
    """Invalid configuration file or option."""
