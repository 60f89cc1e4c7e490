"""Exception types shared across the package.

Each error carries a short machine-readable ``code`` so the CLI and the
HTTP service can map failures to stable identifiers.
"""


class TextsrError(Exception):
    code = "error"


class ConfigurationError(TextsrError):
    code = "configuration"


class ShapeError(TextsrError):
    code = "shape"


class EmptyCaptionError(TextsrError):
    code = "empty_caption"


class EmptyBatchError(TextsrError):
    code = "empty_batch"


class TrainingError(TextsrError):
    code = "training"


class CheckpointError(TextsrError):
    code = "checkpoint"


class ProbeDefinitionError(TextsrError):
    code = "probe_definition"
