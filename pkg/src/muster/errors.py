"""Exception types shared across the library."""


class MusterError(Exception):
    """Base class for all library errors."""


class ShapeError(MusterError, ValueError):
    """Operands have incompatible or malformed extents."""


class ConfigError(MusterError, ValueError):
    """A configuration value violates its contract."""


class MaskError(MusterError, ValueError):
    """A window mask could not be built or failed an internal consistency check."""


class FullyMaskedRowError(MusterError, ValueError):
    """A softmax row has no finite entry; signals a malformed attention mask."""


class GraphError(MusterError, RuntimeError):
    """Misuse of the reverse-mode tape (e.g. a second backward pass)."""


class TensorFileError(MusterError, ValueError):
    """A tensor file could not be read or written.

    ``code`` is a short machine-readable slug, one per failure mode:
    bad_magic, bad_version, bad_dtype, bad_header, bad_rank, bad_dims,
    truncated, trailing.
    """

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
