"""Error taxonomy shared across the package."""


class ValidationError(ValueError):
    """Invalid arguments, configuration, or domain invariant violation."""


class FormatError(ValueError):
    """Malformed file content. Carries the byte offset where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class InfeasibleCutError(RuntimeError):
    """Every s-t cut crosses an INF arc; refinement constraints contradict."""

    def __init__(self, message, seed_ids=()):
        super().__init__(message)
        self.seed_ids = tuple(seed_ids)
