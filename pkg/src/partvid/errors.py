"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid or missing configuration (bad file, unknown key, bad value)."""


class DatasetError(Exception):
    """A dataset on disk violates the expected layout or contents."""


class NumericsError(RuntimeError):
    """Training produced a non-finite loss; carries the offending batch ids."""

    def __init__(self, message: str, batch_ids=None):
        super().__init__(message)
        self.batch_ids = list(batch_ids) if batch_ids else []
