from __future__ import annotations


class BtarError(Exception):
    """Base class for all library errors."""


class ShapeMismatchError(BtarError, ValueError):
    pass


class NotPositiveDefiniteError(BtarError, ValueError):
    pass


class SingularPrecisionError(BtarError):
    """Posterior precision could not be factorized (degenerate ranks or data)."""


class SupportError(BtarError, ValueError):
    pass


class DataFormatError(BtarError, ValueError):
    pass


class ConfigError(BtarError, ValueError):
    pass


class SamplerError(BtarError):
    def __init__(self, message: str, *, sweep: int, block: str):
        super().__init__(f"{message} (sweep={sweep}, block={block})")
        self.sweep = sweep
        self.block = block
