"""Exception types shared across the package."""


class LayoutError(ValueError):
    """A vector, mask, or batch does not match the declared network layout."""


class ConfigError(ValueError):
    """An option or parameter is outside its valid range."""


class ProtocolError(RuntimeError):
    """An uplink payload does not match what the server expects."""


class DecodeError(ValueError):
    """A serialized artifact is malformed.

    Attributes:
        offset: byte offset at which decoding failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class RoundAbortError(RuntimeError):
    """A federation round produced a non-finite loss and was aborted.

    Carries whatever per-round metrics were completed before the abort so
    callers can flush partial telemetry.
    """

    def __init__(self, message: str, round_index: int, metrics=None):
        super().__init__(message)
        self.round_index = round_index
        self.metrics = metrics if metrics is not None else []
