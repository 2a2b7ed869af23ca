"""Exception hierarchy shared by every module.

``UserError`` subclasses signal bad input or configuration; the CLI maps
them to exit status 2. Anything else is treated as an internal failure.
"""


class XlserError(Exception):
    """Base class for all package errors."""


class UserError(XlserError):
    """Bad input, bad configuration or an infeasible request."""


class DecodeError(UserError):
    """A WAV container could not be parsed."""

    def __init__(self, message, chunk=None):
        self.chunk = chunk
        super().__init__(f"{message} (chunk {chunk!r})" if chunk else message)


class UnsupportedFormatError(UserError):
    """A well-formed WAV file whose encoding is not 16-bit PCM."""


class ConfigError(UserError):
    pass


class MappingError(UserError):
    """Unknown (corpus, emotion) pair or unknown label code."""


class ParseError(UserError):
    """A filename that does not follow its corpus convention."""

    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} at position {position}"
        super().__init__(message)


class ProtocolError(UserError):
    """A request that violates an experimental protocol."""


class InfeasibleSplitError(ProtocolError):
    pass


class SplitVerificationError(XlserError):
    """A split violates one of its invariants."""

    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("; ".join(self.failures))


class ShapeError(UserError):
    """Dimension mismatch between a tensor and a layer or model."""


class LabelError(UserError):
    pass


class CacheError(XlserError):
    """Gradient cache does not belong to the current parameters."""


class CacheMissError(UserError):
    """Feature lookups for clips that were never extracted or are out of scope."""

    def __init__(self, clip_ids, reason="missing features"):
        self.clip_ids = sorted(clip_ids)
        shown = ", ".join(self.clip_ids[:10])
        more = f" (+{len(self.clip_ids) - 10} more)" if len(self.clip_ids) > 10 else ""
        super().__init__(f"{reason}: {shown}{more}")


class CorpusScanError(UserError):
    """One or more files in a corpus directory failed to parse."""

    def __init__(self, failures):
        self.failures = list(failures)
        lines = "\n".join(f"  {path}: {err}" for path, err in self.failures)
        super().__init__(f"{len(self.failures)} file(s) failed to parse:\n{lines}")
