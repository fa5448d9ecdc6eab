"""Exception types shared across the package."""


class SplatQuantError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(SplatQuantError, ValueError):
    """An argument violates a documented precondition."""


class ConfigError(SplatQuantError, ValueError):
    """A configuration value is out of its legal range or inconsistent."""


class FormatError(SplatQuantError):
    """Base class for scene-container and codec format errors."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersionError(FormatError):
    """File declares a format version this build cannot read."""


class ChecksumError(FormatError):
    """A CRC32 check failed; the named section is corrupt."""

    def __init__(self, section: str):
        super().__init__(f"CRC mismatch in section '{section}'")
        self.section = section


class TruncatedFileError(FormatError):
    """File ends before a declared section is complete."""


class PlyParseError(SplatQuantError):
    """PLY header or payload could not be parsed; carries a location hint."""

    def __init__(self, message: str, line: int | None = None, offset: int | None = None):
        loc = ""
        if line is not None:
            loc = f" (header line {line})"
        elif offset is not None:
            loc = f" (byte offset {offset})"
        super().__init__(message + loc)
        self.line = line
        self.offset = offset
