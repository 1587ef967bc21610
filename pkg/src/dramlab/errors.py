"""Exception types shared across the laboratory.

Plain argument mistakes raise ValueError at the call site; the classes here
cover domain conditions that callers are expected to branch on (and that the
command-line front end maps to distinct exit codes).
"""


class DramLabError(Exception):
    """Base class for laboratory-specific errors."""


class ConfigError(DramLabError):
    """An experiment configuration is malformed or inconsistent."""


class UnsupportedMechanismError(DramLabError):
    """A mitigation mechanism cannot operate at the requested parameters."""


class TemperatureRangeError(DramLabError, ValueError):
    """Requested temperature falls outside the calibrated model range."""


class EdgeRowError(DramLabError, ValueError):
    """A row at the edge of a bank has no aggressor pair."""


class RngUnavailableError(DramLabError):
    """Bit generation was requested from an empty RNG cell map."""


class TraceParseError(DramLabError):
    """A trace file line could not be parsed.

    Carries the 1-based line number so callers can point at the bad line.
    """

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ProfileIOError(DramLabError):
    """Base class for persisted-profile problems."""


class ProfileVersionError(ProfileIOError):
    """The profile file declares a format version we do not understand."""


class ProfileCorruptionError(ProfileIOError):
    """The profile file failed its checksum or is structurally broken."""


class GeometryMismatchError(ProfileIOError):
    """A profile was recorded against a different chip geometry."""
