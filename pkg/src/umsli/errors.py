"""Exception hierarchy shared by every UMSLI module.

Each error carries the CLI exit status it maps to, so command handlers can
turn any ``UmsliError`` into ``[ERR] ...`` plus a return code.
"""

from __future__ import annotations


class UmsliError(Exception):
    returncode = 2


class InvalidParam(UmsliError, ValueError):
    pass


class ConfigError(UmsliError):
    pass


class FormatError(UmsliError):
    def __init__(self, message: str, offset: int | None = None) -> None:
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class RegionOutOfBounds(UmsliError):
    pass


class InvalidBox(UmsliError, ValueError):
    pass


class SeTooLarge(UmsliError):
    pass


class MaskTooLarge(UmsliError):
    pass


class DimMismatch(UmsliError):
    pass


class EmptyGroundTruth(UmsliError):
    pass


class MissingPair(UmsliError):
    pass


class EmptyCorpus(UmsliError):
    pass


class EmptyMask(UmsliError):
    pass


class DegenerateBoundary(UmsliError):
    pass


class SingularFit(UmsliError):
    pass


class NoSupport(UmsliError):
    pass


class InvalidDiscount(UmsliError, ValueError):
    pass


class EmptyModel(UmsliError):
    pass


class EmptySelection(UmsliError):
    pass
