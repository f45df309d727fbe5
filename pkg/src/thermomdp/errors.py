"""Exception hierarchy shared by all pipeline stages."""

from __future__ import annotations


class ThermoMdpError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(ThermoMdpError, ValueError):
    """An array has the wrong shape. ``field`` names the offending input."""

    def __init__(self, field: str, expected, got):
        self.field = field
        self.expected = expected
        self.got = got
        super().__init__(f"{field}: expected shape {expected}, got {got}")


class ParameterError(ThermoMdpError, ValueError):
    pass


class SchemaError(ThermoMdpError, ValueError):
    """A data file failed validation. ``line`` is 1-based when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
            if line is not None:
                where += f"{line}:"
            where += " "
        super().__init__(where + message)


class AssemblyError(ThermoMdpError, ValueError):
    """LP assembly failed; ``family`` identifies the equation family."""

    def __init__(self, family: str, message: str):
        self.family = family
        super().__init__(f"[{family}] {message}")


class LpError(ThermoMdpError, RuntimeError):
    pass


class InfeasibleWindowError(ThermoMdpError, RuntimeError):
    """Even the relaxed window LP has no solution."""

    def __init__(self, step: int, bound: str, message: str = ""):
        self.step = step
        self.bound = bound
        super().__init__(f"infeasible at step {step} ({bound}) {message}".rstrip())


class ProfileError(ThermoMdpError, RuntimeError):
    def __init__(self, seed: int, cause: BaseException):
        self.seed = seed
        self.cause = cause
        super().__init__(f"profile seed {seed}: {cause}")


class MdpError(ThermoMdpError, ValueError):
    pass
