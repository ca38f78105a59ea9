"""Exceptions raised by audits and constructions."""


class AuditError(RuntimeError):
    """A sampled audit of a stated property failed.

    ``report`` carries the module, operation and offending sample or
    translate so callers can write it out.
    """

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = dict(report or {})


class ConstructionError(RuntimeError):
    """A construction could not reach its targets (e.g. mesh, sigma)."""

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = dict(report or {})
