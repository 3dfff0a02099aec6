# mcvd/exceptions.py

from typing import Any, List, Optional


class MCvDError(Exception):
    """Base error. `exit_code` is what the CLI exits with when this escapes a command."""

    exit_code: int = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class DomainError(MCvDError, ValueError):
    exit_code = 2


class ConfigError(MCvDError):
    exit_code = 2

    def __init__(self, detail: str, violations: Optional[List[str]] = None):
        super().__init__(detail)
        self.violations = violations or []


class ConvergenceError(MCvDError):
    exit_code = 3

    def __init__(self, detail: str, partial: Any = None):
        super().__init__(detail)
        self.partial = partial


class ArtifactError(MCvDError):
    exit_code = 4
