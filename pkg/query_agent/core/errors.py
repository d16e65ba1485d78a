"""Exception hierarchy shared by every Query Agent service."""

from __future__ import annotations

from typing import Sequence


class QueryAgentError(RuntimeError):
    """Base class for all domain failures."""


class ConfigError(QueryAgentError):
    """Raised when a config file or flag combination is invalid."""


class CorpusError(QueryAgentError):
    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"corpus root {path}: {reason}")


class StructuredParseError(QueryAgentError):
    """Raised when a CSV/JSON document cannot become a table."""

    def __init__(
        self,
        path: str,
        reason: str,
        *,
        line: int | None = None,
        offset: int | None = None,
        rows: Sequence[int] = (),
    ):
        self.path = path
        self.reason = reason
        self.line = line
        self.offset = offset
        self.rows = tuple(rows)
        location = []
        if line is not None:
            location.append(f"line {line}")
        if offset is not None:
            location.append(f"byte offset {offset}")
        if self.rows:
            location.append("rows " + ", ".join(str(row) for row in self.rows))
        suffix = f" ({'; '.join(location)})" if location else ""
        super().__init__(f"{path}: {reason}{suffix}")


class GraphBuildError(QueryAgentError):
    def __init__(self, offenders: Sequence[str]):
        self.offenders = tuple(offenders)
        super().__init__("graph build failed: " + "; ".join(self.offenders))


class GraphLoadError(QueryAgentError):
    def __init__(self, path: str, problems: Sequence[str]):
        self.path = path
        self.problems = tuple(problems)
        super().__init__(f"cannot load graph {path}: " + "; ".join(self.problems))


class GraphVersionError(GraphLoadError):
    def __init__(self, path: str, found: object, expected: object):
        self.found = found
        self.expected = expected
        super().__init__(path, [f"version mismatch: found {found!r}, expected {expected!r}"])


class AnchorNotFoundError(QueryAgentError):
    def __init__(self, node_id: str):
        self.node_id = node_id
        super().__init__(f"anchor {node_id} is not a node of the graph")


class PromptTemplateError(QueryAgentError):
    def __init__(self, template_id: str, missing: Sequence[str]):
        self.template_id = template_id
        self.missing = tuple(missing)
        super().__init__(f"template {template_id} has unbound placeholders: {', '.join(self.missing)}")


class BackendError(QueryAgentError):
    """Raised when the model backend cannot produce an output."""


class BackendConfigError(BackendError):
    pass


class BackendUnavailableError(BackendError):
    def __init__(self, message: str, *, attempts: int):
        self.attempts = attempts
        super().__init__(f"{message} (after {attempts} attempts)")


class BackendStatusError(BackendError):
    def __init__(self, status: int, message: str = ""):
        self.status = status
        detail = f": {message}" if message else ""
        super().__init__(f"backend returned HTTP {status}{detail}")


class PlanSyntaxError(QueryAgentError):
    def __init__(self, message: str, *, position: int):
        self.position = position
        super().__init__(f"{message} at position {position}")


class PlanSynthesisError(QueryAgentError):
    def __init__(self, message: str, raw_outputs: Sequence[str]):
        self.raw_outputs = tuple(raw_outputs)
        super().__init__(message)


class PlanValidationError(QueryAgentError):
    def __init__(self, violations: Sequence[str]):
        self.violations = tuple(violations)
        super().__init__("plan failed validation: " + "; ".join(self.violations))


class UsageError(QueryAgentError):
    """Raised for command-line misuse (exit code 64)."""
