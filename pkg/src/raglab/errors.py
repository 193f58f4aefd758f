"""Exception types shared across the engine.

Every error raised by raglab derives from :class:`RagLabError` so callers
(server, CLI) can map engine failures onto transport-level error bodies
without catching bare ``Exception``.
"""

from __future__ import annotations


class RagLabError(Exception):
    """Base class for all engine errors."""

    code = "error"


class IngestError(RagLabError):
    """Malformed or unreadable input during corpus/dataset ingestion."""

    code = "ingest_error"


class NotFoundError(RagLabError):
    """A referenced resource (passage, run, chain, session...) does not exist."""

    code = "not_found"


class PersistenceError(RagLabError):
    """Corrupt, truncated, or version-incompatible persisted file."""

    code = "persistence_error"


class VersionError(PersistenceError):
    """Persisted file carries a format version newer than this build reads."""

    code = "version_error"


class BuildError(RagLabError):
    """Invalid input to an index build (empty corpus, bad vectors...)."""

    code = "build_error"


class TemplateError(RagLabError):
    """Template parse or render failure, carrying the offending source span."""

    code = "template_error"

    def __init__(self, message: str, span: tuple[int, int] | None = None,
                 source: str | None = None):
        super().__init__(message)
        self.span = span
        self.source = source

    def __str__(self) -> str:
        base = super().__str__()
        if self.span is not None:
            return f"{base} (at {self.span[0]}..{self.span[1]})"
        return base


class TemplateParseError(TemplateError):
    code = "template_parse_error"


class TemplateRenderError(TemplateError):
    code = "template_render_error"


class ChainError(RagLabError):
    """Invalid chain definition (bad operator fields, forward references...)."""

    code = "chain_error"


class BackendError(RagLabError):
    """A remote embedding/LLM backend returned an error payload."""

    code = "backend_error"


class TransportError(BackendError):
    """The backend could not be reached at all."""

    code = "transport_error"


class ContractError(BackendError):
    """The backend answered but violated its declared contract (e.g. wrong dim)."""

    code = "contract_error"


class ContextOverflowError(RagLabError):
    """Prompt exceeds the model context window even after truncation."""

    code = "context_overflow"


class ImmutableRunError(RagLabError):
    """Attempted write to a finished or failed experiment run."""

    code = "immutable_run"


class DuplicateJobError(RagLabError):
    """An identical evaluation job is already queued or running."""

    code = "duplicate_job"
