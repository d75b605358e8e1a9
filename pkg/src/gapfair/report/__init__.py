"""Report rendering and replay of published per-class tables."""

from .formats import (
    FORMATS,
    comparison_markdown,
    emit,
    emit_all,
    from_csv,
    from_document,
    load_document,
    render,
    headline_markdown,
    to_csv,
    to_document,
)
from .replay import (
    PublishedRow,
    PublishedTable,
    ReplayResult,
    VerdictDiff,
    load_fixture,
    replay_published_table,
    shipped_fixture,
    shipped_fixture_path,
)
from .svg import change_bars

__all__ = [
    "FORMATS",
    "PublishedRow",
    "PublishedTable",
    "ReplayResult",
    "VerdictDiff",
    "change_bars",
    "comparison_markdown",
    "emit",
    "emit_all",
    "from_csv",
    "from_document",
    "load_document",
    "load_fixture",
    "render",
    "replay_published_table",
    "shipped_fixture",
    "shipped_fixture_path",
    "headline_markdown",
    "to_csv",
    "to_document",
]
