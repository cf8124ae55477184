"""Neural perplexity scorer served over newline-delimited JSON."""

from .server import handle_line, serve_stream

__version__ = "0.1.0"

__all__ = ["CausalLmScorer", "ScorerError", "handle_line", "serve_stream"]


def __getattr__(name):
    # session pulls in torch and transformers; load it only when asked.
    if name in ("CausalLmScorer", "ScorerError"):
        from . import session
        return getattr(session, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
