"""Query Agent package."""

__all__: list[str] = []
