"""Query Agent service package."""

__all__: list[str] = []
