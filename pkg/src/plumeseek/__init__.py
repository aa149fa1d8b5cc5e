"""Source localization with an attention-enhanced particle filter."""

__version__ = "0.1.0"
