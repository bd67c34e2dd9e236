"""Multi-modal interest-aware sequential recommendation engine."""

__version__ = "0.1.0"
