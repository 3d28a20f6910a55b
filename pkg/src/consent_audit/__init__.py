"""Detect GDPR consent violations in web forms."""

__version__ = "0.1.0"
