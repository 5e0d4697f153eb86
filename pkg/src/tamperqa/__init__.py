"""Synthetic copy-move / blur tampering datasets with question-answer triples."""

__version__ = "0.1.0"
