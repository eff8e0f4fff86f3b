"""Command-line front end for nmpzero."""

from .main import build_parser, main

__all__ = ["build_parser", "main"]
