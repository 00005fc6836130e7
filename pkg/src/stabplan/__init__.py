"""Coordinated planning of synchronous condensers and grid-forming storage
under short-circuit current and grid-strength constraints."""

__version__ = "0.1.0"
