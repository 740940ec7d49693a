"""Non-classicality tests from quadrature data: polynomial witnesses and filtered back-projection."""

__version__ = "0.1.0"
