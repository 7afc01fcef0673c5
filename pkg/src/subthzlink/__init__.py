"""Link-level simulation toolkit for sub-THz radio evaluation."""

__version__ = "0.1.0"
