"""Google matrix analysis of transaction networks: ranks, spectra and wealth statistics."""

__version__ = "0.1.0"
