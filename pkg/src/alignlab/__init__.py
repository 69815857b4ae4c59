"""Learning binary classifiers under instance-dependent label noise with a small
set of alignment points (rows whose observed and true labels are both known)."""

__version__ = "0.1.0"
