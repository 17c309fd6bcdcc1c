"""Trust assessment toolkit for small variational quantum classifiers."""

__version__ = "0.1.0"
