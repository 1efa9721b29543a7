"""qmix: two-class interference mixture clustering with a GMM baseline."""

__version__ = "0.1.0"
