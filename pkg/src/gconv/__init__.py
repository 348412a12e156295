"""Grammar convergence: normalize, match and transform grammars of one language."""

__version__ = "0.1.0"
