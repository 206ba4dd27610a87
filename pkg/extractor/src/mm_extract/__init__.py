"""mm-extract: offline feature extraction producing cmafuse-format datasets."""

__version__ = "0.1.0"
