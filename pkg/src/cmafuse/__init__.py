"""cmafuse: cross-modal attention fusion engine over pre-extracted embeddings."""

__version__ = "0.1.0"
