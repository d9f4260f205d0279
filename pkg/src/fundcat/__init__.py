"""Fund categorization from holdings data: ingest, preprocessing, trees, forests, a feed-forward network and metrics."""

__version__ = "0.1.0"
