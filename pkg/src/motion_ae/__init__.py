"""Online stacked sparse LSTM auto-encoder for object-level video summarization."""

__version__ = "0.1.0"
