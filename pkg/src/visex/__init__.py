"""Visual-sentence extraction and zero-shot embedding alignment toolkit."""

__version__ = "0.1.0"
