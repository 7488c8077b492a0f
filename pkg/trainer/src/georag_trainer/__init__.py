"""Training and serving for the dimension classifier and relevance evaluator."""

__version__ = "0.1.0"
