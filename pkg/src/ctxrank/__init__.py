"""Context-wise list reranking: evaluator, generator and two-stage training."""
__version__ = "0.1.0"
