"""Phase-evolving, ontology-based, context-aware tourism recommender engine."""

__version__ = "0.1.0"
