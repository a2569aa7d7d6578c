"""Graph-neural recommender for adaptive learning paths, with simulated
students, pre-training on sequential corpora, and baseline policies."""

__version__ = "0.1.0"
