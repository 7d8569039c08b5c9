"""Linguistic probing of layer-wise sentence embeddings and
feature-augmented utterance classification for dementia-detection
experiments."""

__version__ = "0.1.0"
