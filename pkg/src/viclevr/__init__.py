"""Toolkit for CLEVR-style Vietnamese VQA datasets: validation, metrics,
synthetic generation with an answer oracle, and a gradient-checked toy
multimodal fusion model."""

__version__ = "0.1.0"
