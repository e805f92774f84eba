"""Cognitive diagnosis engine.

Diagnoses learner traits and question parameters from dichotomous response
logs, with an identifiable response-vector architecture, transductive
baselines, evaluation metrics, and reproducible experiment pipelines.
"""

__version__ = "0.1.0"
