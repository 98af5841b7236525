"""Analysis and forecasting of monthly global agricultural commodity price changes.

The pipeline runs in four stages: data assembly (deflation, relative annual
changes, trade-year alignment), retrospective screening (LOOCV across model
families and predictor datasets), rolling cross-validated forecasting, and
model-agnostic explanation (Shapley attributions, permutation importance,
partial dependence, surrogates). Import the stage modules directly:
``agricaf.transform``, ``agricaf.stats``, ``agricaf.model_zoo``,
``agricaf.screening``, ``agricaf.forecasting``, ``agricaf.explain``.
"""

__version__ = "0.1.0"
