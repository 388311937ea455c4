"""Debiased prediction inference for possibly misspecified high-dimensional linear and logistic models."""
from importlib import import_module

# names resolve on first access so light entry points skip the solver imports
_EXPORTS = {
    "Dataset": "data_model", "Loading": "data_model", "Seed": "data_model", "SimDesign": "data_model",
    "InferenceConfig": "inference", "InferenceResult": "inference", "infer": "inference",
    "run_pipeline": "inference", "cv_lasso": "penalized", "lasso_fit": "penalized",
    "clime": "precision", "two_stage": "precision", "StudyConfig": "simulation",
    "glm_target_beta": "targets", "run_study": "simulation",
}

__all__ = list(_EXPORTS)


def __getattr__(name):
    if name in _EXPORTS:
        return getattr(import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
