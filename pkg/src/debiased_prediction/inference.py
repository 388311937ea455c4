"""Cross-fitted debiased prediction, its variance estimate and Wald intervals.

For a loading ``xi`` the target is ``xi' beta_bar``. With a fold split
(J, Jc), a precision estimate built on each fold is applied to the score of
the *other* fold::

    point = xi'b - xi' M_Jc s_J - xi' M_J s_Jc,   s_F = (1/n) sum_{i in F} x_i phi_1(y_i, x_i'b)

and ``v_hat = (1/n) sum_{i in J} (xi' M_Jc x_i)^2 phi_1^2 + (same over Jc with M_J)``.
Note the 1/n normalisation uses the total sample size in both folds.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .data_model import Dataset, Seed
from .losses import phi1
from .penalized import PenalizedFit, cv_lasso
from .precision import (
    PrecisionEstimate, canonical_method, default_rho, extended_clime_cross_fit,
    extended_two_stage_cross_fit, clime_cross_fit, two_stage_cross_fit,
)


class InferenceError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the original error."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        super().__init__(f"{stage}: {cause}")


@dataclass
class FoldSplit:
    J: np.ndarray
    Jc: np.ndarray

    def __post_init__(self):
        self.J = np.asarray(self.J, dtype=int)
        self.Jc = np.asarray(self.Jc, dtype=int)
        if self.J.size == 0 or self.Jc.size == 0:
            raise ValueError("both folds must be nonempty")
        if np.intersect1d(self.J, self.Jc).size:
            raise ValueError("folds overlap")

    @property
    def n(self) -> int:
        return self.J.size + self.Jc.size


@dataclass
class InferenceResult:
    point: float
    plug_in: float
    v_hat: float
    ci_low: float
    ci_high: float
    alpha: float
    n: int
    p: int = 0
    method: str = "clime"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


@dataclass
class InferenceConfig:
    method: str = "clime"
    alpha: float = 0.05
    rho_mult: float = 1.0
    split_ratio: float = 0.5
    cv_folds: int = 10
    grid_size: int = 100
    seed: int = 0
    # "auto" picks the residual form for square loss and the score form otherwise;
    # "glm" forces the score form with fold-wise refits for any family
    pipeline: str = "auto"

    def __post_init__(self):
        self.method = canonical_method(self.method)
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0 < self.split_ratio < 1:
            raise ValueError("split_ratio must lie in (0, 1)")
        if self.rho_mult <= 0:
            raise ValueError("rho_mult must be positive")
        if self.pipeline not in ("auto", "lm", "glm"):
            raise ValueError(f"unknown pipeline {self.pipeline!r}")


@dataclass
class PipelineState:
    """Every intermediate of one :func:`infer` call, for audits and tests."""

    fit: PenalizedFit
    split: FoldSplit
    rho: float
    M_J: PrecisionEstimate
    M_Jc: PrecisionEstimate
    result: InferenceResult
    fold_fits: Optional[tuple] = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def split_indices(n: int, ratio: float = 0.5, seed=0) -> FoldSplit:
    """Random split with ``|J| = floor(ratio * n)``."""
    if n < 4:
        raise ValueError("need at least 4 observations to split")
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    rng = seed if isinstance(seed, np.random.Generator) else Seed(int(seed)).stream("split")
    perm = rng.permutation(n)
    m = int(math.floor(ratio * n))
    return FoldSplit(np.sort(perm[:m]), np.sort(perm[m:]))


def fold_score(dataset: Dataset, fold, beta, total_n: int, family: Optional[str] = None) -> np.ndarray:
    """``(1/total_n) sum_{i in fold} x_i phi_1(y_i, x_i'beta)``; ``family`` defaults to the dataset's."""
    fold = np.asarray(fold, dtype=int)
    if fold.size == 0:
        return np.zeros(dataset.p)
    X = dataset.X[fold]
    return X.T @ phi1(family or dataset.family, dataset.y[fold], X @ beta) / total_n


def _mat(M) -> np.ndarray:
    return M.Omega if isinstance(M, PrecisionEstimate) else np.asarray(M, dtype=float)


def _check_dims(dataset, beta, M_J, M_Jc, xi):
    p = dataset.p
    for name, v in (("beta", beta), ("xi", xi)):
        if v.shape != (p,):
            raise ValueError(f"{name} has shape {v.shape}, expected ({p},)")
    for name, M in (("M_J", M_J), ("M_Jc", M_Jc)):
        if M.shape != (p, p):
            raise ValueError(f"{name} has shape {M.shape}, expected ({p}, {p})")


def debiased_point(dataset: Dataset, split: FoldSplit, beta_hat, M_J, M_Jc, xi,
                   family: Optional[str] = None) -> float:
    beta_hat, xi = np.asarray(beta_hat, float), np.asarray(xi, float)
    M_J, M_Jc = _mat(M_J), _mat(M_Jc)
    _check_dims(dataset, beta_hat, M_J, M_Jc, xi)
    n = dataset.n
    corr = xi @ M_Jc @ fold_score(dataset, split.J, beta_hat, n, family) \
        + xi @ M_J @ fold_score(dataset, split.Jc, beta_hat, n, family)
    return float(xi @ beta_hat - corr)


def variance_estimate(dataset: Dataset, split: FoldSplit, beta_hat, M_J, M_Jc, xi,
                      family: Optional[str] = None) -> float:
    beta_hat, xi = np.asarray(beta_hat, float), np.asarray(xi, float)
    M_J, M_Jc = _mat(M_J), _mat(M_Jc)
    _check_dims(dataset, beta_hat, M_J, M_Jc, xi)
    g = phi1(family or dataset.family, dataset.y, dataset.X @ beta_hat)
    total = 0.0
    for fold, M in ((split.J, M_Jc), (split.Jc, M_J)):
        proj = dataset.X[fold] @ (M @ xi)  # M symmetric, so x'M xi = xi'M x
        total += np.sum(proj ** 2 * g[fold] ** 2)
    return float(total / dataset.n)


def debiased_point_lm(X, y, split: FoldSplit, beta_hat, Omega_J, Omega_Jc, xi) -> float:
    """Residual form for least squares: ``xi'b + xi' O_Jc (1/n) sum_J x_i r_i + ...``."""
    X, y = np.asarray(X, float), np.asarray(y, float)
    Omega_J, Omega_Jc = _mat(Omega_J), _mat(Omega_Jc)
    n = X.shape[0]
    resid = y - X @ beta_hat
    u_Jc = Omega_Jc.T @ xi
    u_J = Omega_J.T @ xi
    return float(xi @ beta_hat
                 + u_Jc @ (X[split.J].T @ resid[split.J]) / n
                 + u_J @ (X[split.Jc].T @ resid[split.Jc]) / n)


def variance_estimate_lm(X, y, split: FoldSplit, beta_hat, Omega_J, Omega_Jc, xi) -> float:
    X, y = np.asarray(X, float), np.asarray(y, float)
    Omega_J, Omega_Jc = _mat(Omega_J), _mat(Omega_Jc)
    n = X.shape[0]
    resid = y - X @ beta_hat
    a = (X[split.J] @ Omega_Jc.T @ xi) * resid[split.J]
    b = (X[split.Jc] @ Omega_J.T @ xi) * resid[split.Jc]
    return float((a @ a + b @ b) / n)


def normal_quantile(prob: float) -> float:
    return float(ndtri(prob))


def wald_ci(point: float, v_hat: float, n: int, alpha: float = 0.05) -> tuple[float, float]:
    if v_hat < 0:
        raise ValueError("v_hat must be nonnegative")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if v_hat == 0:
        warnings.warn("estimated variance is zero; the interval is degenerate", RuntimeWarning)
    half = normal_quantile(1 - alpha / 2) * math.sqrt(v_hat / n)
    return point - half, point + half


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        raise InferenceError(name, exc) from exc


def run_pipeline(dataset: Dataset, xi, config: InferenceConfig = None, stream: int = 0) -> PipelineState:
    """Full debiased inference for ``xi' beta_bar``.

    1. penalised fit on all rows with CV-chosen penalty;
    2. random fold split;
    3. for non-square loss (or ``pipeline="glm"``), a CV penalised refit on
       each fold, used only to weight that fold's Hessian;
    4. per-fold precision estimates;
    5. debiased point, variance and interval.

    ``stream`` selects an independent set of random streams under
    ``config.seed`` (the simulation harness passes the replication index).
    """
    config = config or InferenceConfig()
    xi = np.asarray(xi, dtype=float).ravel()
    if xi.shape != (dataset.p,):
        raise ValueError(f"loading has length {xi.size}, expected {dataset.p}")
    seed = Seed(int(config.seed))
    K, gs = config.cv_folds, config.grid_size

    fit, _ = _stage("initial fit", cv_lasso, dataset, K, gs, seed.stream("cv-full", stream))
    split = _stage("split", split_indices, dataset.n, config.split_ratio, seed.stream("split", stream))
    rho = default_rho(dataset.n, dataset.p, config.rho_mult)

    use_glm = config.pipeline == "glm" or (config.pipeline == "auto" and dataset.family != "square")
    data_J, data_Jc = dataset.subset(split.J), dataset.subset(split.Jc)
    fold_fits = None
    if use_glm:
        fit_J, _ = _stage("fold J fit", cv_lasso, data_J, K, gs, seed.stream("cv-J", stream))
        fit_Jc, _ = _stage("fold Jc fit", cv_lasso, data_Jc, K, gs, seed.stream("cv-Jc", stream))
        fold_fits = (fit_J, fit_Jc)
        wrapper = extended_clime_cross_fit if config.method == "clime" else extended_two_stage_cross_fit
        M_J, M_Jc = _stage("precision", wrapper, data_J, data_Jc, fit_J.beta, fit_Jc.beta, rho)
        point = debiased_point(dataset, split, fit.beta, M_J, M_Jc, xi)
        v_hat = variance_estimate(dataset, split, fit.beta, M_J, M_Jc, xi)
    else:
        wrapper = clime_cross_fit if config.method == "clime" else two_stage_cross_fit
        M_J, M_Jc = _stage("precision", wrapper, data_J.X, data_Jc.X, rho)
        point = debiased_point_lm(dataset.X, dataset.y, split, fit.beta, M_J, M_Jc, xi)
        v_hat = variance_estimate_lm(dataset.X, dataset.y, split, fit.beta, M_J, M_Jc, xi)

    lo, hi = wald_ci(point, v_hat, dataset.n, config.alpha)
    result = InferenceResult(point, float(xi @ fit.beta), v_hat, lo, hi, config.alpha,
                             dataset.n, dataset.p, config.method)
    return PipelineState(fit, split, rho, M_J, M_Jc, result, fold_fits)


def infer(dataset: Dataset, xi, config: InferenceConfig = None, stream: int = 0) -> InferenceResult:
    return run_pipeline(dataset, xi, config, stream).result
