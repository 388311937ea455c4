"""Target coefficients of the two simulation designs.

Kept free of the solver stack so the ``target-beta`` command starts quickly.
"""
from __future__ import annotations

import itertools

import numpy as np

from .data_model import SimDesign, mixture_probability, symmetric_sqrt
from .losses import sigmoid


class StudyError(RuntimeError):
    pass


def lm_target_beta(design: SimDesign) -> np.ndarray:
    """For the linear design the noise is mean zero given X, so the target is gamma*."""
    if design.kind != "lm_ar":
        raise ValueError("lm_target_beta needs the linear design")
    return design.gamma_star.copy()


def _rademacher_points(Sigma_head) -> np.ndarray:
    R = symmetric_sqrt(Sigma_head)
    d = R.shape[0]
    Z = np.array(list(itertools.product((-1.0, 1.0), repeat=d)))
    return Z @ R


def _population_pieces(gamma_head, Sigma_head, offset):
    X = _rademacher_points(Sigma_head)
    prob = mixture_probability(X @ np.asarray(gamma_head, float), offset)
    return X, prob


def population_loss(beta, X, prob) -> float:
    eta = X @ beta
    return float(np.mean(np.logaddexp(0.0, eta) - prob * eta))


def population_gradient(beta, X, prob) -> np.ndarray:
    return X.T @ (sigmoid(X @ beta) - prob) / X.shape[0]


def glm_target_beta(gamma_head=(0.5, 0.5, 0.5, 0.5, 0.075), Sigma_head=None, offset: float = 2.0,
                    tol: float = 1e-10, max_iter: int = 200_000) -> np.ndarray:
    """Minimiser of the exact expected logistic loss over the 2^d support points.

    The covariates are ``Sigma_head^{1/2} z`` with ``z`` uniform on {-1, 1}^d and
    the response follows the two-component mixture with offsets ``+-offset``.
    Plain gradient descent with step ``1/L``, ``L = lambda_max(E xx') / 4``,
    run until the gradient norm is at most ``tol``.
    """
    if Sigma_head is None:
        Sigma_head = SimDesign("glm_rademacher", 20, 6).covariance()[:5, :5]
    X, prob = _population_pieces(gamma_head, Sigma_head, offset)
    L = np.linalg.eigvalsh(X.T @ X / X.shape[0]).max() / 4.0
    beta = np.zeros(X.shape[1])
    for _ in range(max_iter):
        g = population_gradient(beta, X, prob)
        if np.linalg.norm(g) <= tol:
            return beta
        beta = beta - g / L
    raise StudyError(f"gradient descent did not reach gradient norm {tol:g} in {max_iter} steps")


def glm_target_beta_newton(gamma_head=(0.5, 0.5, 0.5, 0.5, 0.075), Sigma_head=None, offset: float = 2.0,
                           tol: float = 1e-13, max_iter: int = 100) -> np.ndarray:
    """Damped Newton on the same objective; an independent check of :func:`glm_target_beta`."""
    if Sigma_head is None:
        Sigma_head = SimDesign("glm_rademacher", 20, 6).covariance()[:5, :5]
    X, prob = _population_pieces(gamma_head, Sigma_head, offset)
    beta = np.zeros(X.shape[1])
    f = population_loss(beta, X, prob)
    for _ in range(max_iter):
        g = population_gradient(beta, X, prob)
        if np.linalg.norm(g) <= tol:
            return beta
        s = sigmoid(X @ beta)
        H = (X * (s * (1 - s))[:, None]).T @ X / X.shape[0]
        step = np.linalg.solve(H, g)
        t = 1.0
        while t > 1e-12:
            cand = beta - t * step
            f_new = population_loss(cand, X, prob)
            if f_new <= f - 1e-4 * t * (g @ step):
                break
            t *= 0.5
        else:
            # no decrease measurable in floating point: the iterate is at the optimum
            return beta
        beta, f = cand, f_new
    raise StudyError("Newton iteration did not converge")


def target_beta(design: SimDesign, offset: float = 2.0) -> np.ndarray:
    if design.kind == "lm_ar":
        return lm_target_beta(design)
    if np.any(design.gamma_star[5:] != 0):
        raise ValueError("the GLM target oracle assumes gamma_star vanishes beyond the first five entries")
    head = glm_target_beta(design.gamma_star[:5], design.covariance()[:5, :5], offset)
    return np.concatenate([head, np.zeros(design.p - 5)])
