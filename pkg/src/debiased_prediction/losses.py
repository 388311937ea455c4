"""Loss families phi(a, b) and their derivatives in the linear predictor b.

``a`` is the response and ``b`` the linear predictor. Square loss is
``(a - b)^2 / 2``; logistic loss is the canonical-link negative
log-likelihood ``-a b + log(1 + e^b)``.
"""
import numpy as np

from .data_model import canonical_family


def sigmoid(b):
    b = np.asarray(b, dtype=float)
    # exp(-|b|) never overflows
    e = np.exp(-np.abs(b))
    return np.where(b >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def phi_k(family, a, b, k):
    """k-th derivative of ``phi(a, b)`` with respect to ``b`` (``k`` in 0..3).

    Vectorised over ``a`` and ``b``.
    """
    family = canonical_family(family)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if k not in (0, 1, 2, 3):
        raise ValueError("k must be 0, 1, 2 or 3")
    if family == "square":
        if k == 0:
            return 0.5 * (a - b) ** 2
        if k == 1:
            return b - a
        shape = np.broadcast(a, b).shape
        return np.full(shape, 1.0 if k == 2 else 0.0)[()]
    if k == 0:
        # for 0/1 responses the bracket is exact, so nothing cancels at large |b|
        return (np.maximum(b, 0.0) - a * b) + np.log1p(np.exp(-np.abs(b)))
    s = sigmoid(b)
    if k == 1:
        return s - a
    shape = np.broadcast(a, b).shape
    if k == 2:
        return np.broadcast_to(s * (1.0 - s), shape)[()]
    return np.broadcast_to(s * (1.0 - s) * (1.0 - 2.0 * s), shape)[()]


def phi0(family, a, b):
    return phi_k(family, a, b, 0)


def phi1(family, a, b):
    return phi_k(family, a, b, 1)


def phi2(family, a, b):
    return phi_k(family, a, b, 2)


def phi3(family, a, b):
    return phi_k(family, a, b, 3)
