"""Sparse estimates of inverse (weighted) second-moment matrices.

Two estimators are provided, each with a cross-fitted wrapper:

* CLIME: column-wise ``min ||g||_1  s.t.  ||W g - e_j||_inf <= rho`` followed by
  min-magnitude symmetrisation.
* two-stage: a proximal-gradient solve of
  ``min_G  tr(G'WG)/2 - tr(G) + rho ||G||_1`` followed by the symmetric
  L1 projection ``min ||G_hat - G||_1  s.t.  G = G', ||W G - I||_max <= rho``.

``W`` is either the plain Gram matrix ``X'X/m`` or the weighted version
``X' diag(phi_2) X / m``. All linear programs go through HiGHS.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import highspy
import numpy as np
from scipy import sparse

from .data_model import Dataset, write_matrix
from .losses import phi2

FEASIBILITY_TOL = 1e-7
PG_TOL = 1e-8
PG_MAX_ITER = 50_000


class PrecisionError(RuntimeError):
    pass


class InfeasibleColumn(PrecisionError):
    def __init__(self, column: int, detail: str = ""):
        self.column = column
        super().__init__(f"column {column}: no feasible point{(': ' + detail) if detail else ''}")


class SolverStall(PrecisionError):
    def __init__(self, what: str, column: Optional[int] = None):
        self.column = column
        where = f" (column {column})" if column is not None else ""
        super().__init__(f"{what}{where}")


class InfeasibleStage2(PrecisionError):
    pass


@dataclass
class GramInput:
    W: np.ndarray
    kind: str = "gram"

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        if self.W.ndim != 2 or self.W.shape[0] != self.W.shape[1]:
            raise ValueError("W must be square")
        if not np.allclose(self.W, self.W.T, rtol=0, atol=1e-12):
            raise ValueError("W must be symmetric")


@dataclass
class PrecisionEstimate:
    Omega: np.ndarray
    rho: float
    method: str
    fold: str = "all"
    presym: Optional[np.ndarray] = field(default=None, repr=False)

    def to_csv(self, path) -> None:
        write_matrix(path, self.Omega)


def _as_W(W) -> np.ndarray:
    if isinstance(W, GramInput):
        return W.W
    return GramInput(W).W


def default_rho(n: int, p: int, mult: float = 1.0) -> float:
    """Constraint level ``mult * sqrt(log p / n)``."""
    return mult * float(np.sqrt(np.log(p) / n))


# ---------------------------------------------------------------------------
# second-moment matrices
# ---------------------------------------------------------------------------

def gram_matrix(X) -> GramInput:
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("empty design")
    W = X.T @ X / X.shape[0]
    return GramInput((W + W.T) / 2, "gram")


def weighted_gram(dataset: Dataset, beta) -> GramInput:
    """``(1/m) sum_i phi_2(y_i, x_i' beta) x_i x_i'``."""
    X = dataset.X
    if X.shape[0] == 0:
        raise ValueError("empty design")
    w = phi2(dataset.family, dataset.y, X @ np.asarray(beta, float))
    W = (X * w[:, None]).T @ X / X.shape[0]
    return GramInput((W + W.T) / 2, "weighted_gram")


# ---------------------------------------------------------------------------
# CLIME
# ---------------------------------------------------------------------------

def _new_highs() -> highspy.Highs:
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", 1)
    h.setOptionValue("primal_feasibility_tolerance", 1e-9)
    h.setOptionValue("dual_feasibility_tolerance", 1e-9)
    return h


def _pass_lp(h, cost, col_lower, col_upper, A: sparse.csc_matrix, row_lower, row_upper):
    lp = highspy.HighsLp()
    lp.num_col_ = A.shape[1]
    lp.num_row_ = A.shape[0]
    lp.col_cost_ = np.asarray(cost, float)
    lp.col_lower_ = np.asarray(col_lower, float)
    lp.col_upper_ = np.asarray(col_upper, float)
    lp.row_lower_ = np.asarray(row_lower, float)
    lp.row_upper_ = np.asarray(row_upper, float)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = A.indptr.astype(np.int32)
    lp.a_matrix_.index_ = A.indices.astype(np.int32)
    lp.a_matrix_.value_ = A.data.astype(float)
    h.passModel(lp)


class DantzigSolver:
    """Column solver for ``min ||g||_1 s.t. ||W g - e_j||_inf <= rho``.

    The constraint matrix is shared by all columns, so one HiGHS model is kept
    and only two row bounds change between consecutive solves; the dual
    simplex restarts from the previous optimal basis.
    """

    def __init__(self, W, rho: float):
        W = _as_W(W)
        if rho < 0:
            raise ValueError("rho must be nonnegative")
        self.W = W
        self.rho = float(rho)
        self.p = W.shape[0]
        p = self.p
        inf = highspy.kHighsInf
        A = sparse.csc_matrix(np.hstack([W, -W]))
        self._h = _new_highs()
        _pass_lp(self._h, np.ones(2 * p), np.zeros(2 * p), np.full(2 * p, inf), A,
                 np.full(p, -self.rho), np.full(p, self.rho))
        self._raised: Optional[int] = None

    def solve(self, j: int) -> np.ndarray:
        p, rho, h = self.p, self.rho, self._h
        if not 0 <= j < p:
            raise IndexError(j)
        if self._raised is not None and self._raised != j:
            h.changeRowBounds(self._raised, -rho, rho)
        h.changeRowBounds(j, 1.0 - rho, 1.0 + rho)
        self._raised = j
        h.run()
        status = h.getModelStatus()
        if status == highspy.HighsModelStatus.kInfeasible:
            raise InfeasibleColumn(j)
        if status != highspy.HighsModelStatus.kOptimal:
            raise SolverStall(f"HiGHS returned {h.modelStatusToString(status)}", j)
        x = np.asarray(h.getSolution().col_value)
        g = x[:p] - x[p:]
        e = np.zeros(p)
        e[j] = 1.0
        viol = np.abs(self.W @ g - e).max() - rho
        if viol > FEASIBILITY_TOL:
            raise SolverStall(f"constraint violated by {viol:.3g} after solve", j)
        return g


def dantzig_column(W, j: int, rho: float) -> np.ndarray:
    return DantzigSolver(W, rho).solve(j)


def symmetrize_min(G) -> np.ndarray:
    """Keep, for each pair (i, j), whichever of ``G_ij``, ``G_ji`` is smaller in magnitude.

    Exact magnitude ties take the upper-triangle entry for both positions.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError("G must be square")
    upper = np.triu(G, 1)
    lower_t = np.triu(G.T, 1)
    pick = np.where(np.abs(lower_t) < np.abs(upper), lower_t, upper)
    return pick + pick.T + np.diag(np.diag(G))


def clime(W, rho: float, fold: str = "all") -> PrecisionEstimate:
    W = _as_W(W)
    solver = DantzigSolver(W, rho)
    G = np.empty_like(W)
    for j in range(W.shape[0]):
        G[:, j] = solver.solve(j)
    G += 0.0  # drop negative zeros
    return PrecisionEstimate(symmetrize_min(G), float(rho), "clime", fold, G)


# ---------------------------------------------------------------------------
# two-stage
# ---------------------------------------------------------------------------

def _soft(Z, t):
    return np.sign(Z) * np.maximum(np.abs(Z) - t, 0.0)


def stage1_objective(W, G, rho: float) -> np.ndarray:
    """Per-column objective ``g'Wg/2 - g_j + rho ||g||_1``."""
    W = _as_W(W)
    return 0.5 * np.einsum("ij,ij->j", G, W @ G) - np.diag(G) + rho * np.abs(G).sum(axis=0)


def two_stage_stage1(W, rho: float, tol: float = PG_TOL, max_iter: int = PG_MAX_ITER):
    """Proximal gradient with constant step ``1/L``, all columns at once.

    Returns ``(G_hat, iterations, converged)``.
    """
    W = _as_W(W)
    p = W.shape[0]
    L = float(np.linalg.eigvalsh(W).max()) if p else 0.0
    if L <= 0:
        return np.zeros((p, p)), 0, True
    G = np.zeros((p, p))
    eye = np.eye(p)
    for it in range(1, max_iter + 1):
        G_new = _soft(G - (W @ G - eye) / L, rho / L)
        change = np.abs(G_new - G).max()
        G = G_new
        if change <= tol:
            return G, it, True
    return G, max_iter, False


def _vech_index(p: int) -> np.ndarray:
    """Map full (a, b) position to the index of the shared symmetric entry."""
    k = np.zeros((p, p), dtype=int)
    iu = np.triu_indices(p)
    k[iu] = np.arange(iu[0].size)
    return np.triu(k) + np.triu(k, 1).T


def two_stage_stage2(W, G_hat, rho: float) -> tuple[np.ndarray, float]:
    """Symmetric L1 projection of ``G_hat`` onto ``||W G - I||_max <= rho``.

    Variables are the ``p(p+1)/2`` free symmetric entries plus one epigraph
    variable per matrix position. Returns ``(Omega, objective)``.
    """
    W = _as_W(W)
    G_hat = np.asarray(G_hat, dtype=float)
    p = W.shape[0]
    m = p * (p + 1) // 2
    P = p * p
    K = _vech_index(p).ravel()  # row-major position -> symmetric index
    pos = np.arange(P)
    inf = highspy.kHighsInf

    # t_ab - s_k >= -G_hat_ab and t_ab + s_k >= G_hat_ab
    rows_abs = sparse.vstack([
        sparse.hstack([sparse.csr_matrix((-np.ones(P), (pos, K)), shape=(P, m)), sparse.identity(P)]),
        sparse.hstack([sparse.csr_matrix((np.ones(P), (pos, K)), shape=(P, m)), sparse.identity(P)]),
    ])
    # (W G)_ij = sum_k W_ik s_{K(k, j)}
    i_idx, j_idx, k_idx = np.meshgrid(np.arange(p), np.arange(p), np.arange(p), indexing="ij")
    r = (i_idx * p + j_idx).ravel()
    c = K.reshape(p, p)[k_idx, j_idx].ravel()
    v = W[i_idx, k_idx].ravel()
    rows_band = sparse.hstack([sparse.csr_matrix((v, (r, c)), shape=(P, m)), sparse.csr_matrix((P, P))])
    A = sparse.vstack([rows_abs, rows_band]).tocsc()
    A.sum_duplicates()

    gh = G_hat.ravel()
    eye = np.eye(p).ravel()
    row_lower = np.concatenate([-gh, gh, eye - rho])
    row_upper = np.concatenate([np.full(2 * P, inf), eye + rho])
    cost = np.concatenate([np.zeros(m), np.ones(P)])
    col_lower = np.concatenate([np.full(m, -inf), np.zeros(P)])
    col_upper = np.full(m + P, inf)

    h = _new_highs()
    # interior point + crossover: far faster than simplex on this LP and
    # still returns a vertex
    h.setOptionValue("solver", "ipm")
    _pass_lp(h, cost, col_lower, col_upper, A, row_lower, row_upper)
    h.run()
    status = h.getModelStatus()
    if status == highspy.HighsModelStatus.kInfeasible:
        raise InfeasibleStage2(f"no symmetric G with ||WG - I||_max <= {rho:g}")
    if status != highspy.HighsModelStatus.kOptimal:
        raise SolverStall(f"stage-2 LP: HiGHS returned {h.modelStatusToString(status)}")
    x = np.asarray(h.getSolution().col_value)
    Omega = x[:m][K].reshape(p, p) + 0.0
    viol = np.abs(W @ Omega - np.eye(p)).max() - rho
    if viol > FEASIBILITY_TOL:
        raise SolverStall(f"stage-2 constraint violated by {viol:.3g}")
    return Omega, float(np.abs(G_hat - Omega).sum())


def two_stage(W, rho: float, fold: str = "all") -> PrecisionEstimate:
    W = _as_W(W)
    G_hat, _, ok = two_stage_stage1(W, rho)
    if not ok:
        raise SolverStall("stage-1 proximal gradient hit the iteration cap")
    Omega, _ = two_stage_stage2(W, G_hat, rho)
    return PrecisionEstimate(Omega, float(rho), "two_stage", fold, G_hat)


# ---------------------------------------------------------------------------
# cross-fitting
# ---------------------------------------------------------------------------

METHODS = {"clime": clime, "two_stage": two_stage}


def canonical_method(method: str) -> str:
    m = method.replace("-", "_")
    if m not in METHODS:
        raise ValueError(f"unknown precision method {method!r}")
    return m


def clime_cross_fit(X_J, X_Jc, rho: float):
    return (clime(gram_matrix(X_J), rho, "J"), clime(gram_matrix(X_Jc), rho, "Jc"))


def two_stage_cross_fit(X_J, X_Jc, rho: float):
    return (two_stage(gram_matrix(X_J), rho, "J"), two_stage(gram_matrix(X_Jc), rho, "Jc"))


def extended_clime_cross_fit(data_J: Dataset, data_Jc: Dataset, beta_J, beta_Jc, rho: float):
    """``beta_J`` must come from fold J alone and ``beta_Jc`` from fold Jc alone."""
    return (clime(weighted_gram(data_J, beta_J), rho, "J"),
            clime(weighted_gram(data_Jc, beta_Jc), rho, "Jc"))


def extended_two_stage_cross_fit(data_J: Dataset, data_Jc: Dataset, beta_J, beta_Jc, rho: float):
    return (two_stage(weighted_gram(data_J, beta_J), rho, "J"),
            two_stage(weighted_gram(data_Jc, beta_Jc), rho, "Jc"))
