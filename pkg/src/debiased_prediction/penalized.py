"""L1-penalised M-estimation without intercept and K-fold CV over a lambda grid.

Minimises ``(1/n) sum_i phi(y_i, x_i' beta) + lam * ||beta||_1``. Square loss
uses cyclic coordinate descent on the residual; logistic loss uses a
proximal-Newton outer loop (coordinate descent on the local quadratic model,
then a backtracking line search on the true objective).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .data_model import Dataset, SeedLike, as_generator
from .losses import phi0, phi1

DEFAULT_TOL = 1e-7
DEFAULT_MAX_SWEEPS = 100_000


class DegenerateDataError(ValueError):
    """Raised when the data admit no meaningful penalised fit."""


@dataclass
class PenalizedFit:
    beta: np.ndarray
    lam: float
    iterations: int
    converged: bool
    trace: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.beta))


@dataclass
class CvResult:
    lambda_grid: np.ndarray
    cv_loss: np.ndarray
    selected: int
    fold_loss: np.ndarray = field(repr=False, default=None)

    @property
    def lam(self) -> float:
        return float(self.lambda_grid[self.selected])


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def _dot_col(X, j, v):
    acc = 0.0
    for i in range(X.shape[0]):
        acc += X[i, j] * v[i]
    return acc


@njit(cache=True)
def _cd_sweep_square(X, r, beta, col_sq, lam, n, coords):
    max_change = 0.0
    for j in coords:
        if col_sq[j] <= 0.0:
            continue
        z = _dot_col(X, j, r) / n + col_sq[j] * beta[j]
        new = _soft(z, lam) / col_sq[j]
        d = new - beta[j]
        if d != 0.0:
            for i in range(X.shape[0]):
                r[i] -= d * X[i, j]
            beta[j] = new
            if abs(d) > max_change:
                max_change = abs(d)
    return max_change


@njit(cache=True)
def _cd_square(X, y, beta, lam, tol, max_sweeps, trace):
    # cyclic coordinate descent with active-set cycling: after a full sweep,
    # sweep the nonzero coordinates until they settle, then confirm with a
    # full sweep
    n, p = X.shape
    r = y - X @ beta
    col_sq = np.zeros(p)
    for j in range(p):
        col_sq[j] = _dot_col(X, j, X[:, j]) / n
    all_coords = np.arange(p)
    n_trace = 0
    if trace.size > 0:
        trace[0] = 0.5 * (r @ r) / n + lam * np.abs(beta).sum()
        n_trace = 1
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        change = _cd_sweep_square(X, r, beta, col_sq, lam, n, all_coords)
        if n_trace < trace.size:
            trace[n_trace] = 0.5 * (r @ r) / n + lam * np.abs(beta).sum()
            n_trace += 1
        if change <= tol:
            return sweeps, True, n_trace
        active = np.nonzero(beta)[0]
        while sweeps < max_sweeps:
            sweeps += 1
            change = _cd_sweep_square(X, r, beta, col_sq, lam, n, active)
            if n_trace < trace.size:
                trace[n_trace] = 0.5 * (r @ r) / n + lam * np.abs(beta).sum()
                n_trace += 1
            if change <= tol:
                break
    return sweeps, False, n_trace


@njit(cache=True)
def _logistic_obj(eta, y, beta, lam):
    n = eta.size
    tot = 0.0
    for i in range(n):
        e = eta[i]
        # log(1 + exp(e)) evaluated without overflow
        if e > 0:
            tot += e + np.log1p(np.exp(-e)) - y[i] * e
        else:
            tot += np.log1p(np.exp(e)) - y[i] * e
    return tot / n + lam * np.abs(beta).sum()


@njit(cache=True)
def _cd_sweep_model(X, w, g, hjj, b, s, ws, lam, n, coords):
    # one pass over coords of the quadratic model g'd + d'Hd/2 + lam|b|_1,
    # d = b - beta, with s = X d and ws = w * s maintained in place
    max_change = 0.0
    for j in coords:
        if hjj[j] <= 1e-14:
            continue
        hd = _dot_col(X, j, ws) / n
        new = _soft(hjj[j] * b[j] - (g[j] + hd), lam) / hjj[j]
        d = new - b[j]
        if d != 0.0:
            for i in range(X.shape[0]):
                s[i] += d * X[i, j]
                ws[i] += d * w[i] * X[i, j]
            b[j] = new
            if abs(d) > max_change:
                max_change = abs(d)
    return max_change


@njit(cache=True)
def _model_hessian(X, w, n):
    WX = np.empty_like(X)
    for j in range(X.shape[1]):
        for i in range(X.shape[0]):
            WX[i, j] = w[i] * X[i, j]
    return (X.T @ WX) / n


@njit(cache=True)
def _solve_block(H, rhs, A):
    # Cholesky solve of H[A, A] z = rhs; empty result on a numerically singular block
    k = A.size
    L = np.zeros((k, k))
    scale = 0.0
    for a in range(k):
        scale = max(scale, H[A[a], A[a]])
    for a in range(k):
        for c in range(a + 1):
            acc = H[A[a], A[c]]
            for m in range(c):
                acc -= L[a, m] * L[c, m]
            if a == c:
                if acc <= 1e-12 * scale:
                    return np.empty(0)
                L[a, a] = np.sqrt(acc)
            else:
                L[a, c] = acc / L[c, c]
    z = np.empty(k)
    for a in range(k):
        acc = rhs[a]
        for m in range(a):
            acc -= L[a, m] * z[m]
        z[a] = acc / L[a, a]
    for a in range(k - 1, -1, -1):
        acc = z[a]
        for m in range(a + 1, k):
            acc -= L[m, a] * z[m]
        z[a] = acc / L[a, a]
    return z


@njit(cache=True)
def _exact_model_solve(H, c, b, lam, max_rounds):
    # Primal active-set minimisation of c'x + x'Hx/2 + lam|x|_1 started at b.
    # Each round solves on the current support and signs; a sign crossing moves
    # to the first zero and drops that coordinate, otherwise the worst KKT
    # violator enters. Every move stays in one orthant, so the model objective
    # never increases. On success b is overwritten; on failure it is untouched.
    p = b.size
    x = b.copy()
    sign = np.sign(x)
    for _ in range(max_rounds):
        A = np.nonzero(sign)[0]
        k = A.size
        rhs = np.empty(k)
        for a in range(k):
            rhs[a] = -c[A[a]] - lam * sign[A[a]]
        z = _solve_block(H, rhs, A)
        if z.size != k:
            return False
        t = 1.0
        hit = -1
        for a in range(k):
            j = A[a]
            if sign[j] * z[a] <= 0.0:
                ta = x[j] / (x[j] - z[a]) if x[j] != z[a] else 0.0
                if ta < t:
                    t = ta
                    hit = j
        for a in range(k):
            j = A[a]
            x[j] += t * (z[a] - x[j])
        if hit >= 0:
            x[hit] = 0.0
            sign[hit] = 0.0
            continue
        grad = c + H @ x
        worst = -1
        excess = 0.0
        for j in range(p):
            if sign[j] == 0.0:
                v = abs(grad[j]) - lam * (1.0 + 1e-12)
                if v > excess:
                    excess = v
                    worst = j
        if worst < 0:
            b[:] = x
            return True
        sign[worst] = -np.sign(grad[worst])
    return False


@njit(cache=True)
def _prox_newton_logistic(X, y, beta, lam, tol, max_sweeps, trace):
    n, p = X.shape
    eta = X @ beta
    F = _logistic_obj(eta, y, beta, lam)
    n_trace = 0
    if trace.size > 0:
        trace[0] = F
        n_trace = 1
    sweeps = 0
    mu = np.empty(n)
    w = np.empty(n)
    hjj = np.empty(p)
    all_coords = np.arange(p)
    last_step = np.inf
    while sweeps < max_sweeps:
        for i in range(n):
            e = eta[i]
            if e >= 0:
                mu[i] = 1.0 / (1.0 + np.exp(-e))
            else:
                ee = np.exp(e)
                mu[i] = ee / (1.0 + ee)
            w[i] = mu[i] * (1.0 - mu[i])
        g = X.T @ (mu - y) / n
        for j in range(p):
            acc = 0.0
            for i in range(n):
                acc += w[i] * X[i, j] * X[i, j]
            hjj[j] = acc / n
        inner_tol = max(0.1 * tol, 1e-3 * min(last_step, 1.0))
        b = beta.copy()
        s = np.zeros(n)
        ws = np.zeros(n)
        exact = False
        H = np.empty((0, 0))
        c = np.empty(0)
        while sweeps < max_sweeps:
            sweeps += 1
            prev_sign = np.sign(b)
            change = _cd_sweep_model(X, w, g, hjj, b, s, ws, lam, n, all_coords)
            if change <= inner_tol:
                break
            # a support and sign pattern that survived a full sweep is usually
            # final; near separation CD alone crawls, so try solving outright
            if np.all(np.sign(b) == prev_sign):
                if H.shape[0] == 0:
                    H = _model_hessian(X, w, n)
                    c = g - H @ beta
                if _exact_model_solve(H, c, b, lam, 2 * p + 10):
                    s = X @ (b - beta)
                    ws = w * s
                    exact = True
                    break
            active = np.nonzero(b)[0]
            k = 0
            while sweeps < max_sweeps:
                sweeps += 1
                k += 1
                change = _cd_sweep_model(X, w, g, hjj, b, s, ws, lam, n, active)
                # ill-conditioned models make CD crawl; go back to a full sweep
                # so violators can enter and the exact solve gets another try
                if change <= inner_tol or k == 10:
                    break
        d = b - beta
        step = np.abs(d).max() if p > 0 else 0.0
        delta = g @ d + lam * (np.abs(b).sum() - np.abs(beta).sum())
        t = 1.0
        accepted = False
        F_new = F
        bt = beta.copy()
        eta_new = eta.copy()
        for _ in range(60):
            eta_new = eta + t * s
            bt = beta + t * d
            F_new = _logistic_obj(eta_new, y, bt, lam)
            if F_new <= F + 1e-4 * t * delta:
                accepted = True
                break
            t *= 0.5
        if accepted and F_new <= F:
            beta[:] = bt
            eta = eta_new
            F = F_new
            if n_trace < trace.size:
                trace[n_trace] = F
                n_trace += 1
            last_step = t * step
            if t * step <= tol and (exact or inner_tol <= 0.1 * tol):
                return sweeps, True, n_trace
        else:
            # no descent left at working precision
            return sweeps, step <= tol, n_trace
    return sweeps, False, n_trace


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def penalized_objective(dataset: Dataset, beta, lam: float) -> float:
    eta = dataset.X @ beta
    return float(np.mean(phi0(dataset.family, dataset.y, eta)) + lam * np.abs(beta).sum())


def score(dataset: Dataset, beta) -> np.ndarray:
    """Gradient of the average loss, ``(1/n) X' phi_1(y, X beta)``."""
    eta = dataset.X @ np.asarray(beta, float)
    return dataset.X.T @ phi1(dataset.family, dataset.y, eta) / dataset.n


def lambda_max(dataset: Dataset) -> float:
    """Smallest penalty at which the zero vector is optimal."""
    return float(np.abs(score(dataset, np.zeros(dataset.p))).max(initial=0.0))


def lambda_grid(lam_max: float, size: int = 100, ratio: float = 1e-3) -> np.ndarray:
    if lam_max <= 0:
        raise DegenerateDataError("lambda_max is zero; the null model is exactly optimal")
    if size == 1:
        return np.array([lam_max])
    return np.geomspace(lam_max, ratio * lam_max, size)


def lasso_fit(dataset: Dataset, lam: float, warm_start=None, tol: float = DEFAULT_TOL,
              max_sweeps: int = DEFAULT_MAX_SWEEPS, record_trace: bool = False) -> PenalizedFit:
    """Solve the penalised problem at a single ``lam``.

    A fit that hits ``max_sweeps`` is returned with ``converged=False``.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if dataset.n == 0:
        raise ValueError("empty dataset")
    X = np.asfortranarray(dataset.X)
    beta = np.zeros(dataset.p) if warm_start is None else np.array(warm_start, dtype=float)
    trace = np.empty(max_sweeps + 1 if record_trace else 0)
    if dataset.family == "square":
        iters, ok, nt = _cd_square(X, dataset.y, beta, float(lam), tol, max_sweeps, trace)
    else:
        iters, ok, nt = _prox_newton_logistic(X, dataset.y, beta, float(lam), tol, max_sweeps, trace)
    return PenalizedFit(beta, float(lam), int(iters), bool(ok), trace[:nt].copy() if record_trace else None)


def lasso_path(dataset: Dataset, grid, tol: float = DEFAULT_TOL) -> list[PenalizedFit]:
    fits = []
    beta = None
    for lam in grid:
        fit = lasso_fit(dataset, lam, warm_start=beta, tol=tol)
        beta = fit.beta
        fits.append(fit)
    return fits


def kfold_blocks(n: int, K: int, seed: SeedLike) -> list[np.ndarray]:
    perm = as_generator(seed, "cv").permutation(n)
    return np.array_split(perm, K)


def cv_select_lambda(dataset: Dataset, K: int = 10, grid_size: int = 100, seed: SeedLike = 0,
                     ratio: float = 1e-3, tol: float = DEFAULT_TOL) -> CvResult:
    """K-fold cross-validation of the held-out mean loss along a geometric grid.

    The grid runs from the largest ``lambda_max`` over the full data and the
    training folds down to ``ratio`` times that value. Ties resolve to the largest penalty.
    """
    if K < 2:
        raise ValueError("need at least two folds")
    if dataset.n < K:
        raise ValueError(f"n={dataset.n} is smaller than the number of folds K={K}")
    if dataset.family == "logistic" and np.all(dataset.y == dataset.y[0]):
        raise DegenerateDataError("logistic response is constant")
    blocks = kfold_blocks(dataset.n, K, seed)
    splits = []
    for test in blocks:
        train = np.setdiff1d(np.arange(dataset.n), test, assume_unique=True)
        splits.append((dataset.subset(train), dataset.subset(test)))
    # top of the grid is the null model for the full data and every training fold
    top = max([lambda_max(dataset)] + [lambda_max(tr) for tr, _ in splits])
    grid = lambda_grid(top, grid_size, ratio)
    fold_loss = np.empty((K, grid.size))
    for k, (tr, te) in enumerate(splits):
        beta = None
        for i, lam in enumerate(grid):
            fit = lasso_fit(tr, lam, warm_start=beta, tol=tol)
            beta = fit.beta
            fold_loss[k, i] = np.mean(phi0(te.family, te.y, te.X @ beta))
    cv_loss = fold_loss.mean(axis=0)
    # argmin returns the first minimiser, i.e. the largest lambda on ties
    return CvResult(grid, cv_loss, int(np.argmin(cv_loss)), fold_loss)


def cv_lasso(dataset: Dataset, K: int = 10, grid_size: int = 100, seed: SeedLike = 0,
             ratio: float = 1e-3, tol: float = DEFAULT_TOL) -> tuple[PenalizedFit, CvResult]:
    """Cross-validate the penalty, then refit on all rows at the selected value."""
    cv = cv_select_lambda(dataset, K, grid_size, seed, ratio, tol)
    fits = lasso_path(dataset, cv.lambda_grid[: cv.selected + 1], tol)
    return fits[-1], cv


def kkt_violation(dataset: Dataset, fit: PenalizedFit) -> float:
    """Largest violation of the subgradient optimality conditions."""
    g = score(dataset, fit.beta)
    active = fit.beta != 0
    viol_inactive = np.abs(g[~active]) - fit.lam
    viol_active = np.abs(g[active] + fit.lam * np.sign(fit.beta[active]))
    return float(max(viol_inactive.max(initial=0.0), viol_active.max(initial=0.0), 0.0))
