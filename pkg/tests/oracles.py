"""Slow, independent reference solvers used only by the tests.

None of these share code with the package: they are brute force on purpose.
"""
import itertools
import math

import numpy as np


# ---------------------------------------------------------------------------
# linear programming
# ---------------------------------------------------------------------------

def dantzig_vertex_oracle(W, j, rho):
    """min 1'(u + v) s.t. |W(u - v) - e_j| <= rho, u, v >= 0, by vertex enumeration.

    The feasible set lives in R^{2p} and is cut out by 4p half-spaces; every
    choice of 2p of them that is tight and nonsingular gives a candidate
    vertex. Returns ``(objective, g)``.
    """
    W = np.asarray(W, float)
    p = W.shape[0]
    e = np.zeros(p)
    e[j] = 1.0
    A = np.vstack([np.hstack([W, -W]), np.hstack([-W, W]), -np.eye(2 * p)])
    b = np.concatenate([e + rho, rho - e, np.zeros(2 * p)])
    combos = np.array(list(itertools.combinations(range(4 * p), 2 * p)))
    M = A[combos]
    rhs = b[combos]
    det = np.linalg.det(M)
    keep = np.abs(det) > 1e-10
    Z = np.linalg.solve(M[keep], rhs[keep][..., None])[..., 0]
    feasible = np.all(Z @ A.T <= b + 1e-9, axis=1)
    Z = Z[feasible]
    obj = Z.sum(axis=1)
    best = np.argmin(obj)
    z = Z[best]
    return float(obj[best]), z[:p] - z[p:]


def bland_simplex(c, A_eq, b_eq, eps=1e-11, max_iter=100_000):
    """Two-phase dense tableau simplex with Bland's rule.

    Solves min c'x s.t. A_eq x = b_eq, x >= 0. Returns ``(objective, x)`` or
    raises ValueError when infeasible or unbounded.
    """
    A = np.array(A_eq, float)
    b = np.array(b_eq, float)
    c = np.asarray(c, float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    # phase 1 tableau with artificials n..n+m-1
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    basis = list(range(n, n + m))
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()

    def pivot(r, col):
        T[r] /= T[r, col]
        for i in range(T.shape[0]):
            if i != r and T[i, col] != 0.0:
                T[i] -= T[i, col] * T[r]
        basis[r] = col

    def run(allowed):
        for _ in range(max_iter):
            cols = [k for k in allowed if T[-1, k] < -eps]
            if not cols:
                return
            col = cols[0]  # Bland: smallest index
            ratios = [(T[i, -1] / T[i, col], basis[i], i) for i in range(m) if T[i, col] > eps]
            if not ratios:
                raise ValueError("unbounded")
            best = min(r[0] for r in ratios)
            # ties broken by smallest basic index
            r = min((r for r in ratios if r[0] <= best + eps), key=lambda t: t[1])[2]
            pivot(r, col)
        raise RuntimeError("simplex iteration cap")

    run(range(n + m))
    if T[m, -1] < -1e-8:
        raise ValueError("infeasible")
    # drive artificials out of the basis where possible
    for i in range(m):
        if basis[i] >= n:
            nz = [k for k in range(n) if abs(T[i, k]) > eps]
            if nz:
                pivot(i, nz[0])
    T = np.delete(T, np.s_[n:n + m], axis=1)
    T[m] = 0.0
    T[m, :n] = c
    for i in range(m):
        if basis[i] < n:
            T[m] -= c[basis[i]] * T[i]
    keep_rows = [i for i in range(m) if basis[i] < n]
    T = np.vstack([T[keep_rows], T[m]])
    basis = [basis[i] for i in keep_rows]
    m = len(basis)
    run(range(n))
    x = np.zeros(n)
    for i, k in enumerate(basis):
        x[k] = T[i, -1]
    return float(c @ x), x


def lp_inequality_form(c, A_ub, b_ub, free):
    """min c'x s.t. A_ub x <= b_ub, with ``free`` marking unrestricted variables.

    Converted to standard form by splitting free variables and adding slacks,
    then handed to :func:`bland_simplex`.
    """
    c = np.asarray(c, float)
    A_ub = np.asarray(A_ub, float)
    free = np.asarray(free, bool)
    n = c.size
    cols = [A_ub, -A_ub[:, free]]
    cost = np.concatenate([c, -c[free], np.zeros(A_ub.shape[0])])
    A = np.hstack(cols + [np.eye(A_ub.shape[0])])
    obj, z = bland_simplex(cost, A, b_ub)
    x = z[:n].copy()
    x[free] -= z[n:n + free.sum()]
    return obj, x


def dantzig_simplex_oracle(W, j, rho):
    W = np.asarray(W, float)
    p = W.shape[0]
    e = np.zeros(p)
    e[j] = 1.0
    # variables g (free) and a (>= 0) with -a <= g <= a
    I = np.eye(p)
    Z = np.zeros((p, p))
    A_ub = np.vstack([
        np.hstack([I, -I]), np.hstack([-I, -I]),
        np.hstack([W, Z]), np.hstack([-W, Z]),
    ])
    b_ub = np.concatenate([np.zeros(2 * p), e + rho, rho - e])
    c = np.concatenate([np.zeros(p), np.ones(p)])
    free = np.r_[np.ones(p, bool), np.zeros(p, bool)]
    obj, x = lp_inequality_form(c, A_ub, b_ub, free)
    return obj, x[:p]


def stage2_simplex_oracle(W, G_hat, rho):
    """min sum |G_hat - G| over symmetric G with |WG - I|_max <= rho."""
    W = np.asarray(W, float)
    G_hat = np.asarray(G_hat, float)
    p = W.shape[0]
    pairs = [(a, b) for a in range(p) for b in range(a, p)]
    index = {}
    for k, (a, b) in enumerate(pairs):
        index[(a, b)] = index[(b, a)] = k
    m, P = len(pairs), p * p
    rows, rhs = [], []
    for a in range(p):
        for b in range(p):
            t = m + a * p + b
            r1 = np.zeros(m + P)
            r1[index[(a, b)]] = 1.0
            r1[t] = -1.0
            rows.append(r1)
            rhs.append(G_hat[a, b])  # G_ab - t <= G_hat_ab
            r2 = np.zeros(m + P)
            r2[index[(a, b)]] = -1.0
            r2[t] = -1.0
            rows.append(r2)
            rhs.append(-G_hat[a, b])
    for i in range(p):
        for jj in range(p):
            r = np.zeros(m + P)
            for k in range(p):
                r[index[(k, jj)]] += W[i, k]
            target = 1.0 if i == jj else 0.0
            rows.append(r)
            rhs.append(target + rho)
            rows.append(-r)
            rhs.append(rho - target)
    c = np.concatenate([np.zeros(m), np.ones(P)])
    free = np.r_[np.ones(m, bool), np.zeros(P, bool)]
    obj, x = lp_inequality_form(c, np.array(rows), np.array(rhs), free)
    G = np.empty((p, p))
    for (a, b), k in ((ab, index[ab]) for ab in itertools.product(range(p), repeat=2)):
        G[a, b] = x[k]
    return obj, G


# ---------------------------------------------------------------------------
# stage 1 by enumeration
# ---------------------------------------------------------------------------

def stage1_enumeration_oracle(W, j, rho):
    """Exact minimiser of g'Wg/2 - g_j + rho |g|_1 for positive definite W.

    For each sign pattern the problem is a linear solve; the optimum is the
    sign-consistent candidate of least objective.
    """
    W = np.asarray(W, float)
    p = W.shape[0]
    e = np.zeros(p)
    e[j] = 1.0
    best, best_g = math.inf, None
    for signs in itertools.product((-1.0, 0.0, 1.0), repeat=p):
        s = np.array(signs)
        S = s != 0
        g = np.zeros(p)
        if S.any():
            g[S] = np.linalg.solve(W[np.ix_(S, S)], e[S] - rho * s[S])
            if np.any(np.sign(g[S]) != s[S]):
                continue
        f = 0.5 * g @ W @ g - g[j] + rho * np.abs(g).sum()
        if f < best:
            best, best_g = f, g
    return best, best_g


# ---------------------------------------------------------------------------
# scalar helpers
# ---------------------------------------------------------------------------

def normal_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def normal_quantile_bisect(prob, lo=-40.0, hi=40.0):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if normal_cdf(mid) < prob:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def random_spd(rng, p, jitter=0.2):
    A = rng.standard_normal((p, p))
    S = A @ A.T / p + jitter * np.eye(p)
    return (S + S.T) / 2
