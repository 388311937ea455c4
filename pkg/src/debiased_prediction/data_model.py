"""Numeric containers, simulation designs and reproducible random streams."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

FAMILIES = ("square", "logistic")
FAMILY_ALIASES = {"lm": "square", "square": "square", "logistic": "logistic", "glm": "logistic"}

LM_GAMMA_HEAD = (4.0, 2.0, 4.0, 4.0, -2.0)
GLM_GAMMA_HEAD = (0.5, 0.5, 0.5, 0.5, 0.075)

LOADING_HEADS = {
    ("lm_ar", "first"): (-0.5, -0.25, 0.25, 0.5, 0.25),
    ("lm_ar", "second"): (0.25, 0.25, 0.25, 0.25, 0.25),
    ("glm_rademacher", "first"): (-1.15, 1.0, -1.0, 1.0, 1.0),
    ("glm_rademacher", "second"): (-1.0, 1.0, -1.0, 1.0, 3.0),
}

SeedLike = Union[int, np.random.Generator]


def canonical_family(tag: str) -> str:
    try:
        return FAMILY_ALIASES[tag]
    except KeyError:
        raise ValueError(f"unknown loss family {tag!r}") from None


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Seed:
    """Master seed from which every random stream of a study is derived.

    A stream is addressed by ``(purpose, index)``; the generator it yields
    depends only on ``(master, index, purpose)``, so replications can be run
    in any order or in parallel and still draw the same numbers.
    """

    master: int

    def __post_init__(self):
        if not 0 <= int(self.master) < 2**64:
            raise ValueError("master seed must be an unsigned 64-bit integer")

    def stream(self, purpose: str, index: int = 0) -> np.random.Generator:
        label = zlib.crc32(purpose.encode("utf-8"))
        ss = np.random.SeedSequence([int(self.master), int(index), label])
        return np.random.Generator(np.random.Philox(ss))


def as_generator(seed: SeedLike, purpose: str = "default") -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return Seed(int(seed)).stream(purpose)


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

def check_matrix(A, name: str = "matrix") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"{name} must be two-dimensional, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


@dataclass
class Dataset:
    """Design matrix, response and loss family."""

    X: np.ndarray
    y: np.ndarray
    family: str = "square"

    def __post_init__(self):
        self.X = check_matrix(self.X, "X")
        self.y = np.asarray(self.y, dtype=float).ravel()
        self.family = canonical_family(self.family)
        if self.y.shape[0] != self.X.shape[0]:
            raise ValueError(f"y has length {self.y.shape[0]} but X has {self.X.shape[0]} rows")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("y has non-finite entries")
        if self.family == "logistic" and not np.all((self.y == 0) | (self.y == 1)):
            raise ValueError("logistic responses must be 0/1")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        return Dataset(self.X[rows], self.y[rows], self.family)

    def with_family(self, family: str) -> "Dataset":
        return Dataset(self.X, self.y, family)


@dataclass
class Loading:
    xi: np.ndarray

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float).ravel()
        if not np.all(np.isfinite(self.xi)):
            raise ValueError("loading has non-finite entries")
        if not np.any(self.xi != 0):
            raise ValueError("loading is identically zero")


@dataclass
class SimDesign:
    """Parameters of one of the two simulation settings.

    ``kind`` is ``"lm_ar"`` (Gaussian AR(1) covariates, heteroscedastic linear
    response) or ``"glm_rademacher"`` (block covariance, Rademacher covariates,
    two-component logistic mixture response).
    """

    kind: str
    n: int
    p: int
    loading_kind: str = "first"
    q: float = 0.01
    gamma_star: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if self.kind not in ("lm_ar", "glm_rademacher"):
            raise ValueError(f"unknown design kind {self.kind!r}")
        if self.loading_kind not in ("first", "second"):
            raise ValueError(f"unknown loading kind {self.loading_kind!r}")
        if self.p <= 5:
            raise ValueError("designs need p > 5")
        if self.n < 20:
            raise ValueError("designs need n >= 20")
        if self.q < 0:
            raise ValueError("tail scale q must be nonnegative")
        if self.gamma_star is None:
            head = LM_GAMMA_HEAD if self.kind == "lm_ar" else GLM_GAMMA_HEAD
            self.gamma_star = np.concatenate([head, np.zeros(self.p - 5)])
        self.gamma_star = np.asarray(self.gamma_star, dtype=float)
        if self.gamma_star.shape != (self.p,):
            raise ValueError("gamma_star must have length p")

    @property
    def family(self) -> str:
        return "square" if self.kind == "lm_ar" else "logistic"

    def covariance(self) -> np.ndarray:
        if self.kind == "lm_ar":
            return make_ar_covariance(self.p, 0.3)
        return make_block_covariance(self.p)


DESIGN_ALIASES = {"lm": "lm_ar", "lm_ar": "lm_ar", "glm": "glm_rademacher", "glm_rademacher": "glm_rademacher"}

# desk-scale presets fit a laptop budget; the full-size ones match the published tables
PRESETS = {
    "lm-desk": dict(design="lm", n=400, p=100, q=0.01, loading="first"),
    "glm-desk": dict(design="glm", n=300, p=60, q=0.05, loading="first"),
    "lm-paper": dict(design="lm", n=500, p=400, q=0.01, loading="first"),
    "glm-paper": dict(design="glm", n=300, p=300, q=0.05, loading="first"),
}


# ---------------------------------------------------------------------------
# covariances
# ---------------------------------------------------------------------------

def make_ar_covariance(p: int, base: float) -> np.ndarray:
    """Toeplitz matrix with entries ``base ** |i - j|``."""
    if p < 1:
        raise ValueError("p must be positive")
    if not 0 <= base < 1:
        raise ValueError("base must lie in [0, 1)")
    idx = np.arange(p)
    # 0.0 ** 0 == 1.0, so base 0 gives the identity
    return np.power(float(base), np.abs(idx[:, None] - idx[None, :]))


def make_block_covariance(p: int) -> np.ndarray:
    """Two-block matrix ``5 * 0.1 ** |i - j|`` on {1..5} and {6..p}, zero across blocks."""
    if p <= 5:
        raise ValueError("block covariance needs p > 5")
    idx = np.arange(p)
    S = 5.0 * np.power(0.1, np.abs(idx[:, None] - idx[None, :]))
    head = idx < 5
    S[np.ix_(head, ~head)] = 0.0
    S[np.ix_(~head, head)] = 0.0
    return S


def symmetric_sqrt(Sigma, tol: float = 1e-10) -> np.ndarray:
    Sigma = check_matrix(Sigma, "Sigma")
    evals, evecs = np.linalg.eigh((Sigma + Sigma.T) / 2)
    scale = max(1.0, float(np.abs(evals).max(initial=0.0)))
    if evals.min(initial=0.0) < -tol * scale:
        raise ValueError(f"Sigma has a negative eigenvalue {evals.min():.3g}")
    evals = np.clip(evals, 0.0, None)
    return (evecs * np.sqrt(evals)) @ evecs.T


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

def sample_gaussian_design(n: int, Sigma, seed: SeedLike) -> np.ndarray:
    """Rows i.i.d. N(0, Sigma) via the Cholesky factor."""
    Sigma = check_matrix(Sigma, "Sigma")
    try:
        L = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError("Sigma is not positive definite") from exc
    rng = as_generator(seed, "design")
    Z = rng.standard_normal((n, Sigma.shape[0]))
    return Z @ L.T


def sample_rademacher_design(n: int, Sigma, seed: SeedLike) -> np.ndarray:
    """Rows ``Sigma^{1/2} z`` with ``z`` i.i.d. +-1, using the symmetric root."""
    R = symmetric_sqrt(Sigma)
    rng = as_generator(seed, "design")
    Z = 2.0 * rng.integers(0, 2, size=(n, R.shape[0])) - 1.0
    return Z @ R  # R is symmetric


def gen_lm_response(X, gamma_star, seed: SeedLike) -> np.ndarray:
    """Linear signal plus noise ``X_1^2 e_1 + X_4^2 e_2`` (misspecified variance)."""
    X = check_matrix(X, "X")
    if X.shape[1] < 4:
        raise ValueError("the linear design needs at least 4 covariates")
    rng = as_generator(seed, "noise")
    eps = rng.standard_normal((X.shape[0], 2))
    return X @ np.asarray(gamma_star, float) + X[:, 0] ** 2 * eps[:, 0] + X[:, 3] ** 2 * eps[:, 1]


def mixture_probability(eta, offset: float = 2.0) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    return 0.5 * _sigmoid(eta - offset) + 0.5 * _sigmoid(eta + offset)


def gen_glm_response(X, gamma_star, seed: SeedLike, offset: float = 2.0) -> np.ndarray:
    X = check_matrix(X, "X")
    prob = mixture_probability(X @ np.asarray(gamma_star, float), offset)
    rng = as_generator(seed, "noise")
    return (rng.random(X.shape[0]) < prob).astype(float)


def gen_loading(design: SimDesign, seed: SeedLike) -> Loading:
    """Fixed 5-entry head plus a Gaussian tail of scale ``q``."""
    head = np.array(LOADING_HEADS[(design.kind, design.loading_kind)])
    rng = as_generator(seed, "loading")
    tail = design.q * rng.standard_normal(design.p - 5)
    return Loading(np.concatenate([head, tail]))


def _sigmoid(t):
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def read_matrix(path) -> np.ndarray:
    """Read a comma separated numeric grid; a non-numeric first row is taken as a header."""
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
    skip = 0
    try:
        [float(tok) for tok in first.strip().split(",") if tok.strip()]
    except ValueError:
        skip = 1
    A = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    return check_matrix(A, str(path))


def read_vector(path) -> np.ndarray:
    A = read_matrix(path)
    if 1 not in A.shape:
        raise ValueError(f"{path}: expected a single row or column, got shape {A.shape}")
    return A.ravel()


def write_matrix(path, A, header: Optional[list] = None) -> None:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    with Path(path).open("w") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for row in A:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
