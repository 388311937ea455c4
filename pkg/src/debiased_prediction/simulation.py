"""Monte-Carlo coverage studies for the two simulation settings."""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .data_model import (
    DESIGN_ALIASES, PRESETS, Dataset, Seed, SimDesign, gen_glm_response, gen_lm_response, gen_loading,
    sample_gaussian_design, sample_rademacher_design,
)
from .inference import InferenceConfig, InferenceError, infer
from .penalized import DegenerateDataError
from .precision import PrecisionError, canonical_method
from .targets import (  # noqa: F401  re-exported
    StudyError, glm_target_beta, glm_target_beta_newton, lm_target_beta, population_gradient,
    population_loss, target_beta,
)

log = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# configuration and records
# ---------------------------------------------------------------------------

@dataclass
class StudyConfig:
    design: SimDesign
    reps: int = 200
    alpha: float = 0.05
    method: str = "clime"
    rho_mult: float = 1.0
    split_ratio: float = 0.5
    cv_folds: int = 10
    seed: int = 42
    out_path: Optional[str] = None
    grid_size: int = 100

    def __post_init__(self):
        self.method = canonical_method(self.method)
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        self.inference_config()  # validates the remaining knobs

    def inference_config(self) -> InferenceConfig:
        return InferenceConfig(method=self.method, alpha=self.alpha, rho_mult=self.rho_mult,
                               split_ratio=self.split_ratio, cv_folds=self.cv_folds,
                               grid_size=self.grid_size, seed=self.seed)

    @classmethod
    def from_mapping(cls, raw: dict) -> "StudyConfig":
        """Build from flat keys as used on the command line (dashes or underscores)."""
        d = {k.replace("-", "_"): v for k, v in raw.items() if v is not None}
        preset = d.pop("preset", None)
        if preset is not None:
            d = {**PRESETS[preset], **d}
        kind = DESIGN_ALIASES[d.pop("design", "lm")]
        defaults = PRESETS["lm-desk" if kind == "lm_ar" else "glm-desk"]
        design = SimDesign(kind, int(d.pop("n", defaults["n"])), int(d.pop("p", defaults["p"])),
                           loading_kind=d.pop("loading", "first"), q=float(d.pop("q", defaults["q"])))
        if "out_dir" in d:
            d["out_path"] = d.pop("out_dir")
        known = {f.name for f in fields(cls)} - {"design"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown study keys: {sorted(unknown)}")
        return cls(design=design, **d)

    def to_dict(self) -> dict:
        return {"design": "lm" if self.design.kind == "lm_ar" else "glm", "n": self.design.n,
                "p": self.design.p, "loading": self.design.loading_kind, "q": self.design.q,
                "reps": self.reps, "alpha": self.alpha, "method": self.method,
                "rho_mult": self.rho_mult, "split_ratio": self.split_ratio,
                "cv_folds": self.cv_folds, "grid_size": self.grid_size, "seed": self.seed}


CSV_COLUMNS = ("rep", "point", "plug_in", "v_hat", "ci_low", "ci_high", "covered", "truth")


@dataclass
class ReplicationRecord:
    rep: int
    point: float
    plug_in: float
    v_hat: float
    ci_low: float
    ci_high: float
    covered: bool
    truth: float
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class StudySummary:
    bias: float
    sd: float
    cov_prop: float
    ci_length: float
    lasso_bias: float
    lasso_sd: float
    truth: float
    reps: int
    failures: int = 0
    sd_defined: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "StudySummary":
        return cls(**{f.name: d[f.name] for f in fields(cls)})


@dataclass
class StudyContext:
    """Quantities shared by every replication: the fixed loading and the truth."""

    xi: np.ndarray
    beta_bar: np.ndarray
    truth: float = field(init=False)

    def __post_init__(self):
        self.truth = float(self.xi @ self.beta_bar)


def study_context(config: StudyConfig) -> StudyContext:
    xi = gen_loading(config.design, Seed(config.seed).stream("loading", 0)).xi
    return StudyContext(xi, target_beta(config.design))


def simulate_dataset(design: SimDesign, seed: int, rep: int) -> Dataset:
    root = Seed(seed)
    Sigma = design.covariance()
    if design.kind == "lm_ar":
        X = sample_gaussian_design(design.n, Sigma, root.stream("design", rep))
        y = gen_lm_response(X, design.gamma_star, root.stream("noise", rep))
    else:
        X = sample_rademacher_design(design.n, Sigma, root.stream("design", rep))
        y = gen_glm_response(X, design.gamma_star, root.stream("noise", rep))
    return Dataset(X, y, design.family)


# ---------------------------------------------------------------------------
# replication loop
# ---------------------------------------------------------------------------

def run_replication(config: StudyConfig, rep_index: int, context: Optional[StudyContext] = None) -> ReplicationRecord:
    context = context or study_context(config)
    truth = context.truth
    try:
        data = simulate_dataset(config.design, config.seed, rep_index)
        res = infer(data, context.xi, config.inference_config(), stream=rep_index)
    except (InferenceError, PrecisionError, DegenerateDataError) as exc:
        log.warning("replication %d failed: %s", rep_index, exc)
        nan = float("nan")
        return ReplicationRecord(rep_index, nan, nan, nan, nan, nan, False, truth, str(exc))
    covered = bool(res.ci_low <= truth <= res.ci_high)
    return ReplicationRecord(rep_index, res.point, res.plug_in, res.v_hat, res.ci_low,
                             res.ci_high, covered, truth)


def _run_one(args):
    config, rep, context = args
    return run_replication(config, rep, context)


def run_replications(config: StudyConfig, workers: int = 1) -> list[ReplicationRecord]:
    context = study_context(config)
    jobs = [(config, r, context) for r in range(config.reps)]
    if workers <= 1:
        records = []
        for job in jobs:
            records.append(_run_one(job))
            log.info("replication %d/%d done", job[1] + 1, config.reps)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_one, jobs, chunksize=max(1, config.reps // (4 * workers))))
    return sorted(records, key=lambda r: r.rep)


def summarize(records: list[ReplicationRecord]) -> StudySummary:
    ok = sorted((r for r in records if not r.failed), key=lambda r: r.rep)
    failures = len(records) - len(ok)
    if not ok:
        raise StudyError(f"all {len(records)} replications failed")
    truth = ok[0].truth
    point = np.array([r.point for r in ok])
    plug = np.array([r.plug_in for r in ok])
    width = np.array([r.ci_high - r.ci_low for r in ok])
    R = len(ok)
    sd_defined = R > 1
    return StudySummary(
        bias=float(abs(point.mean() - truth)),
        sd=float(point.std(ddof=1)) if sd_defined else 0.0,
        cov_prop=sum(r.covered for r in ok) / R,
        ci_length=float(width.mean()),
        lasso_bias=float(abs(plug.mean() - truth)),
        lasso_sd=float(plug.std(ddof=1)) if sd_defined else 0.0,
        truth=truth, reps=R, failures=failures, sd_defined=sd_defined,
    )


def run_study(config: StudyConfig, workers: int = 1) -> tuple[StudySummary, list[ReplicationRecord]]:
    records = run_replications(config, workers)
    return summarize(records), records


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_outputs(summary: StudySummary, records: list[ReplicationRecord], out_dir,
                  config: Optional[StudyConfig] = None) -> dict:
    """Write ``replications.csv`` and ``summary.json`` (plus ``failures.csv`` if any failed).

    Only successful replications go to ``replications.csv`` so every row is
    numeric; failed ones are listed with their error message separately.
    """
    out = Path(out_dir)
    paths = {"replications": out / "replications.csv", "summary": out / "summary.json"}
    ok = sorted((r for r in records if not r.failed), key=lambda r: r.rep)
    bad = sorted((r for r in records if r.failed), key=lambda r: r.rep)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with paths["replications"].open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in ok:
                w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
        if bad:
            paths["failures"] = out / "failures.csv"
            with paths["failures"].open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("rep", "error"))
                for r in bad:
                    w.writerow((r.rep, r.error))
        payload = {"summary": asdict(summary)}
        if config is not None:
            payload["config"] = config.to_dict()
        paths["summary"].write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"could not write study output under {out}: {exc}") from exc
    return paths


def read_summary(path) -> StudySummary:
    return StudySummary.from_dict(json.loads(Path(path).read_text())["summary"])

