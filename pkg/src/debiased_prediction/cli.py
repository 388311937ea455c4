"""Command line entry point: ``infer``, ``simulate`` and ``target-beta``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .data_model import PRESETS
from .targets import glm_target_beta, glm_target_beta_newton

# the solver stack (numba, scipy, highspy) is imported inside the commands that
# need it, so ``target-beta`` stays fast to launch


def _add_infer(sub):
    p = sub.add_parser("infer", help="debiased prediction interval for one dataset and loading")
    p.add_argument("--x", required=True, help="CSV design matrix (n rows, p columns)")
    p.add_argument("--y", required=True, help="CSV response vector")
    p.add_argument("--loading", required=True, help="CSV loading vector of length p")
    p.add_argument("--family", choices=["lm", "logistic"], default="lm")
    p.add_argument("--method", choices=["clime", "two-stage"], default="clime")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--rho-mult", type=float, default=1.0)
    p.add_argument("--split-ratio", type=float, default=0.5)
    p.add_argument("--cv-folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the JSON result here instead of stdout")
    p.add_argument("--dump-precision", metavar="DIR",
                   help="also write the two fold-wise precision estimates as CSV")


def _add_simulate(sub):
    p = sub.add_parser("simulate", help="Monte-Carlo coverage study")
    p.add_argument("--config", help="JSON file with the same keys as the flags below")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--design", choices=["lm", "glm"])
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--loading", choices=["first", "second"])
    p.add_argument("--q", type=float)
    p.add_argument("--reps", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--method", choices=["clime", "two-stage"])
    p.add_argument("--rho-mult", type=float)
    p.add_argument("--split-ratio", type=float)
    p.add_argument("--cv-folds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--workers", type=int, default=1, help="worker processes (results do not depend on it)")


def _add_target(sub):
    p = sub.add_parser("target-beta", help="print the target coefficients of a design")
    p.add_argument("--design", choices=["glm"], default="glm")
    p.add_argument("--offset", type=float, default=2.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="debiased-prediction", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_infer(sub)
    _add_simulate(sub)
    _add_target(sub)
    return parser


def cmd_infer(args) -> int:
    from .data_model import Dataset, read_matrix, read_vector
    from .inference import InferenceConfig, run_pipeline

    X = read_matrix(args.x)
    y = read_vector(args.y)
    xi = read_vector(args.loading)
    data = Dataset(X, y, args.family)
    cfg = InferenceConfig(method=args.method, alpha=args.alpha, rho_mult=args.rho_mult,
                          split_ratio=args.split_ratio, cv_folds=args.cv_folds, seed=args.seed)
    state = run_pipeline(data, xi, cfg)
    text = state.result.to_json() + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.dump_precision:
        out = Path(args.dump_precision)
        out.mkdir(parents=True, exist_ok=True)
        state.M_J.to_csv(out / "precision_J.csv")
        state.M_Jc.to_csv(out / "precision_Jc.csv")
    return 0


def _study_config(args):
    from .simulation import StudyConfig

    raw = {}
    if args.config:
        raw.update(json.loads(Path(args.config).read_text()))
    flags = {k: v for k, v in vars(args).items()
             if k not in ("config", "command", "verbose", "workers", "func") and v is not None}
    raw.update(flags)
    return StudyConfig.from_mapping(raw)


def cmd_simulate(args) -> int:
    from .simulation import run_study, write_outputs

    config = _study_config(args)
    out_dir = config.out_path or "study_output"
    t0 = time.perf_counter()
    summary, records = run_study(config, workers=args.workers)
    paths = write_outputs(summary, records, out_dir, config)
    logging.getLogger(__name__).info("study finished in %.1f s", time.perf_counter() - t0)
    print(json.dumps({"summary": str(paths["summary"]), "replications": str(paths["replications"]),
                      "cov_prop": summary.cov_prop, "bias": summary.bias, "sd": summary.sd,
                      "ci_length": summary.ci_length, "failures": summary.failures}, indent=2))
    return 0


def cmd_target(args) -> int:
    gd = glm_target_beta(offset=args.offset)
    newton = glm_target_beta_newton(offset=args.offset)
    print(json.dumps({"beta_bar_head": gd.tolist(), "newton": newton.tolist(),
                      "max_abs_diff": float(np.abs(gd - newton).max())}, indent=2))
    return 0


COMMANDS = {"infer": cmd_infer, "simulate": cmd_simulate, "target-beta": cmd_target}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError, RuntimeError) as exc:
        from .inference import InferenceError

        if isinstance(exc, RuntimeError) and not isinstance(exc, InferenceError):
            raise
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
