"""Shared driver for the study scripts."""
import argparse
import json
import time

from debiased_prediction.simulation import StudyConfig, run_study, write_outputs


def run(preset: str, default_out: str, description: str) -> None:
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--method", default="clime", choices=["clime", "two-stage"])
    ap.add_argument("--loading", default="first", choices=["first", "second"])
    ap.add_argument("--rho-mult", type=float, default=1.0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out-dir", default=default_out)
    args = ap.parse_args()

    cfg = StudyConfig.from_mapping({
        "preset": preset, "reps": args.reps, "seed": args.seed, "method": args.method,
        "loading": args.loading, "rho_mult": args.rho_mult, "out_path": args.out_dir,
    })
    t = time.perf_counter()
    summary, records = run_study(cfg, workers=args.workers)
    paths = write_outputs(summary, records, args.out_dir, cfg)
    print(json.dumps({"seconds": round(time.perf_counter() - t, 1),
                      "summary": summary.__dict__, "files": {k: str(v) for k, v in paths.items()}},
                     indent=2, default=float))
