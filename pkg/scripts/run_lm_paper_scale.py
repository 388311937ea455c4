"""Full-size linear-model study (n=500, p=400). Slow."""
from _study import run

if __name__ == "__main__":
    run("lm-paper", "results/lm_paper_scale", __doc__)
