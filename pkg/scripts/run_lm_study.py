"""Desk-scale linear-model coverage study (n=400, p=100)."""
from _study import run

if __name__ == "__main__":
    run("lm-desk", "results/lm_study", __doc__)
