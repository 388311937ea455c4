"""Desk-scale logistic-mixture coverage study (n=300, p=60)."""
from _study import run

if __name__ == "__main__":
    run("glm-desk", "results/glm_study", __doc__)
