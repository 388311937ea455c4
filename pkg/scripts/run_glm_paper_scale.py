"""Full-size logistic-mixture study (n=300, p=300). Slow."""
from _study import run

if __name__ == "__main__":
    run("glm-paper", "results/glm_paper_scale", __doc__)
