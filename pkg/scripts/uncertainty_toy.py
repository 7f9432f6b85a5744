"""Classic and distance-augmented forest uncertainty on 1-D toy data.

Writes an SVG with the forest mean and both one-std bands over two
clusters of samples, and prints the values at the gap midpoint.

    python scripts/uncertainty_toy.py --out uncertainty.svg
"""

import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from bebop.surrogate import ForestConfig, fit


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="uncertainty.svg")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lam-scale", type=float, default=0.5)
    args = ap.parse_args(argv)

    x = np.concatenate([np.linspace(0.05, 0.2, 4), np.linspace(0.8, 0.95, 4)])
    y = np.sin(6 * x)
    forest = fit(x[:, None], y, ForestConfig(lam_scale=args.lam_scale), seed=args.seed)
    grid = np.linspace(0, 1, 401)[:, None]
    mean = forest.predict_mean(grid)
    classic = forest.predict_std_classic(grid)
    augmented = forest.predict_std_augmented(grid)

    mid = np.array([[0.5]])
    print(f"lambda {forest.lam:.4f}")
    print(f"gap midpoint: classic std {forest.predict_std_classic(mid)[0]:.4f}, augmented std {forest.predict_std_augmented(mid)[0]:.4f}")
    print(f"max at samples: classic {forest.predict_std_classic(x[:, None]).max():.4f}, augmented {forest.predict_std_augmented(x[:, None]).max():.4f}")

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5), sharey=True)
    for ax, std, title in ((axes[0], classic, "across-tree std"), (axes[1], augmented, "with distance term")):
        ax.plot(grid[:, 0], np.sin(6 * grid[:, 0]), color="grey", ls=":", label="truth")
        ax.plot(grid[:, 0], mean, color="C0", label="forest mean")
        ax.fill_between(grid[:, 0], mean - std, mean + std, color="C0", alpha=0.25)
        ax.scatter(x, y, color="k", s=12, zorder=3)
        ax.set_title(title)
        ax.set_xlabel("x")
    axes[0].legend(loc="lower left")
    fig.tight_layout()
    with matplotlib.rc_context({"svg.hashsalt": "bebop"}):
        fig.savefig(args.out, format="svg", metadata={"Date": None})
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
