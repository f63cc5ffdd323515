"""IW critic score for N(0,1) against N(shift,1); the true W1 equals the shift."""

import argparse

from critic_bench import metrics as M
from critic_bench.data import CorruptionSpec, gaussian_mixture, split
from critic_bench.models import GeneratorModel


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--shifts", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    ap.add_argument("--penalty", type=float, nargs="+", default=[10.0])
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()
    dist = gaussian_mixture([[0.0]], [[[1.0]]])
    train, _, test = split(dist, [10_000, 2000, 2000], seed=1)
    for lam in args.penalty:
        for shift in args.shifts:
            gen = GeneratorModel.analytic(dist, CorruptionSpec("intensity-shift", shift))
            spec = M.MetricSpec("IW", penalty_weight=lam, seeds=list(range(args.seeds)))
            r = M.divergence_computation("IW", (train, test), gen, spec)
            print(f"lambda {lam:>5g}  shift {shift:.2f}: IW {r.mean:.4f} ± {r.std:.4f}")


if __name__ == "__main__":
    main()
