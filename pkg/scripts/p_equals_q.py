"""Critic scores when the generator is the data distribution.

Expected optima: GC -2 log 2, LS -1/2 (a=0, b=1), IW 0, MMD ~0.
"""

import argparse
import math

from critic_bench import experiments as E
from critic_bench import metrics as M
from critic_bench.data import CorruptionSpec, default_distribution
from critic_bench.models import GeneratorModel

OPTIMA = {"GC": -2 * math.log(2), "LS": -0.5, "IW": 0.0, "MMD": 0.0}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()
    s = E.build_splits({})
    gen = GeneratorModel.analytic(default_distribution(), CorruptionSpec("intensity-shift", 0.0))
    for kind, opt in OPTIMA.items():
        r = M.divergence_computation(kind, (s["train"], s["test"]), gen, M.MetricSpec(kind, seeds=list(range(args.seeds))))
        print(f"{kind:>4}: {r.mean:+.4f} ± {r.std:.4f}   optimum {opt:+.4f}")


if __name__ == "__main__":
    main()
