"""Calibrate three intensity-shift levels to C2ST targets, then check that
every metric ranks them in corruption order across repeated harness runs.

    python scripts/rank_consistency.py --reps 10
"""

import argparse
import json
import time

from critic_bench import experiments as E
from critic_bench.data import default_distribution

KINDS = ["GC", "LS", "IW", "MMD", "FID"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--targets", type=float, nargs="+", default=[0.55, 0.7, 0.9])
    ap.add_argument("--iterations", type=int, help="critic iterations (default: package default)")
    args = ap.parse_args()

    t0 = time.perf_counter()
    test = E.build_splits({})["test"]
    levels = E.calibrate_levels(default_distribution(), test, "intensity-shift", tuple(args.targets), repeats=2, steps=10)
    for lv in levels:
        print(f"target {lv['target']:.2f}: level {lv['level']:.4f} (accuracy {lv['accuracy']:.3f})")
    names = [f"L{i}" for i in range(len(levels))]
    gens = [{"name": n, "corruption": {"kind": "intensity-shift", "level": lv["level"]}} for n, lv in zip(names, levels)]
    metric = {"iterations": args.iterations} if args.iterations else {}

    agree = 0
    for rep in range(args.reps):
        cfg = E.load_config({"experiment": "rank", "splits": {"seed": rep}, "generators": gens,
                             "metrics": [{"kind": k, **metric} for k in KINDS], "seeds": [rep]})
        table = next(r for r in E.cmd_rank(cfg).rows if r["type"] == "rank")["table"]
        ok = all(table["rankings"][k] == names for k in KINDS) and all(t == 1.0 for t in table["kendall_tau"].values())
        agree += ok
        print(f"rep {rep}: {'agree' if ok else 'DISAGREE'} {json.dumps(table['rankings'])}")
    print(f"{agree}/{args.reps} repetitions in full agreement ({time.perf_counter() - t0:.0f}s)")


if __name__ == "__main__":
    main()
