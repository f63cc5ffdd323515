"""critic-bench command line: ``critic-bench <command> --config C --out R.jsonl``.

Exit codes: 0 success, 1 some cells failed (partial results written),
2 configuration or file error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import sys
import time
from pathlib import Path

from . import __version__
from . import experiments as E
from .data import SampleFormatError, SpecError
from .rng import RNG_ALGORITHM

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2
WORKERS_ENV = "CRITIC_BENCH_WORKERS"

# subcommand -> accepted "experiment" values in the config
EXPERIMENTS = {
    "eval": ("eval",),
    "rank": ("rank",),
    "sweep": tuple(f"sweep-{a}" for a in E.SWEEP_AXES),
    "robustness": ("robustness-validation-size",),
    "train-gan": ("train-gan",),
    "calibrate": ("calibrate",),
    "gen-data": ("gen-data",),
    "stats": ("stats",),
}
CONFIG_OPTIONAL = {"train-gan", "calibrate", "gen-data", "stats"}


def _clean(obj):
    """JSON cannot carry NaN/inf; write them as null / signed strings."""
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dumps(row: dict) -> str:
    return json.dumps(_clean(row), sort_keys=True, allow_nan=False)


def parse_seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise E.ConfigError(f"--seeds: expected comma-separated integers, got {text!r}") from None
    if not seeds:
        raise E.ConfigError("--seeds: empty list")
    if len(set(seeds)) != len(seeds):
        raise E.ConfigError(f"--seeds: duplicates in {seeds}")
    return sorted(seeds)


def resolve_workers(flag: int | None, cfg_value: int | None) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise E.ConfigError(f"{WORKERS_ENV}: expected an integer, got {env!r}") from None
    else:
        n = flag or cfg_value or 1
    if n < 1:
        raise E.ConfigError(f"workers: must be >= 1, got {n}")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="critic-bench", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"critic-bench {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--out", help="output JSONL (default: config 'output' or stdout)")
        sp.add_argument("--seeds", help="comma-separated seeds, overriding the config")
        sp.add_argument("--workers", type=int, help=f"worker processes ({WORKERS_ENV} overrides)")
        sp.add_argument("--csv", action="store_true", help="also write a CSV summary next to --out")
        if name == "gen-data":
            sp.add_argument("--out-dir", default="data", help="directory for the .cbs split files")
        if name == "train-gan":
            sp.add_argument("--checkpoint", help="generator checkpoint path (.cbm)")
        if name == "stats":
            sp.add_argument("--input", help="results JSONL to test")
            sp.add_argument("--test", choices=("wilcoxon", "fisher"))
            sp.add_argument("--a", help="GENERATOR:METRIC for a single Wilcoxon test")
            sp.add_argument("--b", help="GENERATOR:METRIC for a single Wilcoxon test")
            sp.add_argument("--counts", nargs="+", help="agreement counts like 122/131 (Fisher)")
    return p


def _csv_rows(rows: list[dict]) -> list[dict]:
    out = []
    for r in rows:
        if r.get("type") == "result":
            res = r["result"]
            out.append({"generator": r["generator"], "metric": r["metric"], "mean": res["mean"],
                        "std": res["std"], "n_seeds": len(res["seeds"]), "failures": len(res["failures"])})
        elif r.get("type") in ("test", "fisher"):
            out.append({k: r.get(k) for k in ("test", "a", "b", "statistic", "p_value", "method")})
        elif r.get("type") == "agreement":
            out.append({k: r[k] for k in ("metric", "n_small", "n_large", "agreed", "total", "fraction")})
    return out


def format_table(rows: list[dict]) -> str:
    """Plain-text table of test rows, for humans."""
    head = f"{'test':<9} {'a':<24} {'b':<24} {'statistic':>12} {'p_value':>10}  method"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(
            f"{r.get('test', ''):<9} {str(r.get('a', '')):<24} {str(r.get('b', '')):<24} "
            f"{r.get('statistic', math.nan):>12.6g} {r.get('p_value', math.nan):>10.4g}  {r.get('method', '')}"
        )
    return "\n".join(lines)


def write_output(rows: list[dict], meta: dict, out: str | None, want_csv: bool) -> None:
    lines = [dumps(r) for r in rows] + [dumps(meta)]
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    if want_csv:
        table = _csv_rows(rows)
        path = Path(out).with_suffix(".csv") if out else None
        fields = list(dict.fromkeys(k for r in table for k in r))
        fh = open(path, "w", newline="") if path else sys.stdout
        try:
            w = csv.DictWriter(fh, fieldnames=fields)
            w.writeheader()
            w.writerows(_clean(table))
        finally:
            if path:
                fh.close()


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        cmd = args.command
        if args.config:
            cfg = E.load_config(args.config)
            if cfg.experiment not in EXPERIMENTS[cmd]:
                raise E.ConfigError(
                    f"experiment: config says {cfg.experiment!r}, but command {cmd!r} expects one of {EXPERIMENTS[cmd]}"
                )
        elif cmd in CONFIG_OPTIONAL:
            cfg = E.load_config({"experiment": EXPERIMENTS[cmd][0]})
        else:
            raise E.ConfigError(f"{cmd}: --config is required")
        if args.seeds:
            cfg.seeds = parse_seeds(args.seeds)
            # the flag wins over every seed list in the file
            cfg.raw = {**cfg.raw, "seeds": cfg.seeds}
            if "metrics" in cfg.raw:
                cfg.raw["metrics"] = [{k: v for k, v in m.items() if k != "seeds"} for m in cfg.raw["metrics"]]
        workers = resolve_workers(args.workers, cfg.raw.get("workers"))
        out = args.out or cfg.output

        if cmd == "eval":
            res = E.cmd_eval(cfg, workers)
        elif cmd == "rank":
            res = E.cmd_rank(cfg, workers)
        elif cmd == "sweep":
            res = E.cmd_sweep(cfg, workers)
        elif cmd == "robustness":
            res = E.cmd_robustness(cfg, workers)
        elif cmd == "calibrate":
            res = E.cmd_calibrate(cfg, workers)
        elif cmd == "gen-data":
            res = E.cmd_gen_data(cfg, args.out_dir)
        elif cmd == "train-gan":
            res = E.cmd_train_gan(cfg, args.checkpoint)
        else:
            st = cfg.section("stats")
            source = args.input or st.get("input")
            rows = []
            if source:
                if not Path(source).exists():
                    raise E.ConfigError(f"stats input not found: {source}")
                rows = E.read_jsonl(source)
            res = E.cmd_stats(rows, args.test or st.get("test", "wilcoxon"), args.a or st.get("a"),
                              args.b or st.get("b"), args.counts or st.get("counts"))
    except (E.ConfigError, SpecError, SampleFormatError, FileNotFoundError) as exc:
        print(f"critic-bench: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if cmd == "stats":
        print(format_table(res.rows), file=sys.stderr)
    # rows without a per-cell config carry the whole (effective) config
    snapshot = {**cfg.raw, "seeds": cfg.seeds}
    rows = [r if "cell" in r else {**r, "config": snapshot} for r in res.rows]
    meta = {
        "type": "meta",
        "command": cmd,
        "experiment": cfg.experiment,
        "version": __version__,
        "rng": RNG_ALGORITHM,
        "seeds": cfg.seeds,
        "workers": workers,
        "config": cfg.raw,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "wall_clock_s": time.perf_counter() - t0,
        "partial": res.failed,
    }
    write_output(rows, meta, out, args.csv)
    if res.failed:
        print("critic-bench: some cells failed; partial results written", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
