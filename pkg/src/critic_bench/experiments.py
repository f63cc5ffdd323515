"""Experiment orchestration: config loading, cell evaluation, and the
rank / sweep / robustness / calibration designs. Every runner returns plain
JSON-ready rows; the CLI owns file output and exit codes."""

from __future__ import annotations

import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import metrics as M
from .data import (
    CorruptionSpec,
    DistributionSpec,
    SampleSet,
    SpecError,
    default_distribution,
    load_samples,
    save_samples,
    split,
)
from .models import (
    CriticArch,
    GeneratorArch,
    GeneratorModel,
    TrainConfig,
    TrainingDiverged,
    default_critic_arch,
    generate,
    load_checkpoint,
    save_checkpoint,
    train_toy_gan,
)
from .reference import c2st, fid_samples, fit_classifier, inception_style_score
from .rng import derive_seed
from .stats import agreement_fraction, fisher_exact_two_sided, preference_sign, rank_table, wilcoxon_rank_sum

DEFAULT_SPLITS = {"train": 10000, "validation": 2000, "test": 2000, "seed": 0}
SWEEP_AXES = ("capacity", "noise-dim", "update-ratio", "train-size")


class ConfigError(ValueError):
    """Bad configuration or missing input file (CLI exit code 2)."""


def config_schema() -> dict:
    text = resources.files("critic_bench").joinpath("config_schema.json").read_text()
    return json.loads(text)


@dataclass
class ExperimentConfig:
    experiment: str
    raw: dict
    seeds: list[int] = field(default_factory=lambda: [0])
    output: str | None = None

    def section(self, name: str) -> dict:
        return dict(self.raw.get(name, {}))


def load_config(source: str | os.PathLike | dict) -> ExperimentConfig:
    if isinstance(source, dict):
        raw = source
    else:
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    try:
        jsonschema.validate(raw, config_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    seeds = sorted(raw.get("seeds", [0]))
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"seeds: duplicates in {seeds}")
    return ExperimentConfig(raw["experiment"], raw, seeds, raw.get("output"))


# building blocks


def build_distribution(d: dict | None) -> DistributionSpec:
    if not d or d.get("preset") == "ring8":
        return default_distribution()
    try:
        return DistributionSpec.from_dict(d)
    except SpecError as exc:
        raise ConfigError(f"distribution.{exc}") from None


def build_splits(raw: dict) -> dict[str, SampleSet]:
    files = raw.get("data_files", {})
    sizes = {**DEFAULT_SPLITS, **raw.get("splits", {})}
    dist = build_distribution(raw.get("distribution"))
    roles = ("train", "validation", "test")
    drawn = split(dist, [sizes[r] for r in roles], sizes["seed"], roles)
    out = dict(zip(roles, drawn))
    for role, path in files.items():
        if not Path(path).exists():
            raise ConfigError(f"data file not found: {path}")
        out[role] = load_samples(path).with_role(role)
    return out


def build_generator(g: dict, raw: dict) -> GeneratorModel:
    if "checkpoint" in g:
        path = Path(g["checkpoint"])
        if not path.exists():
            raise ConfigError(f"checkpoint not found: {path}")
        model, _ = load_checkpoint(path)
        if not isinstance(model, GeneratorModel):
            raise ConfigError(f"{path}: checkpoint holds a critic, not a generator")
        return model
    dist = build_distribution(g.get("distribution", raw.get("distribution")))
    corr = CorruptionSpec.from_dict(g["corruption"]) if "corruption" in g else None
    return GeneratorModel.analytic(dist, corr)


def metric_specs(raw: dict, seeds: list[int]) -> list[M.MetricSpec]:
    specs = []
    for m in raw.get("metrics", []):
        m = dict(m)
        m.setdefault("seeds", list(seeds))
        try:
            specs.append(M.MetricSpec(**m))
        except SpecError as exc:
            raise ConfigError(f"metrics.{m['kind']}: {exc}") from None
    return specs


# cells


def reference_seed(kind: str, train: SampleSet, test: SampleSet, gen: GeneratorModel, spec: M.MetricSpec, seed: int):
    fake = generate(gen, spec.n_fake or test.n, derive_seed(seed, "eval-fake"))
    if kind == "FID":
        return fid_samples(test, fake), [], {"features": "raw"}
    if kind == "C2ST":
        acc = c2st(test, fake, spec.classifier, derive_seed(seed, "c2st-split"), k=spec.knn_k)
        return acc, [], {"classifier": spec.classifier}
    if kind == "IS":
        if train.labels is None:
            raise SpecError("train.labels: the IS classifier needs component labels")
        clf = fit_classifier(spec.classifier, train.data, train.labels, seed=derive_seed(seed, "is-clf"), k=spec.knn_k)
        return inception_style_score(clf.predict_proba(fake)), [], {"classifier": spec.classifier}
    raise SpecError(f"kind: {kind!r} not in {M.REFERENCE_KINDS}")


def _job(args):
    kind, train, test, gen, spec, seed = args
    try:
        if kind in M.ADVERSARIAL_KINDS:
            return M.run_seed(kind, train, test, gen, spec, seed), None
        return reference_seed(kind, train, test, gen, spec, seed), None
    except (TrainingDiverged, SpecError, ArithmeticError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def run_jobs(jobs: list, workers: int = 1) -> list:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_job, jobs, chunksize=1))
    return [_job(j) for j in jobs]


def assemble(kind: str, spec: M.MetricSpec, outs: list) -> M.MetricResult:
    scores, curves, extras, failures = [], [], [], {}
    for seed, (res, err) in zip(spec.seeds, outs):
        if err is not None:
            failures[seed] = err
            scores.append(math.nan)
            curves.append([])
            extras.append({})
        else:
            scores.append(float(res[0]))
            curves.append([float(v) for v in res[1]])
            extras.append(res[2])
    return M.MetricResult(kind, scores, list(spec.seeds), spec.better, spec.to_dict(), curves, failures, extras)


def evaluate_grid(
    generators: list[tuple[str, GeneratorModel]],
    specs: list[M.MetricSpec],
    train: SampleSet,
    test: SampleSet,
    workers: int = 1,
) -> dict[str, dict[str, M.MetricResult]]:
    """(generator x metric x seed) cells, gathered in deterministic order."""
    if any(s.kind in M.CRITIC_KINDS for s in specs):
        M._assert_disjoint(train, test)
    keys, jobs = [], []
    for name, gen in generators:
        for spec in specs:
            keys.append((name, spec))
            jobs.extend((spec.kind, train, test, gen, spec, s) for s in spec.seeds)
    outs = run_jobs(jobs, workers)
    results: dict[str, dict[str, M.MetricResult]] = {}
    pos = 0
    for name, spec in keys:
        chunk = outs[pos : pos + len(spec.seeds)]
        pos += len(spec.seeds)
        results.setdefault(name, {})[spec.kind] = assemble(spec.kind, spec, chunk)
    return results


def _cell_config(raw: dict, gen_cfg: dict, spec: M.MetricSpec) -> dict:
    return {
        "distribution": raw.get("distribution", {"preset": "ring8"}),
        "splits": {**DEFAULT_SPLITS, **raw.get("splits", {})},
        "data_files": raw.get("data_files", {}),
        "generator": gen_cfg,
        "metric": spec.to_dict(),
    }


def rerun_cell(cell: dict) -> M.MetricResult:
    """Recompute a result row from its embedded cell config."""
    raw = {k: cell[k] for k in ("distribution", "splits", "data_files") if cell.get(k)}
    splits = build_splits(raw)
    gen = build_generator(cell["generator"], raw)
    spec = M.MetricSpec.from_dict(cell["metric"])
    res = evaluate_grid([("g", gen)], [spec], splits["train"], splits["test"])
    return res["g"][spec.kind]


@dataclass
class RunOutput:
    rows: list[dict]
    failed: bool = False


def _generators(raw: dict) -> list[tuple[dict, GeneratorModel]]:
    gens = raw.get("generators") or [{"name": "level-0", "corruption": {"kind": "intensity-shift", "level": 0.0}}]
    names = [g["name"] for g in gens]
    if len(set(names)) != len(names):
        raise ConfigError("generators: names must be unique")
    return [(g, build_generator(g, raw)) for g in gens]


def cmd_eval(cfg: ExperimentConfig, workers: int = 1) -> RunOutput:
    raw = cfg.raw
    splits = build_splits(raw)
    gens = _generators(raw)
    specs = metric_specs(raw, cfg.seeds)
    if not specs:
        raise ConfigError("metrics: at least one metric required")
    results = evaluate_grid([(g["name"], m) for g, m in gens], specs, splits["train"], splits["test"], workers)
    rows, failed = [], False
    for g, _ in gens:
        for spec in specs:
            r = results[g["name"]][spec.kind]
            failed |= r.partial
            rows.append(
                {
                    "type": "result",
                    "experiment": cfg.experiment,
                    "generator": g["name"],
                    "metric": spec.kind,
                    "result": r.to_dict(),
                    "cell": _cell_config(raw, g, spec),
                }
            )
    return RunOutput(rows, failed)


def results_from_rows(rows: list[dict]) -> dict[str, dict[str, M.MetricResult]]:
    out: dict[str, dict[str, M.MetricResult]] = {}
    for row in rows:
        if row.get("type") == "result":
            out.setdefault(row["generator"], {})[row["metric"]] = M.MetricResult.from_dict(row["result"])
    return out


def adjacent_wilcoxon(results: dict[str, dict[str, M.MetricResult]], table) -> dict[str, list[dict]]:
    tests = {}
    for m in table.metrics:
        order = table.rankings[m]
        pairs = []
        for a, b in zip(order, order[1:]):
            xa, xb = results[a][m].ok_scores, results[b][m].ok_scores
            if xa.size and xb.size:
                t = wilcoxon_rank_sum(xa, xb)
                pairs.append({"better": a, "worse": b, **t.to_dict()})
        tests[m] = pairs
    return tests


def cmd_rank(cfg: ExperimentConfig, workers: int = 1) -> RunOutput:
    if len(cfg.raw.get("generators", [])) < 2:
        raise ConfigError("generators: rank needs at least 2 generators")
    out = cmd_eval(cfg, workers)
    results = results_from_rows(out.rows)
    table = rank_table(results)
    out.rows.append(
        {"type": "rank", "table": table.to_dict(), "wilcoxon": adjacent_wilcoxon(results, table)}
    )
    return out


# sweeps


def _sweep_point(axis: str, value, base: dict) -> dict:
    """Resolve one grid value into (train config, architectures, data size)."""
    p = dict(base)
    if axis == "capacity":
        fd, fg = (value, value) if not isinstance(value, list) else value
        p["critic_hidden"] = [max(1, int(round(h * fd))) for h in base["critic_hidden"]]
        p["gen_hidden"] = [max(1, int(round(h * fg))) for h in base["gen_hidden"]]
    elif axis == "noise-dim":
        p["noise_dim"] = int(value)
    elif axis == "update-ratio":
        d_steps, g_steps = value
        p["train"] = {**base["train"], "d_steps": int(d_steps), "g_steps": int(g_steps)}
    elif axis == "train-size":
        p["train_size"] = int(value)
    return p


def _train_and_score(point: dict, data: SampleSet, test: SampleSet, specs: list[M.MetricSpec], seed: int):
    tc = TrainConfig(**{**point["train"], "seed": seed})
    crit = default_critic_arch(tc.criterion)
    crit = CriticArch(tuple(point["critic_hidden"]), crit.activation, crit.head)
    garch = GeneratorArch(point["noise_dim"], tuple(point["gen_hidden"]))
    run = train_toy_gan(data, tc, crit, garch)
    scores = {}
    for spec in specs:
        s = M.MetricSpec(**{**spec.to_dict(), "seeds": [derive_seed(seed, "sweep-critic")]})
        if spec.kind in M.ADVERSARIAL_KINDS:
            scores[spec.kind] = M.run_seed(spec.kind, data.with_role("train"), test, run.generator, s, s.seeds[0])
        else:
            scores[spec.kind] = reference_seed(spec.kind, data, test, run.generator, s, s.seeds[0])
    return scores


def _sweep_job(args):
    point, data, test, specs, seed = args
    try:
        return _train_and_score(point, data, test, specs, seed), None
    except (TrainingDiverged, SpecError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def cmd_sweep(cfg: ExperimentConfig, workers: int = 1) -> RunOutput:
    axis = cfg.experiment.removeprefix("sweep-")
    if axis not in SWEEP_AXES:
        raise ConfigError(f"experiment: sweep needs one of sweep-{{{','.join(SWEEP_AXES)}}}, got {cfg.experiment!r}")
    raw = cfg.raw
    sw = raw.get("sweep")
    if not sw:
        raise ConfigError("sweep: section required")
    train_defaults = {"criterion": "LS", "iterations": 2000}
    base = {
        "train": {**train_defaults, **sw.get("train", {})},
        "critic_hidden": sw.get("critic_hidden", [64, 64]),
        "gen_hidden": sw.get("gen_hidden", [64, 64]),
        "noise_dim": sw.get("noise_dim", 2),
    }
    try:
        TrainConfig(**base["train"])
    except SpecError as exc:
        raise ConfigError(f"sweep.train: {exc}") from None
    splits = build_splits(raw)
    specs = metric_specs(raw, cfg.seeds) or [M.MetricSpec("LS", seeds=cfg.seeds)]
    points = [_sweep_point(axis, v, base) for v in sw["grid"]]
    jobs = []
    for p in points:
        data = splits["train"]
        if "train_size" in p:
            if p["train_size"] > data.n:
                raise ConfigError(f"sweep.grid: train size {p['train_size']} exceeds the train split ({data.n})")
            data = data.subset(np.arange(p["train_size"]))
        jobs.extend((p, data, splits["test"], specs, s) for s in cfg.seeds)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_sweep_job, jobs, chunksize=1))
    else:
        outs = [_sweep_job(j) for j in jobs]
    rows, failed = [], False
    per_point: list[dict[str, M.MetricResult]] = []
    for i, (value, p) in enumerate(zip(sw["grid"], points)):
        chunk = outs[i * len(cfg.seeds) : (i + 1) * len(cfg.seeds)]
        res = {}
        for spec in specs:
            cell = [(o[spec.kind], None) if o is not None else (None, err) for o, err in chunk]
            res[spec.kind] = assemble(spec.kind, M.MetricSpec(**{**spec.to_dict(), "seeds": cfg.seeds}), cell)
            failed |= res[spec.kind].partial
        per_point.append(res)
        rows.append(
            {
                "type": "sweep",
                "axis": axis,
                "value": value,
                "point": {k: v for k, v in p.items()},
                "results": {k: r.to_dict() for k, r in res.items()},
            }
        )
    summary = {}
    for spec in specs:
        pairs = []
        for (i, a), (j, b) in itertools.combinations(enumerate(sw["grid"]), 2):
            xa, xb = per_point[i][spec.kind].ok_scores, per_point[j][spec.kind].ok_scores
            if xa.size and xb.size:
                pairs.append({"a": a, "b": b, "mean_a": float(xa.mean()), "mean_b": float(xb.mean()),
                              **wilcoxon_rank_sum(xa, xb).to_dict()})
        summary[spec.kind] = pairs
    rows.append({"type": "sweep-summary", "axis": axis, "wilcoxon": summary})
    return RunOutput(rows, failed)


# robustness to validation-set size


def cmd_robustness(cfg: ExperimentConfig, workers: int = 1) -> RunOutput:
    raw = cfg.raw
    rb = raw.get("robustness")
    if not rb:
        raise ConfigError("robustness: section with n_small and n_large required")
    gens = _generators(raw)
    if len(gens) < 2:
        raise ConfigError("need ≥ 2 generators for pairwise agreement")
    splits = build_splits(raw)
    val = splits["validation"]
    n_small, n_large = rb["n_small"], rb["n_large"]
    if max(n_small, n_large) > val.n:
        raise ConfigError(f"robustness: sizes exceed the validation split ({val.n})")
    specs = metric_specs(raw, cfg.seeds) or [M.MetricSpec("LS", seeds=cfg.seeds), M.MetricSpec("IW", seeds=cfg.seeds)]
    named = [(g["name"], m) for g, m in gens]
    small = evaluate_grid(named, specs, val.subset(np.arange(n_small), "train"), splits["test"], workers)
    large = evaluate_grid(named, specs, val.subset(np.arange(n_large), "train"), splits["test"], workers)
    rows, failed, counts = [], False, {}
    for spec in specs:
        a_labels, b_labels, pairs = [], [], []
        for (g1, _), (g2, _) in itertools.combinations(named, 2):
            rs1, rs2 = small[g1][spec.kind], small[g2][spec.kind]
            rl1, rl2 = large[g1][spec.kind], large[g2][spec.kind]
            failed |= rs1.partial or rs2.partial or rl1.partial or rl2.partial
            for k, seed in enumerate(spec.seeds):
                vals = (rs1.per_seed[k], rs2.per_seed[k], rl1.per_seed[k], rl2.per_seed[k])
                if not all(math.isfinite(v) for v in vals):
                    continue
                sa = preference_sign(vals[0] - vals[1])
                sb = preference_sign(vals[2] - vals[3])
                a_labels.append(sa)
                b_labels.append(sb)
                pairs.append({"pair": [g1, g2], "seed": seed, "small": sa, "large": sb})
        frac = agreement_fraction(a_labels, b_labels) if a_labels else math.nan
        agreed = sum(1 for p in pairs if p["small"] == p["large"])
        counts[spec.kind] = (agreed, len(pairs))
        rows.append(
            {
                "type": "agreement",
                "metric": spec.kind,
                "n_small": n_small,
                "n_large": n_large,
                "agreed": agreed,
                "total": len(pairs),
                "fraction": frac,
                "pairs": pairs,
            }
        )
    for m1, m2 in itertools.combinations(counts, 2):
        (a1, t1), (a2, t2) = counts[m1], counts[m2]
        if t1 and t2:
            res = fisher_exact_two_sided([[a1, t1 - a1], [a2, t2 - a2]])
            rows.append({"type": "fisher", "a": m1, "b": m2, "counts": [[a1, t1], [a2, t2]], **res.to_dict()})
    return RunOutput(rows, failed)


# calibration


def c2st_accuracy_at(dist, kind: str, level: float, test: SampleSet, n: int, repeats: int, classifier: str, seed: int):
    gen = GeneratorModel.analytic(dist, CorruptionSpec(kind, level))
    accs = []
    for r in range(repeats):
        fake = generate(gen, n, derive_seed(seed, "calib-fake", r))
        accs.append(c2st(test.data[:n], fake, classifier, derive_seed(seed, "calib-split", r)))
    return float(np.mean(accs))


def calibrate_levels(
    dist: DistributionSpec,
    test: SampleSet,
    kind: str = "intensity-shift",
    targets=(0.55, 0.7, 0.9),
    n: int = 2000,
    max_level: float = 4.0,
    repeats: int = 3,
    steps: int = 16,
    classifier: str = "knn",
    seed: int = 0,
) -> list[dict]:
    """Bisect the corruption level whose mean C2ST accuracy hits each target.

    Accuracy need not be monotone in the level (a shift can realign ring
    modes), so the bracket is the first crossing found by doubling up from
    ``max_level / 64`` rather than the whole [0, max_level] interval.
    """
    n = min(n, test.n)
    acc_at = lambda level: c2st_accuracy_at(dist, kind, level, test, n, repeats, classifier, seed)
    out = []
    for target in targets:
        lo, hi = 0.0, max_level / 64
        acc_hi = acc_at(hi)
        while acc_hi < target and hi < max_level:
            lo, hi = hi, min(2 * hi, max_level)
            acc_hi = acc_at(hi)
        if acc_hi < target:
            out.append({"target": target, "level": hi, "accuracy": acc_hi, "reached": False})
            continue
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            if acc_at(mid) < target:
                lo = mid
            else:
                hi = mid
        level = 0.5 * (lo + hi)
        out.append({"target": target, "level": level, "accuracy": acc_at(level), "reached": True})
    return out


def cmd_calibrate(cfg: ExperimentConfig, workers: int = 1) -> RunOutput:
    raw = cfg.raw
    cal = raw.get("calibrate", {})
    splits = build_splits(raw)
    dist = build_distribution(raw.get("distribution"))
    kind = cal.get("corruption", "intensity-shift")
    levels = calibrate_levels(
        dist,
        splits["test"],
        kind,
        tuple(cal.get("targets", (0.55, 0.7, 0.9))),
        cal.get("n", 2000),
        cal.get("max_level", 4.0),
        cal.get("repeats", 3),
        cal.get("steps", 16),
        cal.get("classifier", "knn"),
        cfg.seeds[0],
    )
    failed = not all(l["reached"] for l in levels)
    return RunOutput([{"type": "calibration", "corruption": kind, "levels": levels}], failed)


# data and GAN training


def cmd_gen_data(cfg: ExperimentConfig, out_dir: str | os.PathLike) -> RunOutput:
    splits = build_splits(cfg.raw)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for role, s in splits.items():
        path = out / f"{role}.cbs"
        save_samples(s, path)
        files[role] = str(path)
    return RunOutput([{"type": "data", "files": files, "sizes": {r: s.n for r, s in splits.items()}}])


def cmd_train_gan(cfg: ExperimentConfig, checkpoint: str | None = None) -> RunOutput:
    raw = cfg.raw
    tg = raw.get("train_gan", {})
    try:
        tc = TrainConfig(**{"seed": cfg.seeds[0], **tg.get("train", {})})
    except SpecError as exc:
        raise ConfigError(f"train_gan.train: {exc}") from None
    splits = build_splits(raw)
    crit = default_critic_arch(tc.criterion)
    crit = CriticArch(tuple(tg.get("critic_hidden", crit.hidden)), crit.activation, crit.head)
    garch = GeneratorArch(tg.get("noise_dim", 2), tuple(tg.get("gen_hidden", (64, 64))))
    run = train_toy_gan(splits["train"], tc, crit, garch)
    path = checkpoint or tg.get("checkpoint") or "generator.cbm"
    meta = {"criterion": tc.criterion, "config": tc.to_dict(), "seed": tc.seed}
    save_checkpoint(run.generator, path, meta)
    critic_path = str(Path(path).with_suffix("")) + ".critic.cbm"
    save_checkpoint(run.critic, critic_path, meta)
    curve = run.curve[:: max(1, len(run.curve) // 100)]
    return RunOutput([{"type": "train-gan", "checkpoint": str(path), "critic_checkpoint": critic_path,
                       "config": tc.to_dict(), "curve": curve}])


# statistics over result files


def read_jsonl(path) -> list[dict]:
    rows = []
    with open(path) as fh:
        for i, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{i}: malformed JSONL line ({exc.msg})") from None
    return rows


def _parse_count(s: str) -> tuple[int, int]:
    a, t = s.split("/")
    a, t = int(a), int(t)
    if a > t:
        raise ConfigError(f"counts: {s} has more agreements than total")
    return a, t


def cmd_stats(rows: list[dict], test: str = "wilcoxon", a: str | None = None, b: str | None = None,
              counts: list[str] | None = None) -> RunOutput:
    """Wilcoxon between per-seed score lists, or Fisher between agreement counts."""
    out = []
    if test == "fisher":
        items = []
        if counts:
            items = [(c, *_parse_count(c)) for c in counts]
        else:
            items = [(r["metric"], r["agreed"], r["total"]) for r in rows if r.get("type") == "agreement"]
        for (n1, a1, t1), (n2, a2, t2) in itertools.combinations(items, 2):
            res = fisher_exact_two_sided([[a1, t1 - a1], [a2, t2 - a2]])
            out.append({"type": "test", "test": "fisher", "a": n1, "b": n2, **res.to_dict()})
        return RunOutput(out)
    results = results_from_rows(rows)
    if a or b:
        if not (a and b):
            raise ConfigError("stats: --a and --b go together (GENERATOR:METRIC)")
        sel = []
        for key in (a, b):
            g, _, m = key.rpartition(":")
            if g not in results or m not in results[g]:
                raise ConfigError(f"stats: no result row for {key}")
            sel.append(results[g][m].ok_scores)
        res = wilcoxon_rank_sum(*sel)
        out.append({"type": "test", "test": "wilcoxon", "a": a, "b": b, **res.to_dict()})
        return RunOutput(out)
    metrics = sorted({m for g in results.values() for m in g})
    for m in metrics:
        gens = [g for g in results if m in results[g]]
        for g1, g2 in itertools.combinations(gens, 2):
            x1, x2 = results[g1][m].ok_scores, results[g2][m].ok_scores
            if x1.size and x2.size:
                res = wilcoxon_rank_sum(x1, x2)
                out.append({"type": "test", "test": "wilcoxon", "a": f"{g1}:{m}", "b": f"{g2}:{m}", **res.to_dict()})
    return RunOutput(out)
