"""Test-time divergence estimates: train a fresh critic on held-out criteria
(GC, LS, IW) or evaluate the closed-form MMD, then aggregate over seeds.

Every score here is oriented so that a larger value means the generator is
further from the data; ``better`` is therefore "lower" for all four kinds.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist

from . import autodiff as ad
from . import objectives
from .autodiff import Tensor
from .data import SampleSet, SpecError
from .models import (
    SGD,
    CriticNetwork,
    GeneratorModel,
    TrainingDiverged,
    check_criterion,
    critic_objective,
    generate,
)
from .rng import derive_seed, make_rng

CRITIC_KINDS = ("GC", "LS", "IW")
ADVERSARIAL_KINDS = (*CRITIC_KINDS, "MMD")
REFERENCE_KINDS = ("FID", "C2ST", "IS")
ALL_KINDS = (*ADVERSARIAL_KINDS, *REFERENCE_KINDS)
BETTER = {k: "lower" for k in ALL_KINDS} | {"IS": "higher"}
# IW with a penalty weight of 10 diverges under SGD at 0.05
DEFAULT_LR = {"GC": 0.05, "LS": 0.05, "IW": 0.002}
GC_CLAMP = 1e-7
TIE_TOL = 1e-12


@dataclass
class MetricSpec:
    kind: str
    hidden: tuple[int, ...] = (64, 64)
    activation: str | None = None
    head: str | None = None
    iterations: int = 3000
    # None picks the per-kind default in DEFAULT_LR
    lr: float | None = None
    momentum: float = 0.5
    batch_size: int = 128
    penalty_weight: float = 10.0
    # MMD: explicit bandwidths, or scales of the median pairwise distance
    sigmas: tuple[float, ...] = ()
    sigma_scales: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    median_subsample: int = 500
    mmd_unbiased: bool = False
    ls_a: float = 0.0
    ls_b: float = 1.0
    seeds: tuple[int, ...] = (0,)
    n_fake: int | None = None
    curve_every: int = 50
    # reference metrics
    classifier: str | None = None
    knn_k: int = 5

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise SpecError(f"kind: {self.kind!r} not in {ALL_KINDS}")
        self.hidden = tuple(int(h) for h in self.hidden)
        self.sigmas = tuple(float(s) for s in self.sigmas)
        self.sigma_scales = tuple(float(s) for s in self.sigma_scales)
        # aggregation is ordered by seed value, whatever order they were given in
        self.seeds = tuple(sorted(int(s) for s in self.seeds))
        if len(set(self.seeds)) != len(self.seeds):
            raise SpecError(f"seeds: duplicates in {list(self.seeds)}")
        if self.lr is None:
            self.lr = DEFAULT_LR.get(self.kind, 0.05)
        if self.classifier is None:
            self.classifier = "softmax-mlp" if self.kind == "IS" else "knn"
        if self.activation is None:
            self.activation = "tanh" if self.kind == "IW" else "leaky-relu"
        if self.head is None:
            self.head = "sigmoid" if self.kind == "GC" else "linear"
        if not self.seeds:
            raise SpecError("seeds: at least one seed required")
        if self.kind == "MMD":
            if not (self.sigmas or self.sigma_scales):
                raise SpecError("sigmas: MMD needs bandwidths or bandwidth scales")
            if any(s <= 0 for s in self.sigmas + self.sigma_scales):
                raise SpecError("sigmas: bandwidths must be > 0")
        elif self.sigmas:
            raise SpecError(f"sigmas: only meaningful for MMD, not {self.kind}")
        if self.penalty_weight < 0:
            raise SpecError("penalty_weight: must be >= 0")
        if self.kind in CRITIC_KINDS:
            if self.iterations < 1 or self.batch_size < 1 or self.lr <= 0:
                raise SpecError("iterations/batch_size/lr: must be positive")
        if not self.ls_a < self.ls_b:
            raise SpecError("ls_a/ls_b: a < b required")
        if self.n_fake is not None and self.n_fake < 1:
            raise SpecError("n_fake: must be >= 1")

    @property
    def better(self) -> str:
        return BETTER[self.kind]

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("hidden", "sigmas", "sigma_scales", "seeds"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricSpec":
        return cls(**d)


@dataclass
class MetricResult:
    kind: str
    per_seed: list[float]
    seeds: list[int]
    better: str
    spec: dict
    curves: list[list[float]] = field(default_factory=list)
    failures: dict[int, str] = field(default_factory=dict)
    extras: list[dict] = field(default_factory=list)

    @property
    def ok_scores(self) -> np.ndarray:
        a = np.asarray(self.per_seed, dtype=float)
        return a[np.isfinite(a)]

    @property
    def mean(self) -> float:
        ok = self.ok_scores
        return float(np.mean(ok)) if ok.size else math.nan

    @property
    def std(self) -> float:
        ok = self.ok_scores
        return float(np.std(ok)) if ok.size else math.nan

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "per_seed": [None if not math.isfinite(s) else s for s in self.per_seed],
            "seeds": list(self.seeds),
            "mean": self.mean,
            "std": self.std,
            "better": self.better,
            "partial": self.partial,
            "failures": {str(k): v for k, v in self.failures.items()},
            "spec": self.spec,
            "curves": self.curves,
            "extras": self.extras,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricResult":
        return cls(
            d["kind"],
            [math.nan if s is None else float(s) for s in d["per_seed"]],
            list(d["seeds"]),
            d["better"],
            d.get("spec", {}),
            d.get("curves", []),
            {int(k): v for k, v in d.get("failures", {}).items()},
            d.get("extras", []),
        )


# objectives on critic outputs


def gc_objective(real_outputs, fake_outputs) -> float:
    """mean log D(x) + mean log(1 - D(s)); outputs are clamped to [1e-7, 1-1e-7]."""
    r = np.asarray(real_outputs, dtype=float)
    f = np.asarray(fake_outputs, dtype=float)
    for name, v in (("real", r), ("fake", f)):
        if np.any(~np.isfinite(v)) or np.any(v < 0) or np.any(v > 1):
            raise ad.DomainError(f"gc_objective: {name} outputs must lie in (0, 1)")
    r = np.clip(r, GC_CLAMP, 1 - GC_CLAMP)
    f = np.clip(f, GC_CLAMP, 1 - GC_CLAMP)
    return float(np.mean(np.log(r)) + np.mean(np.log1p(-f)))


def ls_objective(real_outputs, fake_outputs, a: float = 0.0, b: float = 1.0) -> float:
    r = np.asarray(real_outputs, dtype=float)
    f = np.asarray(fake_outputs, dtype=float)
    return float(-np.mean((r - b) ** 2) - np.mean((f - a) ** 2))


def iw_objective(real_outputs, fake_outputs) -> float:
    return float(np.mean(real_outputs) - np.mean(fake_outputs))


def gradient_penalty(critic: CriticNetwork, real_batch, fake_batch, interp_seed: int) -> float:
    """(||grad D(x_hat)|| - 1)^2 averaged over random interpolates."""
    if not critic.smooth:
        raise SpecError(f"activation: gradient penalty needs a smooth critic, got {critic.activation!r}")
    real = critic._input(getattr(real_batch, "data", real_batch))
    fake = critic._input(getattr(fake_batch, "data", fake_batch))
    k = min(real.shape[0], fake.shape[0])
    u = make_rng(interp_seed).random(k)
    params = [Tensor(p) for p in critic.params]
    return objectives.gradient_penalty(critic.tensor_fn(params), real[:k], fake[:k], u).item()


# MMD


def gaussian_kernel(X: np.ndarray, Y: np.ndarray, sigma: float) -> np.ndarray:
    return np.exp(-cdist(X, Y, "sqeuclidean") / (2.0 * sigma**2))


def _as_matrix(s) -> np.ndarray:
    x = s.data if isinstance(s, SampleSet) else np.asarray(s, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def mmd2_biased(X, S, sigma: float) -> float:
    """V-statistic estimate of squared MMD with a Gaussian kernel (diagonal kept)."""
    if not sigma > 0:
        raise SpecError(f"sigma: bandwidth must be > 0, got {sigma}")
    x, s = _as_matrix(X), _as_matrix(S)
    if x.shape[1] != s.shape[1]:
        raise SpecError(f"S: dimension {s.shape[1]} differs from X dimension {x.shape[1]}")
    # the three means are O(1) while their combination can be tiny, so
    # accumulate in extended precision to limit the cancellation error
    kxx = _mean_ext(gaussian_kernel(x, x, sigma))
    kss = _mean_ext(gaussian_kernel(s, s, sigma))
    kxs = _mean_ext(gaussian_kernel(x, s, sigma))
    return float(kxx + kss - 2 * kxs)


def _mean_ext(k: np.ndarray) -> np.longdouble:
    return k.astype(np.longdouble).sum() / np.longdouble(k.size)


def mmd2_unbiased(X, S, sigma: float) -> float:
    """U-statistic alternative: self-similarity diagonals excluded."""
    if not sigma > 0:
        raise SpecError(f"sigma: bandwidth must be > 0, got {sigma}")
    x, s = _as_matrix(X), _as_matrix(S)
    n, m = len(x), len(s)
    if n < 2 or m < 2:
        raise SpecError("X/S: the unbiased estimator needs at least two rows each")
    kxx = gaussian_kernel(x, x, sigma)
    kss = gaussian_kernel(s, s, sigma)
    a = (kxx.sum() - np.trace(kxx)) / (n * (n - 1))
    b = (kss.sum() - np.trace(kss)) / (m * (m - 1))
    return float(a + b - 2.0 * gaussian_kernel(x, s, sigma).mean())


def median_heuristic(X, S, subsample: int = 500, seed: int = 0) -> float:
    pooled = np.concatenate([_as_matrix(X), _as_matrix(S)])
    if pooled.shape[0] > subsample:
        idx = make_rng(seed).choice(pooled.shape[0], subsample, replace=False)
        pooled = pooled[idx]
    med = float(np.median(pdist(pooled)))
    return med if med > 0 else 1.0


def mmd_score(X, S, spec: MetricSpec, seed: int = 0) -> tuple[float, dict]:
    """Max of MMD^2 over the bandwidth list; returns the score and the bandwidths used."""
    if spec.sigmas:
        sigmas = list(spec.sigmas)
    else:
        base = median_heuristic(X, S, spec.median_subsample, derive_seed(seed, "median"))
        sigmas = [c * base for c in spec.sigma_scales]
    est = mmd2_unbiased if spec.mmd_unbiased else mmd2_biased
    values = [est(X, S, s) for s in sigmas]
    best = int(np.argmax(values))
    return values[best], {"sigmas": sigmas, "values": values, "sigma": sigmas[best]}


# critic training and evaluation


def _check_role(x: SampleSet, allowed: Sequence[str], what: str) -> None:
    if x.role not in allowed:
        raise SpecError(f"{what}.role: expected one of {tuple(allowed)}, got {x.role!r}")


def make_critic(kind: str, d: int, spec: MetricSpec, seed: int) -> CriticNetwork:
    critic = CriticNetwork.create((d, *spec.hidden, 1), spec.activation, spec.head, seed)
    check_criterion(critic, kind)
    return critic


def train_critic(
    kind: str, X_train: SampleSet, gen: GeneratorModel, spec: MetricSpec, seed: int
) -> tuple[CriticNetwork, list[float]]:
    """N minibatch ascent steps of the kind's objective from a fresh initialization.

    Returns the critic and its per-iteration (unpenalized) objective values.
    """
    if kind not in CRITIC_KINDS:
        raise SpecError(f"kind: {kind!r} has no critic to train (MMD is closed form)")
    critic = make_critic(kind, X_train.d, spec, derive_seed(seed, "critic-init"))
    opt = SGD(critic.params, spec.lr, spec.momentum)
    rng = make_rng(derive_seed(seed, "critic-batches"))
    x = X_train.data
    m = spec.batch_size
    curve: list[float] = []
    last = None
    for it in range(spec.iterations):
        real = x[rng.integers(0, x.shape[0], m)]
        fake = generate(gen, m, derive_seed(seed, "critic-fake", it)).data
        params = [Tensor(p, requires_grad=True) for p in critic.params]
        try:
            # overflow is caught just below as divergence; skip numpy's warnings
            with np.errstate(over="ignore", invalid="ignore"):
                obj, value = critic_objective(
                    kind, critic, params, real, fake, rng, spec.penalty_weight, spec.ls_a, spec.ls_b
                )
                grads = ad.grad(obj, params)
        except ad.DomainError as exc:
            raise TrainingDiverged(it, last, str(exc)) from None
        if not np.isfinite(obj.item()) or not all(np.all(np.isfinite(g.data)) for g in grads):
            raise TrainingDiverged(it, last)
        opt.step([g.data for g in grads], ascend=True)
        last = value
        curve.append(value)
    return critic, curve


def evaluate_metric(
    kind: str,
    X_test: SampleSet,
    gen: GeneratorModel,
    critic_or_spec: CriticNetwork | MetricSpec,
    n_fake: int | None = None,
    seed: int = 0,
    ls_a: float = 0.0,
    ls_b: float = 1.0,
) -> float:
    """The kind's objective on held-out data against fresh generator samples."""
    _check_role(X_test, ("test", "validation"), "X_test")
    n_fake = n_fake or X_test.n
    fake = generate(gen, n_fake, derive_seed(seed, "eval-fake"))
    if kind == "MMD":
        spec = critic_or_spec if isinstance(critic_or_spec, MetricSpec) else MetricSpec("MMD")
        return mmd_score(X_test, fake, spec, seed)[0]
    critic = critic_or_spec
    if not isinstance(critic, CriticNetwork):
        raise SpecError(f"critic: {kind} evaluation needs a trained CriticNetwork")
    r, f = critic(X_test), critic(fake)
    if kind == "GC":
        return gc_objective(r, f)
    if kind == "LS":
        return ls_objective(r, f, ls_a, ls_b)
    if kind == "IW":
        return iw_objective(r, f)
    raise SpecError(f"kind: {kind!r} not in {ADVERSARIAL_KINDS}")


def _assert_disjoint(a: SampleSet, b: SampleSet) -> None:
    if a.data is b.data or np.shares_memory(a.data, b.data):
        raise SpecError("splits: train and test share storage")
    rows = {r.tobytes() for r in a.data}
    if any(r.tobytes() in rows for r in b.data):
        raise SpecError("splits: train and test overlap")


def run_seed(kind: str, train: SampleSet | None, test: SampleSet, gen: GeneratorModel, spec: MetricSpec, seed: int):
    """One seed of the divergence computation: (score, thinned curve, extras)."""
    if kind == "MMD":
        fake = generate(gen, spec.n_fake or test.n, derive_seed(seed, "eval-fake"))
        score, extra = mmd_score(test, fake, spec, seed)
        return score, [], extra
    critic, curve = train_critic(kind, train, gen, spec, seed)
    score = evaluate_metric(kind, test, gen, critic, spec.n_fake, seed, spec.ls_a, spec.ls_b)
    thin = curve[:: max(1, spec.curve_every)]
    return score, thin, {"final_train_objective": curve[-1]}


def _run_seed_safe(args):
    try:
        return run_seed(*args), None
    except (TrainingDiverged, ad.DomainError) as exc:
        return None, str(exc)


def divergence_computation(
    kind: str,
    splits: tuple[SampleSet | None, SampleSet],
    gen: GeneratorModel,
    spec: MetricSpec,
    workers: int = 1,
) -> MetricResult:
    """Train + evaluate once per seed and aggregate.

    ``splits`` is (critic-training set, held-out test set). MMD ignores the
    training set. Seeds that diverge are recorded and the result is partial.
    """
    if kind not in ADVERSARIAL_KINDS:
        raise SpecError(f"kind: {kind!r} not in {ADVERSARIAL_KINDS}")
    if spec.kind != kind:
        raise SpecError(f"spec.kind: {spec.kind!r} does not match {kind!r}")
    train, test = splits
    _check_role(test, ("test", "validation"), "test")
    if kind != "MMD":
        if train is None:
            raise SpecError("splits: critic kinds need a training split")
        _assert_disjoint(train, test)
    jobs = [(kind, train, test, gen, spec, s) for s in spec.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_run_seed_safe, jobs))
    else:
        outs = [_run_seed_safe(j) for j in jobs]
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
    return MetricResult(kind, scores, list(spec.seeds), spec.better, spec.to_dict(), curves, failures, extras)


def compare(a: float, b: float, better: str) -> int:
    """+1 if ``a`` is the better score, -1 if ``b`` is, 0 within the tie tolerance."""
    if abs(a - b) <= TIE_TOL:
        return 0
    if better == "lower":
        return 1 if a < b else -1
    return 1 if a > b else -1
