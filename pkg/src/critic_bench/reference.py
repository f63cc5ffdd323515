"""Comparison metrics: FID on raw vectors, an Inception-style score with a
pluggable classifier, classifier two-sample tests, and the Generative
Adversarial Metric."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import autodiff as ad
from .autodiff import Tensor
from .data import SampleSet, SpecError
from .models import SGD, CriticNetwork, GeneratorModel, generate, init_params, mlp_numpy, mlp_tensor
from .rng import derive_seed, make_rng

SYM_TOL = 1e-10
EIG_TOL = 1e-10


def _matrix(x) -> np.ndarray:
    a = x.data if isinstance(x, SampleSet) else np.asarray(x, dtype=np.float64)
    return a[:, None] if a.ndim == 1 else a


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        c = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if c.shape != (m.size, m.size):
            raise SpecError(f"cov: expected {(m.size, m.size)}, got {c.shape}")
        if np.max(np.abs(c - c.T), initial=0.0) > SYM_TOL:
            raise SpecError("cov: not symmetric")
        if c.size and np.linalg.eigvalsh(c).min() < -EIG_TOL * max(1.0, np.abs(c).max()):
            raise SpecError("cov: not positive semidefinite")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", c)

    @property
    def dim(self) -> int:
        return self.mean.size


def gaussian_stats(samples) -> GaussianStats:
    x = _matrix(samples)
    if x.shape[0] < 2:
        raise SpecError("samples: need n >= 2 for a covariance")
    c = np.cov(x, rowvar=False, ddof=1).reshape(x.shape[1], x.shape[1])
    return GaussianStats(x.mean(axis=0), 0.5 * (c + c.T))


def matrix_sqrt_psd(A) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition; tiny negative eigenvalues clip to 0."""
    a = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if a.shape[0] != a.shape[1]:
        raise SpecError(f"A: not square {a.shape}")
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    if np.max(np.abs(a - a.T), initial=0.0) > SYM_TOL * scale:
        raise SpecError("A: not symmetric within tolerance")
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    if w.size and w.min() < -EIG_TOL * scale:
        raise SpecError(f"A: eigenvalue {w.min():.3g} is substantially negative")
    r = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return 0.5 * (r + r.T)


def fid(p: GaussianStats, q: GaussianStats) -> float:
    """||m_p - m_q||^2 + Tr(C_p + C_q - 2 (C_p^1/2 C_q C_p^1/2)^1/2)."""
    if p.dim != q.dim:
        raise SpecError(f"q: dimension {q.dim} differs from {p.dim}")
    sp = matrix_sqrt_psd(p.cov)
    inner = sp @ q.cov @ sp
    cross = matrix_sqrt_psd(0.5 * (inner + inner.T))
    diff = p.mean - q.mean
    val = float(diff @ diff + np.trace(p.cov) + np.trace(q.cov) - 2.0 * np.trace(cross))
    if val < -1e-8:
        raise ArithmeticError(f"FID came out negative ({val}); inputs are inconsistent")
    return max(val, 0.0)


def fid_samples(real, fake) -> float:
    return fid(gaussian_stats(real), gaussian_stats(fake))


def inception_style_score(class_probs) -> float:
    """exp(mean_x KL(p(y|x) || p(y))) with p(y) the batch marginal."""
    p = np.atleast_2d(np.asarray(class_probs, dtype=np.float64))
    if p.shape[1] < 2:
        raise SpecError("class_probs: need K >= 2 classes")
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-6):
        raise SpecError("class_probs: every row must be a probability vector")
    marg = p.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(marg)), 0.0)
    return float(np.exp(terms.sum(axis=1).mean()))


# classifiers


@dataclass
class ClassifierModel:
    kind: str
    n_classes: int
    params: list[np.ndarray] | None = None
    ref_x: np.ndarray | None = None
    ref_y: np.ndarray | None = None
    k: int = 5
    exclude_self: bool = False

    def predict_proba(self, x) -> np.ndarray:
        x = _matrix(x)
        if self.kind == "softmax-mlp":
            z = mlp_numpy(self.params, x, "leaky-relu")
            z = z - z.max(axis=1, keepdims=True)
            e = np.exp(z)
            return e / e.sum(axis=1, keepdims=True)
        idx = self._neighbors(x)
        votes = np.zeros((x.shape[0], self.n_classes))
        for j in range(idx.shape[1]):
            np.add.at(votes, (np.arange(x.shape[0]), self.ref_y[idx[:, j]]), 1.0)
        return votes / idx.shape[1]

    def predict(self, x) -> np.ndarray:
        if self.kind == "softmax-mlp":
            return np.argmax(self.predict_proba(x), axis=1)
        x = _matrix(x)
        idx = self._neighbors(x)
        labels = self.ref_y[idx]
        out = np.empty(x.shape[0], dtype=np.int64)
        for i, row in enumerate(labels):
            counts = np.bincount(row, minlength=self.n_classes)
            tied = np.flatnonzero(counts == counts.max())
            # tie between classes: the class of the nearest tied neighbour wins
            out[i] = next(c for c in row if c in tied) if tied.size > 1 else tied[0]
        return out

    def _neighbors(self, x: np.ndarray) -> np.ndarray:
        dist = cdist(x, self.ref_x)
        if self.exclude_self:
            dist = np.where(dist == 0.0, np.inf, dist)
        k = min(self.k, self.ref_x.shape[0])
        # stable sort: equal distances resolve to the lower reference index
        return np.argsort(dist, axis=1, kind="stable")[:, :k]


def fit_knn(x, y, k: int = 5, n_classes: int | None = None, exclude_self: bool = False) -> ClassifierModel:
    y = np.asarray(y, dtype=np.int64)
    return ClassifierModel("knn", int(n_classes or y.max() + 1), ref_x=_matrix(x), ref_y=y, k=k, exclude_self=exclude_self)


def fit_softmax_mlp(
    x,
    y,
    n_classes: int | None = None,
    hidden: tuple[int, ...] = (32,),
    iterations: int = 1000,
    lr: float = 0.1,
    batch_size: int = 128,
    seed: int = 0,
) -> ClassifierModel:
    """Cross-entropy MLP trained by minibatch SGD through the autodiff engine."""
    x = _matrix(x)
    y = np.asarray(y, dtype=np.int64)
    k = int(n_classes or y.max() + 1)
    params = init_params((x.shape[1], *hidden, k), derive_seed(seed, "clf-init"))
    opt = SGD(params, lr, 0.5)
    rng = make_rng(derive_seed(seed, "clf-batches"))
    eye = np.eye(k)
    for _ in range(iterations):
        idx = rng.integers(0, x.shape[0], min(batch_size, x.shape[0]))
        tp = [Tensor(p, requires_grad=True) for p in params]
        z = mlp_tensor(tp, Tensor(x[idx]), "leaky-relu")
        shift = z.data.max(axis=1, keepdims=True)
        lse = ad.log(ad.sum(ad.exp(ad.add(z, -shift)), axis=1))
        picked = ad.sum(ad.mul(z, eye[y[idx]]), axis=1)
        loss = ad.mean(ad.add(ad.add(lse, shift[:, 0]), ad.neg(picked)))
        opt.step([g.data for g in ad.grad(loss, tp)])
    return ClassifierModel("softmax-mlp", k, params=params)


def fit_classifier(kind: str, x, y, seed: int = 0, k: int = 5, **kw) -> ClassifierModel:
    if kind == "knn":
        return fit_knn(x, y, k, kw.get("n_classes"), kw.get("exclude_self", False))
    if kind == "softmax-mlp":
        return fit_softmax_mlp(x, y, seed=seed, **kw)
    raise SpecError(f"kind: {kind!r} not in ('knn', 'softmax-mlp')")


def c2st(real, fake, kind: str = "knn", split_seed: int = 0, k: int = 5, exclude_self: bool = False, **kw) -> float:
    """Held-out accuracy of a real-vs-fake classifier on a stratified 50/50 split."""
    xr, xf = _matrix(real), _matrix(fake)
    if xr.shape[0] < 4 or xf.shape[0] < 4:
        raise SpecError("real/fake: need at least 4 samples per class")
    if xr.shape[1] != xf.shape[1]:
        raise SpecError("fake: dimension differs from real")
    rng = make_rng(split_seed)
    tr_idx, te_idx = [], []
    x = np.concatenate([xr, xf])
    y = np.concatenate([np.ones(len(xr), dtype=np.int64), np.zeros(len(xf), dtype=np.int64)])
    for cls in (1, 0):
        members = rng.permutation(np.flatnonzero(y == cls))
        half = members.size // 2
        tr_idx.append(members[:half])
        te_idx.append(members[half:])
    tr_idx = np.concatenate(tr_idx)
    te_idx = np.concatenate(te_idx)
    if kind == "knn":
        model = fit_knn(x[tr_idx], y[tr_idx], k, 2, exclude_self)
    else:
        model = fit_classifier(kind, x[tr_idx], y[tr_idx], seed=derive_seed(split_seed, "c2st"), n_classes=2, **kw)
    return float(np.mean(model.predict(x[te_idx]) == y[te_idx]))


# Generative Adversarial Metric


@dataclass
class GAMResult:
    ratio: float
    fool_rate_g2_on_d1: float
    fool_rate_g1_on_d2: float
    infinite: bool
    calibrated: bool | None
    calibration_accuracy: tuple[float, float] | None = None


def gam_ratio(
    gan1: tuple[CriticNetwork, GeneratorModel],
    gan2: tuple[CriticNetwork, GeneratorModel],
    n: int,
    seed: int,
    calibration: SampleSet | np.ndarray | None = None,
) -> GAMResult:
    """Fooling rate of G2 against D1 divided by that of G1 against D2.

    "Fools" means D(x) > 0.5. A ratio above 1 says D1 is fooled by G2 more
    often than D2 is fooled by G1. The hypothesis wording (M1 better when G1
    fools D2 more) reads the same comparison the other way round, so callers
    pick the reading; both rates are returned. Both generators draw with the
    same seed so a self-comparison is exactly 1.
    """
    (d1, g1), (d2, g2) = gan1, gan2
    for i, d in enumerate((d1, d2), 1):
        if d.head != "sigmoid":
            raise SpecError(f"gan{i}: GAM needs sigmoid-head critics")
    x1 = generate(g1, n, seed)
    x2 = generate(g2, n, seed)
    num = float(np.mean(d1(x2) > 0.5))
    den = float(np.mean(d2(x1) > 0.5))
    infinite = den == 0.0
    ratio = math.inf if infinite else num / den
    calibrated, acc = None, None
    if calibration is not None:
        acc = (float(np.mean(d1(calibration) > 0.5)), float(np.mean(d2(calibration) > 0.5)))
        calibrated = abs(acc[0] - acc[1]) <= 0.1
    return GAMResult(ratio, num, den, infinite, calibrated, acc)
