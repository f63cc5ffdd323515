"""Synthetic distributions, corruption operators and sample files."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .rng import derive_seed, make_rng, normal, uniform

ROLES = ("train", "validation", "test")
DIST_KINDS = ("gaussian-mixture", "ring", "uniform-box")
CORRUPTION_KINDS = ("additive-noise", "mode-drop", "intensity-shift", "blur-toward-mean")

MAGIC = b"CBS1"
_HEADER = struct.Struct("<4sIIB")
_U16 = struct.Struct("<H")
U32_MAX = 0xFFFFFFFF
MAX_PAYLOAD = 2**36


class SpecError(ValueError):
    """Invalid specification; the message starts with the offending field path."""


class SampleFormatError(ValueError):
    pass


class BadMagicError(SampleFormatError):
    pass


class DimensionOverflowError(SampleFormatError):
    pass


class TruncatedPayloadError(SampleFormatError):
    pass


@dataclass(frozen=True, eq=False)
class SampleSet:
    data: np.ndarray
    role: str = "train"
    source_label: str = ""
    # mixture component per row; only present for mixture-sourced sets
    labels: np.ndarray | None = None

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise SpecError(f"data: expected an n x d matrix, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise SpecError("data: n ≥ 1 violated")
        if arr.shape[1] < 1:
            raise SpecError("data: d ≥ 1 violated")
        if not np.all(np.isfinite(arr)):
            raise SpecError("data: non-finite values")
        if self.role not in ROLES:
            raise SpecError(f"role: {self.role!r} not in {ROLES}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        if self.labels is not None:
            lab = np.array(self.labels, dtype=np.int64)
            if lab.shape != (arr.shape[0],):
                raise SpecError("labels: one label per row required")
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, SampleSet):
            return NotImplemented
        return (
            self.role == other.role
            and self.source_label == other.source_label
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )

    __hash__ = None  # type: ignore[assignment]

    def with_role(self, role: str) -> "SampleSet":
        return SampleSet(self.data, role, self.source_label, self.labels)

    def subset(self, idx, role: str | None = None) -> "SampleSet":
        idx = np.asarray(idx)
        labels = None if self.labels is None else self.labels[idx]
        return SampleSet(self.data[idx], role or self.role, self.source_label, labels)


@dataclass(frozen=True)
class DistributionSpec:
    """Ground-truth distribution.

    ``params`` by kind:
      gaussian-mixture: means (K x d), covs (K x d x d), weights (K)
      ring: radius, noise (d must be 2)
      uniform-box: low (d), high (d)
    """

    kind: str
    dim: int
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        validate_distribution(self)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "params": _jsonable(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "DistributionSpec":
        return cls(d["kind"], int(d["dim"]), dict(d.get("params", {})))


@dataclass(frozen=True)
class CorruptionSpec:
    kind: str = "intensity-shift"
    level: float = 0.0

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise SpecError(f"kind: {self.kind!r} not in {CORRUPTION_KINDS}")
        if not np.isfinite(self.level) or self.level < 0:
            raise SpecError(f"level: must be finite and >= 0, got {self.level}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "level": float(self.level)}

    @classmethod
    def from_dict(cls, d: dict) -> "CorruptionSpec":
        return cls(d["kind"], float(d["level"]))


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def validate_distribution(spec: DistributionSpec) -> None:
    if spec.kind not in DIST_KINDS:
        raise SpecError(f"kind: {spec.kind!r} not in {DIST_KINDS}")
    if spec.dim < 1:
        raise SpecError(f"dim: must be >= 1, got {spec.dim}")
    p = spec.params
    if spec.kind == "gaussian-mixture":
        for key in ("means", "covs", "weights"):
            if key not in p:
                raise SpecError(f"params.{key}: missing")
        means = np.asarray(p["means"], dtype=float)
        covs = np.asarray(p["covs"], dtype=float)
        w = np.asarray(p["weights"], dtype=float)
        k = w.shape[0] if w.ndim == 1 else -1
        if k < 1:
            raise SpecError("params.weights: expected a nonempty vector")
        if means.shape != (k, spec.dim):
            raise SpecError(f"params.means: expected shape {(k, spec.dim)}, got {means.shape}")
        if covs.shape != (k, spec.dim, spec.dim):
            raise SpecError(
                f"params.covs: expected shape {(k, spec.dim, spec.dim)}, got {covs.shape}"
            )
        if np.any(w < 0):
            raise SpecError("params.weights: negative weight")
        if abs(w.sum() - 1.0) > 1e-12:
            raise SpecError(f"params.weights: sum to {w.sum()!r}, not 1")
        for i, c in enumerate(covs):
            if not np.allclose(c, c.T, atol=1e-12, rtol=0):
                raise SpecError(f"params.covs[{i}]: not symmetric")
            try:
                np.linalg.cholesky(c)
            except np.linalg.LinAlgError:
                raise SpecError(f"params.covs[{i}]: not positive definite") from None
    elif spec.kind == "ring":
        if spec.dim != 2:
            raise SpecError(f"dim: ring distributions are 2-D, got {spec.dim}")
        if float(p.get("radius", -1)) <= 0:
            raise SpecError("params.radius: must be > 0")
        if float(p.get("noise", 0.0)) < 0:
            raise SpecError("params.noise: must be >= 0")
    else:
        low = np.asarray(p.get("low", []), dtype=float)
        high = np.asarray(p.get("high", []), dtype=float)
        if low.shape != (spec.dim,) or high.shape != (spec.dim,):
            raise SpecError(f"params.low/high: expected {spec.dim} bounds each")
        if np.any(high <= low):
            raise SpecError("params.high: every upper bound must exceed its lower bound")


def gaussian_mixture(means, covs, weights=None) -> DistributionSpec:
    means = np.asarray(means, dtype=float)
    k, d = means.shape
    covs = np.asarray(covs, dtype=float)
    if covs.ndim == 0:
        covs = np.broadcast_to(np.eye(d) * covs, (k, d, d))
    w = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=float)
    return DistributionSpec(
        "gaussian-mixture", d, {"means": means.tolist(), "covs": covs.tolist(), "weights": w.tolist()}
    )


def ring_mixture(n_modes: int = 8, radius: float = 2.0, std: float = 0.2) -> DistributionSpec:
    """Equal-weight 2-D Gaussian modes evenly spaced on a circle."""
    ang = 2 * np.pi * np.arange(n_modes) / n_modes
    means = radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return gaussian_mixture(means, std**2)


def default_distribution() -> DistributionSpec:
    return ring_mixture(8, 2.0, 0.2)


def sample(spec: DistributionSpec, n: int, seed: int, role: str = "train") -> SampleSet:
    if n < 1:
        raise SpecError(f"n: must be >= 1, got {n}")
    rng = make_rng(seed)
    labels = None
    if spec.kind == "gaussian-mixture":
        p = spec.params
        means = np.asarray(p["means"], dtype=float)
        chol = np.linalg.cholesky(np.asarray(p["covs"], dtype=float))
        cdf = np.cumsum(np.asarray(p["weights"], dtype=float))
        cdf[-1] = 1.0
        labels = np.searchsorted(cdf, uniform(rng, n), side="right")
        z = normal(rng, (n, spec.dim))
        x = means[labels] + np.einsum("nij,nj->ni", chol[labels], z)
    elif spec.kind == "ring":
        radius = float(spec.params["radius"])
        noise = float(spec.params.get("noise", 0.0))
        theta = uniform(rng, n, 0.0, 2 * np.pi)
        r = radius + noise * normal(rng, n) if noise > 0 else np.full(n, radius)
        x = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    else:
        low = np.asarray(spec.params["low"], dtype=float)
        high = np.asarray(spec.params["high"], dtype=float)
        x = low + (high - low) * rng.random((n, spec.dim))
    return SampleSet(x, role, spec.kind, labels)


def corrupt(samples: SampleSet, spec: CorruptionSpec, seed: int) -> SampleSet:
    if spec.level == 0:
        return SampleSet(samples.data, samples.role, samples.source_label, samples.labels)
    x = samples.data
    labels = samples.labels
    level = float(spec.level)
    if spec.kind == "intensity-shift":
        out = x + level
    elif spec.kind == "additive-noise":
        out = x + level * normal(make_rng(seed), x.shape)
    elif spec.kind == "blur-toward-mean":
        out = (1.0 - level) * x + level * x.mean(axis=0)
    else:
        out, labels = _mode_drop(samples, level, seed)
    label = f"{samples.source_label}|{spec.kind}={level:g}"
    return SampleSet(out, samples.role, label, labels)


def _mode_drop(samples: SampleSet, level: float, seed: int):
    """Drop round(level*K) components (at most K-1); refill from kept components."""
    if samples.labels is None:
        raise SpecError("labels: mode-drop needs component labels (mixture-sourced samples)")
    comps = np.unique(samples.labels)
    k = comps.size
    n_drop = min(int(round(min(level, 1.0) * k)), k - 1)
    rng = make_rng(seed)
    if n_drop == 0:
        return samples.data.copy(), samples.labels
    dropped = rng.permutation(comps)[:n_drop]
    is_drop = np.isin(samples.labels, dropped)
    kept_idx = np.flatnonzero(~is_drop)
    src = kept_idx[rng.integers(0, kept_idx.size, size=int(is_drop.sum()))]
    out = samples.data.copy()
    labels = samples.labels.copy()
    out[is_drop] = samples.data[src]
    labels[is_drop] = samples.labels[src]
    return out, labels


def split(
    spec: DistributionSpec, sizes: Sequence[int], seed: int, roles: Sequence[str] = ROLES
) -> list[SampleSet]:
    """Independent draws per role; each role has its own sub-stream."""
    return [sample(spec, n, derive_seed(seed, "split", role), role) for n, role in zip(sizes, roles)]


# sample files


def save_samples(samples: SampleSet, path) -> None:
    x = samples.data
    n, d = x.shape
    if n < 1:
        raise SpecError("n ≥ 1 violated")
    if n > U32_MAX or d > U32_MAX or n * d * 8 > MAX_PAYLOAD:
        raise DimensionOverflowError(f"n={n}, d={d} exceed the u32 header fields")
    label = samples.source_label.encode("utf-8")
    if len(label) > 0xFFFF:
        raise DimensionOverflowError("label longer than 65535 bytes")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, n, d, ROLES.index(samples.role)))
        fh.write(_U16.pack(len(label)))
        fh.write(label)
        fh.write(np.ascontiguousarray(x, dtype="<f8").tobytes())


def load_samples(path) -> SampleSet:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic")
    if len(raw) < _HEADER.size + _U16.size:
        raise TruncatedPayloadError(f"{path}: truncated header")
    _, n, d, role = _HEADER.unpack_from(raw, 0)
    if role >= len(ROLES):
        raise SampleFormatError(f"{path}: unknown role code {role}")
    (llen,) = _U16.unpack_from(raw, _HEADER.size)
    off = _HEADER.size + _U16.size
    if len(raw) < off + llen:
        raise TruncatedPayloadError(f"{path}: truncated label")
    label = raw[off : off + llen].decode("utf-8")
    off += llen
    if n < 1 or d < 1:
        raise SampleFormatError(f"{path}: n >= 1 and d >= 1 required, got n={n}, d={d}")
    payload = n * d * 8
    if payload > MAX_PAYLOAD:
        raise DimensionOverflowError(f"{path}: n*d={n * d} exceeds the {MAX_PAYLOAD}-byte payload cap")
    avail = len(raw) - off
    if payload > avail:
        raise TruncatedPayloadError(f"{path}: expected {payload} payload bytes, found {avail}")
    if payload < avail:
        raise SampleFormatError(f"{path}: {avail - payload} trailing bytes")
    x = np.frombuffer(raw, dtype="<f8", count=n * d, offset=off).reshape(n, d)
    return SampleSet(x.astype(np.float64), ROLES[role], label)


def load_csv(path, role: str = "train", source_label: str | None = None) -> SampleSet:
    rows = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if i == 0:
                    continue  # header row
                raise SampleFormatError(f"{path}:{i + 1}: non-numeric field") from None
    if not rows:
        raise SpecError("n ≥ 1 violated")
    if len({len(r) for r in rows}) != 1:
        raise SampleFormatError(f"{path}: rows have differing widths")
    return SampleSet(np.array(rows), role, source_label if source_label is not None else Path(path).stem)


def save_csv(samples: SampleSet, path, header: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"x{j}" for j in range(samples.d)])
        for row in samples.data:
            w.writerow([repr(float(v)) for v in row])
