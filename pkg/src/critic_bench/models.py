"""Critic and generator networks, toy-GAN training, and ``.cbm`` checkpoints."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import objectives
from .autodiff import Tensor
from .data import CorruptionSpec, DistributionSpec, SampleSet, SpecError, corrupt, sample
from .rng import derive_seed, make_rng, normal

ACTIVATIONS = ("leaky-relu", "tanh", "softplus")
SMOOTH_ACTIVATIONS = ("tanh", "softplus")
HEADS = ("sigmoid", "linear")
_OPEN_LO = np.nextafter(0.0, 1.0)
_OPEN_HI = np.nextafter(1.0, 0.0)

_NP_ACT: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "leaky-relu": lambda h: np.where(h > 0, h, ad.LEAKY_SLOPE * h),
    "tanh": np.tanh,
    "softplus": lambda h: np.logaddexp(0.0, h),
}
_AD_ACT = {"leaky-relu": ad.leaky_relu, "tanh": ad.tanh, "softplus": ad.softplus}


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, last_finite_loss: float | None, detail: str = ""):
        self.iteration = iteration
        self.last_finite_loss = last_finite_loss
        super().__init__(
            f"non-finite loss at iteration {iteration} (last finite loss {last_finite_loss}) {detail}".strip()
        )


def param_count(widths) -> int:
    return int(sum(a * b + b for a, b in zip(widths[:-1], widths[1:])))


def init_params(widths, seed: int) -> list[np.ndarray]:
    """Uniform(-s, s) weights with s = sqrt(6 / (fan_in + fan_out)); zero biases."""
    rng = make_rng(seed)
    params = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        params.append(-s + 2 * s * rng.random((fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def mlp_numpy(params, x: np.ndarray, activation: str) -> np.ndarray:
    act = _NP_ACT[activation]
    h = np.asarray(x, dtype=np.float64)
    last = len(params) // 2 - 1
    for i in range(last + 1):
        h = h @ params[2 * i] + params[2 * i + 1]
        if i < last:
            h = act(h)
    return h


def mlp_tensor(params: list[Tensor], x: Tensor, activation: str) -> Tensor:
    act = _AD_ACT[activation]
    h = x
    last = len(params) // 2 - 1
    for i in range(last + 1):
        h = ad.add(ad.matmul(h, params[2 * i]), params[2 * i + 1])
        if i < last:
            h = act(h)
    return h


def _check_params(widths, params) -> None:
    if params is None or len(params) != 2 * (len(widths) - 1):
        raise SpecError("params: uninitialized or wrong layer count")
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        if np.shape(params[2 * i]) != (a, b) or np.shape(params[2 * i + 1]) != (b,):
            raise SpecError(f"params[{2 * i}]: shape mismatch with widths {list(widths)}")


@dataclass
class CriticNetwork:
    widths: tuple[int, ...]
    activation: str = "leaky-relu"
    head: str = "linear"
    params: list[np.ndarray] | None = None

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if len(self.widths) < 2 or self.widths[-1] != 1 or min(self.widths) < 1:
            raise SpecError(f"widths: need [d, ..., 1] with positive entries, got {list(self.widths)}")
        if self.activation not in ACTIVATIONS:
            raise SpecError(f"activation: {self.activation!r} not in {ACTIVATIONS}")
        if self.head not in HEADS:
            raise SpecError(f"head: {self.head!r} not in {HEADS}")
        if self.params is not None:
            self.params = [np.asarray(p, dtype=np.float64) for p in self.params]
            _check_params(self.widths, self.params)

    @classmethod
    def create(cls, widths, activation="leaky-relu", head="linear", seed: int = 0) -> "CriticNetwork":
        return cls(tuple(widths), activation, head, init_params(widths, seed))

    @property
    def n_params(self) -> int:
        return param_count(self.widths)

    @property
    def smooth(self) -> bool:
        # no hidden layer means no activation is ever applied
        return self.activation in SMOOTH_ACTIVATIONS or len(self.widths) == 2

    def _input(self, batch) -> np.ndarray:
        x = batch.data if isinstance(batch, SampleSet) else np.asarray(batch, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.widths[0]:
            raise SpecError(f"batch: width {x.shape[-1]} does not match critic input {self.widths[0]}")
        return x

    def logits(self, batch) -> np.ndarray:
        if self.params is None:
            raise SpecError("params: critic is uninitialized")
        return mlp_numpy(self.params, self._input(batch), self.activation)[:, 0]

    def __call__(self, batch) -> np.ndarray:
        out = self.logits(batch)
        if self.head == "linear":
            return out
        # saturated logits round to exactly 0 or 1; keep the head's open range
        return np.clip(ad._sigmoid_np(out), _OPEN_LO, _OPEN_HI)

    def tensor_fn(self, params: list[Tensor]):
        """Batch Tensor -> (batch,) pre-head outputs, differentiable in ``params``."""

        def fn(x: Tensor) -> Tensor:
            out = mlp_tensor(params, x, self.activation)
            return ad.reshape(out, (out.shape[0],))

        return fn

    def copy(self) -> "CriticNetwork":
        return replace(self, params=[p.copy() for p in self.params] if self.params else None)


def critic_forward(critic: CriticNetwork, batch) -> np.ndarray:
    return critic(batch)


def input_gradient_graph(
    critic: CriticNetwork, points, params: list[Tensor] | None = None
) -> tuple[Tensor, list[Tensor]]:
    """grad_x D(x) at ``points`` as differentiable nodes, plus the parameter leaves.

    Rows are independent, so the gradient of the summed outputs gives every
    row's input gradient at once.
    """
    if not critic.smooth:
        raise SpecError(
            f"activation: input gradients need a smooth activation {SMOOTH_ACTIVATIONS}, got {critic.activation!r}"
        )
    if params is None:
        params = [Tensor(p, requires_grad=True) for p in critic.params]
    x = points if isinstance(points, Tensor) else Tensor(critic._input(points), requires_grad=True)
    (gx,) = ad.grad(ad.sum(critic.tensor_fn(params)(x)), [x], create_graph=True)
    return gx, params


def check_criterion(critic: CriticNetwork, criterion: str) -> None:
    if criterion == "GC" and critic.head != "sigmoid":
        raise SpecError("head: GC critics need a sigmoid head")
    if criterion in ("LS", "IW") and critic.head != "linear":
        raise SpecError(f"head: {criterion} critics need a linear head")
    if criterion == "IW" and not critic.smooth:
        raise SpecError(
            f"activation: IW needs a smooth hidden activation {SMOOTH_ACTIVATIONS}, got {critic.activation!r}"
        )
    if criterion not in objectives.CRITERIA:
        raise SpecError(f"criterion: {criterion!r} not in {objectives.CRITERIA}")


@dataclass
class GeneratorModel:
    """Either an analytic corruption of a known distribution or a neural G(z)."""

    kind: str
    distribution: DistributionSpec | None = None
    corruption: CorruptionSpec | None = None
    widths: tuple[int, ...] = ()
    activation: str = "leaky-relu"
    params: list[np.ndarray] | None = None

    def __post_init__(self):
        if self.kind == "analytic":
            if self.distribution is None:
                raise SpecError("distribution: analytic generators wrap a DistributionSpec")
            if self.corruption is None:
                self.corruption = CorruptionSpec("intensity-shift", 0.0)
        elif self.kind == "neural":
            self.widths = tuple(int(w) for w in self.widths)
            if len(self.widths) < 2 or self.widths[0] < 1:
                raise SpecError("widths: neural generators need [|z|, ..., d] with |z| >= 1")
            if self.activation not in ACTIVATIONS:
                raise SpecError(f"activation: {self.activation!r} not in {ACTIVATIONS}")
            if self.params is not None:
                self.params = [np.asarray(p, dtype=np.float64) for p in self.params]
                _check_params(self.widths, self.params)
        else:
            raise SpecError(f"kind: {self.kind!r} not in ('analytic', 'neural')")

    @classmethod
    def analytic(cls, dist: DistributionSpec, corruption: CorruptionSpec | None = None) -> "GeneratorModel":
        return cls("analytic", dist, corruption)

    @classmethod
    def neural(cls, widths, activation="leaky-relu", seed: int = 0) -> "GeneratorModel":
        return cls("neural", widths=tuple(widths), activation=activation, params=init_params(widths, seed))

    @property
    def noise_dim(self) -> int:
        return self.widths[0] if self.kind == "neural" else 0

    @property
    def dim(self) -> int:
        return self.widths[-1] if self.kind == "neural" else self.distribution.dim

    def describe(self) -> dict:
        if self.kind == "analytic":
            return {
                "kind": "analytic",
                "distribution": self.distribution.to_dict(),
                "corruption": self.corruption.to_dict(),
            }
        return {"kind": "neural", "widths": list(self.widths), "activation": self.activation}


def generate(gen: GeneratorModel, n: int, seed: int) -> SampleSet:
    if n < 1:
        raise SpecError(f"n: must be >= 1, got {n}")
    if gen.kind == "analytic":
        clean = sample(gen.distribution, n, derive_seed(seed, "draw"))
        return corrupt(clean, gen.corruption, derive_seed(seed, "corrupt"))
    if gen.params is None:
        raise SpecError("params: generator is uninitialized")
    z = normal(make_rng(seed), (n, gen.noise_dim))
    return SampleSet(mlp_numpy(gen.params, z, gen.activation), "train", "neural-generator")


@dataclass
class CriticArch:
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "leaky-relu"
    head: str = "linear"

    def widths(self, d: int) -> tuple[int, ...]:
        return (d, *self.hidden, 1)


@dataclass
class GeneratorArch:
    noise_dim: int = 2
    hidden: tuple[int, ...] = (64, 64)
    activation: str = "leaky-relu"

    def widths(self, d: int) -> tuple[int, ...]:
        return (self.noise_dim, *self.hidden, d)


def scaled(hidden, factor: float) -> tuple[int, ...]:
    return tuple(max(1, int(round(h * factor))) for h in hidden)


def default_critic_arch(criterion: str) -> CriticArch:
    if criterion == "GC":
        return CriticArch(head="sigmoid")
    if criterion == "IW":
        return CriticArch(activation="tanh")
    return CriticArch()


@dataclass
class TrainConfig:
    criterion: str = "LS"
    lr_d: float = 0.05
    lr_g: float = 0.05
    d_steps: int = 1
    g_steps: int = 1
    batch_size: int = 128
    iterations: int = 2000
    seed: int = 0
    penalty_weight: float = 10.0
    ls_a: float = 0.0
    ls_b: float = 1.0
    momentum: float = 0.5

    def __post_init__(self):
        if self.criterion not in objectives.CRITERIA:
            raise SpecError(f"criterion: {self.criterion!r} not in {objectives.CRITERIA}")
        if self.lr_d <= 0 or self.lr_g <= 0:
            raise SpecError("lr_d/lr_g: learning rates must be positive")
        if self.d_steps < 1 or self.g_steps < 1:
            raise SpecError("d_steps/g_steps: update-ratio components must be >= 1")
        if self.batch_size < 1 or self.iterations < 1:
            raise SpecError("batch_size/iterations: must be >= 1")
        if self.penalty_weight < 0:
            raise SpecError("penalty_weight: must be >= 0")
        if not self.ls_a < self.ls_b:
            raise SpecError("ls_a/ls_b: a < b required")
        if not 0 <= self.momentum < 1:
            raise SpecError("momentum: must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


class SGD:
    """Plain SGD with heavy-ball momentum on a list of numpy arrays (in place)."""

    def __init__(self, params: list[np.ndarray], lr: float, momentum: float = 0.0):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads, ascend: bool = False) -> None:
        sign = 1.0 if ascend else -1.0
        for p, v, g in zip(self.params, self.velocity, grads):
            v *= self.momentum
            v += g
            p += sign * self.lr * v


def critic_objective(
    criterion: str,
    critic: CriticNetwork,
    params: list[Tensor],
    real: np.ndarray,
    fake: np.ndarray,
    rng: np.random.Generator,
    penalty_weight: float = 10.0,
    ls_a: float = 0.0,
    ls_b: float = 1.0,
) -> tuple[Tensor, float]:
    """Training objective to maximize and the unpenalized objective value."""
    fn = critic.tensor_fn(params)
    m = real.shape[0]
    out = fn(Tensor(np.concatenate([real, fake])))
    mask_r = np.zeros(out.shape[0])
    mask_r[:m] = 1.0 / m
    mask_f = np.zeros(out.shape[0])
    mask_f[m:] = 1.0 / fake.shape[0]
    # masked sums split the joint forward pass back into real and fake halves
    if criterion == "GC":
        obj = ad.neg(
            ad.add(
                ad.sum(ad.mul(ad.softplus(ad.neg(out)), mask_r)),
                ad.sum(ad.mul(ad.softplus(out), mask_f)),
            )
        )
    elif criterion == "LS":
        obj = ad.neg(
            ad.add(
                ad.sum(ad.mul(ad.square(ad.add(out, -ls_b)), mask_r)),
                ad.sum(ad.mul(ad.square(ad.add(out, -ls_a)), mask_f)),
            )
        )
    else:
        obj = ad.sum(ad.mul(out, mask_r - mask_f))
    value = obj.item()
    if criterion == "IW" and penalty_weight > 0:
        k = min(m, fake.shape[0])
        u = rng.random(k)
        pen = objectives.gradient_penalty(fn, real[:k], fake[:k], u)
        obj = ad.add(obj, ad.mul(pen, -penalty_weight))
    return obj, value


@dataclass
class GANRun:
    generator: GeneratorModel
    critic: CriticNetwork
    config: TrainConfig
    curve: list[dict] = field(default_factory=list)


def train_toy_gan(
    data: SampleSet,
    cfg: TrainConfig,
    critic_arch: CriticArch | None = None,
    gen_arch: GeneratorArch | None = None,
) -> GANRun:
    """Alternate ``d_steps`` critic ascent steps with ``g_steps`` generator steps."""
    if data.role != "train":
        raise SpecError(f"data.role: expected 'train', got {data.role!r}")
    critic_arch = critic_arch or default_critic_arch(cfg.criterion)
    gen_arch = gen_arch or GeneratorArch()
    d = data.d
    critic = CriticNetwork.create(
        critic_arch.widths(d), critic_arch.activation, critic_arch.head, derive_seed(cfg.seed, "critic-init")
    )
    check_criterion(critic, cfg.criterion)
    gen = GeneratorModel.neural(gen_arch.widths(d), gen_arch.activation, derive_seed(cfg.seed, "gen-init"))
    opt_d = SGD(critic.params, cfg.lr_d, cfg.momentum)
    opt_g = SGD(gen.params, cfg.lr_g, cfg.momentum)
    rng = make_rng(derive_seed(cfg.seed, "minibatch"))
    x_all = data.data
    m = cfg.batch_size
    curve: list[dict] = []
    last_finite = None

    def fail(it, detail=""):
        raise TrainingDiverged(it, last_finite, detail)

    for it in range(cfg.iterations):
        for _ in range(cfg.d_steps):
            real = x_all[rng.integers(0, x_all.shape[0], m)]
            fake = mlp_numpy(gen.params, normal(rng, (m, gen.noise_dim)), gen.activation)
            cp = [Tensor(p, requires_grad=True) for p in critic.params]
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    obj, d_val = critic_objective(
                        cfg.criterion, critic, cp, real, fake, rng, cfg.penalty_weight, cfg.ls_a, cfg.ls_b
                    )
                    grads = ad.grad(obj, cp)
            except ad.DomainError as exc:
                fail(it, str(exc))
            if not np.isfinite(obj.item()):
                fail(it, "(critic)")
            opt_d.step([g.data for g in grads], ascend=True)
        for _ in range(cfg.g_steps):
            gp = [Tensor(p, requires_grad=True) for p in gen.params]
            z = Tensor(normal(rng, (m, gen.noise_dim)))
            fake_t = mlp_tensor(gp, z, gen.activation)
            frozen = [Tensor(p) for p in critic.params]
            out = critic.tensor_fn(frozen)(fake_t)
            loss = objectives.generator_loss(cfg.criterion, out, cfg.ls_b)
            g_val = loss.item()
            if not np.isfinite(g_val):
                fail(it, "(generator)")
            grads = ad.grad(loss, gp)
            opt_g.step([g.data for g in grads])
        last_finite = g_val
        curve.append({"iteration": it, "critic_objective": d_val, "generator_loss": g_val})
    return GANRun(gen, critic, cfg, curve)


# checkpoints

CBM_MAGIC = b"CBM1"


def save_checkpoint(model: CriticNetwork | GeneratorModel, path, meta: dict | None = None) -> None:
    """JSON header (architecture plus caller metadata) then float64 params, little-endian."""
    if isinstance(model, CriticNetwork):
        header = {"model": "critic", "widths": list(model.widths), "activation": model.activation, "head": model.head}
    else:
        header = {"model": "generator", **model.describe()}
    params = model.params or []
    header["param_shapes"] = [list(p.shape) for p in params]
    header.update(meta or {})
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CBM_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for p in params:
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[CriticNetwork | GeneratorModel, dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != CBM_MAGIC:
        raise SpecError(f"{path}: bad magic")
    (hlen,) = struct.unpack_from("<I", raw, 4)
    header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    off = 8 + hlen
    params = []
    for shape in header["param_shapes"]:
        count = int(np.prod(shape))
        if off + 8 * count > len(raw):
            raise SpecError(f"{path}: truncated parameter blob")
        params.append(np.frombuffer(raw, "<f8", count, off).reshape(shape).astype(np.float64))
        off += 8 * count
    if header["model"] == "critic":
        model = CriticNetwork(tuple(header["widths"]), header["activation"], header["head"], params)
    elif header["kind"] == "analytic":
        model = GeneratorModel.analytic(
            DistributionSpec.from_dict(header["distribution"]), CorruptionSpec.from_dict(header["corruption"])
        )
    else:
        model = GeneratorModel("neural", widths=tuple(header["widths"]), activation=header["activation"], params=params)
    return model, header
