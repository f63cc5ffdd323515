"""Differentiable critic and generator objectives shared by GAN training and
test-time critics. Critic objectives are maximized, generator losses minimized.

GC terms take pre-sigmoid logits: log(sigmoid(t)) = -softplus(-t) and
log(1 - sigmoid(t)) = -softplus(t), which stay finite where a clamped
sigmoid would saturate.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CRITERIA = ("GC", "LS", "IW")


def gc_critic(real_logits: Tensor, fake_logits: Tensor) -> Tensor:
    return ad.neg(ad.add(ad.mean(ad.softplus(ad.neg(real_logits))), ad.mean(ad.softplus(fake_logits))))


def ls_critic(real: Tensor, fake: Tensor, a: float = 0.0, b: float = 1.0) -> Tensor:
    return ad.neg(ad.add(ad.mean(ad.square(ad.add(real, -b))), ad.mean(ad.square(ad.add(fake, -a)))))


def iw_critic(real: Tensor, fake: Tensor) -> Tensor:
    return ad.add(ad.mean(real), ad.neg(ad.mean(fake)))


def gradient_penalty(critic_fn, real: np.ndarray, fake: np.ndarray, u: np.ndarray) -> Tensor:
    """mean over x_hat = u*x + (1-u)*s of (||grad_x D(x_hat)|| - 1)^2.

    ``critic_fn`` maps a (batch, d) Tensor to the (batch,) critic outputs and
    must close over parameter Tensors so the result is differentiable in them.
    """
    u = np.asarray(u, dtype=np.float64).reshape(-1, 1)
    x_hat = Tensor(u * real + (1.0 - u) * fake, requires_grad=True)
    (gx,) = ad.grad(ad.sum(critic_fn(x_hat)), [x_hat], create_graph=True)
    return ad.mean(ad.square(ad.add(ad.l2_norm(gx), -1.0)))


def generator_loss(criterion: str, fake_out: Tensor, b: float = 1.0) -> Tensor:
    """GC uses the non-saturating -log D(G(z)); LS pulls D(G(z)) toward b."""
    if criterion == "GC":
        return ad.mean(ad.softplus(ad.neg(fake_out)))
    if criterion == "LS":
        return ad.mean(ad.square(ad.add(fake_out, -b)))
    if criterion == "IW":
        return ad.neg(ad.mean(fake_out))
    raise ValueError(f"criterion: {criterion!r} not in {CRITERIA}")
