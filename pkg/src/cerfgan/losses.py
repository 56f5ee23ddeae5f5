"""Objective terms for CerfGAN, the StarGAN baseline and the WGAN-GP variant.

All adversarial inputs are raw logits; log-sigmoid keeps the probabilistic
losses finite for large magnitudes. Expectations are batch means (and
spatial means when the head emits a logit map).
"""

from __future__ import annotations

from typing import Callable, Optional

import torch
import torch.nn.functional as F
from torch import Tensor

SATURATING = "saturating"
NON_SATURATING = "non-saturating"
DEFAULT_LAMBDA_REC = 100.0
DEFAULT_LAMBDA_GP = 10.0


def _finite(*tensors: Tensor) -> None:
    for t in tensors:
        if not bool(torch.isfinite(t).all()):
            raise ValueError("non-finite logits")


def _nonneg(**weights: float) -> None:
    for name, w in weights.items():
        if w < 0:
            raise ValueError(f"{name} must be non-negative, got {w}")


def adv_loss(d_real_sel: Tensor, d_fake_sel: Tensor) -> Tensor:
    """mean log sigma(real) + mean log(1 - sigma(fake))."""
    _finite(d_real_sel, d_fake_sel)
    return F.logsigmoid(d_real_sel).mean() + F.logsigmoid(-d_fake_sel).mean()


def mcd_loss(d_real_sel: Tensor, d_fake_sel: Tensor) -> Tensor:
    return -adv_loss(d_real_sel, d_fake_sel)


def decoder_adv_loss(d_fake_sel: Tensor, mode: str = NON_SATURATING) -> Tensor:
    _finite(d_fake_sel)
    if mode == SATURATING:
        return F.logsigmoid(-d_fake_sel).mean()
    if mode == NON_SATURATING:
        return -F.logsigmoid(d_fake_sel).mean()
    raise ValueError(f"unknown decoder adversarial mode {mode!r}")


def reconstruction_loss(x: Tensor, x_rec: Tensor) -> Tensor:
    if x.shape != x_rec.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(x_rec.shape)}")
    return (x - x_rec).abs().mean()


def decoder_total_loss(d_fake_sel: Tensor, x: Tensor, x_rec: Tensor,
                       lambda_rec: float = DEFAULT_LAMBDA_REC,
                       mode: str = NON_SATURATING) -> Tensor:
    _nonneg(lambda_rec=lambda_rec)
    return decoder_adv_loss(d_fake_sel, mode) + lambda_rec * reconstruction_loss(x, x_rec)


def classification_loss(cls_logits: Tensor, labels: Tensor) -> Tensor:
    """Cross-entropy of domain logits against integer labels or one-hot rows."""
    if labels.dim() == 2:
        labels = labels.argmax(dim=1)
    return F.cross_entropy(cls_logits, labels)


def stargan_losses(d_real: Tensor, d_fake: Tensor,
                   cls_real: Tensor, real_labels: Tensor,
                   cls_fake: Tensor, target_labels: Tensor,
                   x: Tensor, x_rec: Tensor,
                   lambda_cls: float = 1.0, lambda_rec: float = 10.0,
                   mode: Optional[str] = None) -> tuple[Tensor, Tensor]:
    """Discriminator and generator objectives of the StarGAN baseline.

    With ``mode=None`` the generator carries the full adversarial value as
    written: ``L_G = L_adv + lambda_cls * L_cls^f + lambda_rec * L_rec``, so
    only the fake term moves it. A mode name swaps in the corresponding
    decoder-style adversarial term instead.
    """
    _nonneg(lambda_cls=lambda_cls, lambda_rec=lambda_rec)
    l_adv = adv_loss(d_real, d_fake)
    loss_d = -l_adv
    if lambda_cls:
        loss_d = loss_d + lambda_cls * classification_loss(cls_real, real_labels)
    g_adv = l_adv if mode is None else decoder_adv_loss(d_fake, mode)
    loss_g = g_adv + lambda_rec * reconstruction_loss(x, x_rec)
    if lambda_cls:
        loss_g = loss_g + lambda_cls * classification_loss(cls_fake, target_labels)
    return loss_d, loss_g


def interpolate(real: Tensor, fake: Tensor, eps: Optional[Tensor] = None,
                generator: Optional[torch.Generator] = None) -> Tensor:
    """Per-sample convex mix ``eps * real + (1 - eps) * fake``, eps ~ U[0, 1)."""
    if eps is None:
        eps = torch.rand(real.shape[0], generator=generator, dtype=real.dtype)
    eps = eps.reshape(-1, *([1] * (real.dim() - 1)))
    return eps * real + (1 - eps) * fake


def gradient_penalty(critic_sel: Callable[[Tensor], Tensor], x_hat: Tensor) -> Tensor:
    """mean over samples of (||grad_x critic_sel(x_hat)||_2 - 1)^2."""
    if not x_hat.requires_grad:
        x_hat = x_hat.detach().requires_grad_(True)
    scores = critic_sel(x_hat)
    if not scores.requires_grad:
        raise RuntimeError("critic output does not depend on its input; gradient unavailable")
    grad, = torch.autograd.grad(scores.sum(), x_hat, create_graph=True, allow_unused=True)
    if grad is None:
        grad = torch.zeros_like(x_hat)
    norm = grad.flatten(1).norm(2, dim=1)
    return ((norm - 1) ** 2).mean()


def wgan_gp_losses(d_real_sel: Tensor, d_fake_sel: Tensor,
                   critic_sel: Callable[[Tensor], Tensor],
                   real: Tensor, fake: Tensor,
                   lambda_gp: float = DEFAULT_LAMBDA_GP,
                   eps: Optional[Tensor] = None,
                   generator: Optional[torch.Generator] = None) -> tuple[Tensor, Tensor]:
    """Critic and decoder losses; ``critic_sel`` maps images to selected scores."""
    _nonneg(lambda_gp=lambda_gp)
    _finite(d_real_sel, d_fake_sel)
    x_hat = interpolate(real, fake, eps, generator)
    penalty = gradient_penalty(critic_sel, x_hat)
    critic = d_fake_sel.mean() - d_real_sel.mean() + lambda_gp * penalty
    return critic, -d_fake_sel.mean()
