"""Straight-from-formula reference implementations used as test oracles.

Everything here works on Python floats with mpmath accumulation and explicit
loops, sharing no code with the package.
"""

from __future__ import annotations

import mpmath as mp

mp.mp.dps = 40


def _flat(t) -> list[float]:
    return [float(v) for v in t.detach().reshape(-1).tolist()]


def sigmoid(a) -> mp.mpf:
    return 1 / (1 + mp.e ** (-mp.mpf(a)))


def adv(real, fake) -> float:
    r, f = _flat(real), _flat(fake)
    a = mp.fsum(mp.log(sigmoid(v)) for v in r) / len(r)
    b = mp.fsum(mp.log(1 - sigmoid(v)) for v in f) / len(f)
    return float(a + b)


def mcd(real, fake) -> float:
    return -adv(real, fake)


def decoder_adv(fake, mode: str) -> float:
    f = _flat(fake)
    if mode == "saturating":
        return float(mp.fsum(mp.log(1 - sigmoid(v)) for v in f) / len(f))
    return float(-mp.fsum(mp.log(sigmoid(v)) for v in f) / len(f))


def l1(x, y) -> float:
    a, b = _flat(x), _flat(y)
    assert len(a) == len(b)
    return float(mp.fsum(abs(mp.mpf(p) - mp.mpf(q)) for p, q in zip(a, b)) / len(a))


def decoder_total(fake, x, x_rec, lam: float, mode: str) -> float:
    return float(mp.mpf(decoder_adv(fake, mode)) + lam * mp.mpf(l1(x, x_rec)))


def cross_entropy(logits, labels) -> float:
    """Mean negative log-softmax; ``labels`` are integer class indices."""
    rows = logits.detach().tolist()
    total = mp.mpf(0)
    for row, c in zip(rows, labels):
        lse = mp.log(mp.fsum(mp.e ** mp.mpf(v) for v in row))
        total += lse - mp.mpf(row[int(c)])
    return float(total / len(rows))


def stargan(d_real, d_fake, cls_real, real_idx, cls_fake, tgt_idx, x, x_rec, lam_cls, lam_rec):
    l_adv = mp.mpf(adv(d_real, d_fake))
    l_d = -l_adv + lam_cls * mp.mpf(cross_entropy(cls_real, real_idx))
    l_g = l_adv + lam_cls * mp.mpf(cross_entropy(cls_fake, tgt_idx)) + lam_rec * mp.mpf(l1(x, x_rec))
    return float(l_d), float(l_g)


def select(d, label) -> list[float]:
    """Mean of the label-selected logits, per row."""
    out = []
    for row, lab in zip(d.tolist(), label.tolist()):
        chosen = [v for v, c in zip(row, lab) if c == 1]
        out.append(sum(chosen) / len(chosen))
    return out


def wgan_gp_quadratic(d_real, d_fake, real, fake, eps, w, lam) -> tuple[float, float]:
    """Critic s(x) = sum_j w_j x_j^2 per sample, so grad = 2 w x, computed by hand."""
    r, f, wv = real.reshape(real.shape[0], -1).tolist(), fake.reshape(fake.shape[0], -1).tolist(), _flat(w)
    pen = mp.mpf(0)
    for n in range(len(r)):
        e = mp.mpf(float(eps[n]))
        sq = mp.mpf(0)
        for j in range(len(wv)):
            xh = e * r[n][j] + (1 - e) * f[n][j]
            sq += (2 * wv[j] * xh) ** 2
        pen += (mp.sqrt(sq) - 1) ** 2
    pen /= len(r)
    dr, df = _flat(d_real), _flat(d_fake)
    mean_r, mean_f = mp.fsum(dr) / len(dr), mp.fsum(df) / len(df)
    return float(mean_f - mean_r + lam * pen), float(-mean_f)


def conv_params(k: int, c_in: int, c_out: int, bias: bool = True) -> int:
    return k * k * c_in * c_out + (c_out if bias else 0)


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-12)


def central_diff(fn, x, h: float = 1e-4):
    """Numerical gradient of scalar ``fn`` at tensor ``x`` (float64), element by element."""
    import torch

    x = x.detach().clone()
    grad = torch.zeros_like(x)
    flat, gflat = x.view(-1), grad.view(-1)
    for j in range(flat.numel()):
        orig = flat[j].item()
        flat[j] = orig + h
        up = float(fn(x))
        flat[j] = orig - h
        down = float(fn(x))
        flat[j] = orig
        gflat[j] = (up - down) / (2 * h)
    return grad


def grad_rel_err(analytic, numeric) -> float:
    diff = (analytic - numeric).norm().item()
    return diff / max(analytic.norm().item(), numeric.norm().item(), 1e-12)
