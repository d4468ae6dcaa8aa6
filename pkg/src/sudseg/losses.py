"""Losses and evaluation metrics.

Fields are (C, H, W) probability arrays; label maps are (H, W) integer
arrays. Each training loss has a plain-numpy form and a `_t` twin built from
tape ops so it can be differentiated; both compute the same value.

Dice uses the squared-norm form per class, d_j = 2<z_j,f_j> / (|z_j|^2 +
|f_j|^2), averaged over classes. Its closed-form gradient with respect to the
first argument is (1/J) * (2/(|z_j|^2+|f_j|^2)) * (d_j z_j - f_j).
"""

from __future__ import annotations

import warnings

import numpy as np

from .diffcore import Tensor, ops

PROB_CLAMP = 1e-12


def is_prob_field(arr, tol: float = 1e-6) -> bool:
    return (
        arr.ndim == 3
        and bool(np.all(arr >= -tol))
        and bool(np.abs(arr.sum(axis=0) - 1.0).max() <= tol)
    )


def one_hot(labels: np.ndarray, n_classes: int, dtype=np.float64) -> np.ndarray:
    out = np.zeros((n_classes,) + labels.shape, dtype=dtype)
    np.put_along_axis(out, labels[None].astype(np.intp), 1.0, axis=0)
    return out


# -- cross-entropy ----------------------------------------------------------


def cross_entropy(pred: np.ndarray, target: np.ndarray) -> float:
    if pred.shape[1:] != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    picked = np.take_along_axis(pred, target[None].astype(np.intp), axis=0)[0]
    if np.any(picked <= 0.0):
        warnings.warn("cross_entropy: zero probability at target class, clamping", RuntimeWarning)
    return float(-np.log(np.maximum(picked, PROB_CLAMP)).mean())


def cross_entropy_t(pred: Tensor, target: np.ndarray) -> Tensor:
    picked = ops.gather_label_probs(pred, target)
    return ops.neg(ops.tmean(ops.log(ops.clip_min(picked, PROB_CLAMP))))


def soft_cross_entropy(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over pixels of -sum_c target_c log pred_c (soft target field)."""
    lp = np.log(np.maximum(pred, PROB_CLAMP))
    h, w = pred.shape[1:]
    return float(-(target * lp).sum() / (h * w))


def soft_cross_entropy_t(pred: Tensor, target: np.ndarray) -> Tensor:
    lp = ops.log(ops.clip_min(pred, PROB_CLAMP))
    h, w = pred.data.shape[1:]
    return ops.scale(ops.tsum(ops.mul(lp, Tensor(target))), -1.0 / (h * w))


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    h, w = pred.shape[1:]
    d = pred - target
    return float(0.5 * (d * d).sum() / (h * w))


def mse_t(pred: Tensor, target: np.ndarray) -> Tensor:
    h, w = pred.data.shape[1:]
    d = ops.sub(pred, Tensor(target))
    return ops.scale(ops.tsum(ops.mul(d, d)), 0.5 / (h * w))


# -- dice -------------------------------------------------------------------


def _dice_terms(z: np.ndarray, f: np.ndarray):
    num = 2.0 * (z * f).sum(axis=(1, 2))
    den = (z * z).sum(axis=(1, 2)) + (f * f).sum(axis=(1, 2))
    degenerate = den == 0.0
    return num, den, degenerate


def dice_loss(pred: np.ndarray, target: np.ndarray) -> float:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    num, den, deg = _dice_terms(target, pred)
    if deg.any():
        warnings.warn(f"dice_loss: {int(deg.sum())} degenerate class(es), scored as d=1", RuntimeWarning)
    d = np.where(deg, 1.0, num / np.where(deg, 1.0, den))
    return float(np.mean(1.0 - d))


def dice_loss_t(z: Tensor | np.ndarray, f: Tensor | np.ndarray) -> Tensor:
    """Tape form; differentiable in either argument. Degenerate classes pinned to d=1."""
    zt = z if isinstance(z, Tensor) else Tensor(z)
    ft = f if isinstance(f, Tensor) else Tensor(f)
    num = ops.scale(ops.tsum(ops.mul(zt, ft), axis=(1, 2)), 2.0)
    den = ops.add(ops.tsum(ops.mul(zt, zt), axis=(1, 2)), ops.tsum(ops.mul(ft, ft), axis=(1, 2)))
    deg = (den.data == 0.0).astype(den.data.dtype)
    safe = ops.div(num, ops.add(den, Tensor(deg)))
    d = ops.add(ops.mul(safe, Tensor(1.0 - deg)), Tensor(deg))
    return ops.tmean(ops.sub(Tensor(np.ones_like(d.data)), d))


def dice_grad(z: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Gradient of dice_loss(z, f) with respect to z, closed form."""
    if z.shape != f.shape:
        raise ValueError(f"shape mismatch: {z.shape} vs {f.shape}")
    num, den, deg = _dice_terms(z, f)
    if deg.any():
        warnings.warn(f"dice_grad: {int(deg.sum())} degenerate class(es), zero gradient", RuntimeWarning)
    den_safe = np.where(deg, 1.0, den)
    d = np.where(deg, 1.0, num / den_safe)
    j = z.shape[0]
    g = (2.0 / den_safe)[:, None, None] * (d[:, None, None] * z - f) / j
    g[deg] = 0.0
    return g


# -- hard-label metrics -----------------------------------------------------


def dice_scores(pred: np.ndarray, ref: np.ndarray, n_classes: int) -> dict[int, float]:
    """Per-class hard Dice; classes absent from ref map to nan."""
    if pred.shape != ref.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    out: dict[int, float] = {}
    for c in range(n_classes):
        a = pred == c
        b = ref == c
        nb = int(b.sum())
        if nb == 0:
            out[c] = float("nan")
            continue
        na = int(a.sum())
        inter = int(np.logical_and(a, b).sum())
        out[c] = 2.0 * inter / (na + nb)
    return out


def mean_dice(pred: np.ndarray, ref: np.ndarray, n_classes: int, include_background: bool = True) -> float:
    scores = dice_scores(pred, ref, n_classes)
    start = 0 if include_background else 1
    vals = [v for c, v in scores.items() if c >= start and not np.isnan(v)]
    if not vals:
        return float("nan")
    return float(np.mean(vals))


def boundary_points(mask: np.ndarray) -> np.ndarray:
    """Mask pixels with any 4-neighbor outside the mask (image border counts as outside)."""
    m = mask.astype(bool)
    pad = np.zeros((m.shape[0] + 2, m.shape[1] + 2), dtype=bool)
    pad[1:-1, 1:-1] = m
    interior = pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:]
    return np.argwhere(m & ~interior)


def hausdorff95(a: np.ndarray, b: np.ndarray, spacing=(1.0, 1.0)) -> float:
    """95th percentile of pooled symmetric boundary distances, linear interpolation."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if not a.any() or not b.any():
        raise ValueError("undefined distance: empty mask")
    pa = boundary_points(a) * np.asarray(spacing, dtype=np.float64)
    pb = boundary_points(b) * np.asarray(spacing, dtype=np.float64)
    diff = pa[:, None, :] - pb[None, :, :]
    dmat = np.sqrt((diff * diff).sum(axis=2))
    pooled = np.concatenate([dmat.min(axis=1), dmat.min(axis=0)])
    return float(np.percentile(pooled, 95))
