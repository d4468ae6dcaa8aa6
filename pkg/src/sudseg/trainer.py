"""Training loop for semi-supervised segmentation with denoised soft targets.

One unified step implementation covers every supervision mode; the classical
modes are parameter presets over it:

    supervised-only      no unlabeled term
    red                  alpha=beta=1, target = denoised current prediction
    pi-model             alpha=1, beta=0 (target = current prediction)
    temporal-ensembling  beta=0, stored per-example EMA targets
    mean-teacher         beta=0, targets from weight-averaged teacher
    sud-stored           stored targets, spatial + temporal filtering
    sud-teacher          teacher targets, spatial blend; history lives in
                         the teacher weights (EMA rate (a-ab)/(1-ab))

Each step: schedule (alpha, lambda); form the target z from a no-grad forward
(teacher refreshed first in teacher modes); z is a plain array, so no gradient
ever flows through it; backprop supervised + lambda * unsupervised loss in one
pass; Adam. Per-step RNG streams derive from (seed, purpose, step), so resume
needs no generator state.
"""

from __future__ import annotations

import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import losses, nets, spatial, synth, temporal
from .config import ExperimentConfig
from .diffcore import Tensor, backward, no_grad, ops, save_tensors, load_tensors

# RNG stream purposes, keyed (seed, purpose, step)
P_INIT, P_LABELED_AUG, P_UNLABELED_AUG, P_TARGET_DROP, P_LAB_DROP, P_UNLAB_DROP = range(6)
P_DEN_VAL, P_DEN_DATA, P_DEN_DROP = 10, 11, 12

CHECKPOINT_NAME = "checkpoint.sudt"


class DivergenceError(RuntimeError):
    pass


# -- mode presets --------------------------------------------------------------


@dataclass(frozen=True)
class ModeSetup:
    uses_unlabeled: bool
    source: str = "student"  # student | teacher
    beta: float = 0.0
    alpha_override: float | None = None  # None: scheduled

    @property
    def needs_teacher(self):
        return self.source == "teacher"


def resolve_mode(mode: str, beta: float) -> ModeSetup:
    """Fixed modes pin their own (alpha, beta); cfg beta applies only to the
    two full variants."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    table = {
        "supervised-only": ModeSetup(False),
        "red": ModeSetup(True, "student", 1.0, alpha_override=1.0),
        "pi-model": ModeSetup(True, "student", 0.0, alpha_override=1.0),
        "temporal-ensembling": ModeSetup(True, "student", 0.0),
        "mean-teacher": ModeSetup(True, "teacher", 0.0),
        "sud-stored": ModeSetup(True, "student", beta),
        "sud-teacher": ModeSetup(True, "teacher", beta),
    }
    if mode not in table:
        raise ValueError(f"unknown supervision mode {mode!r}")
    return table[mode]


# -- optimizer -----------------------------------------------------------------


class Adam:
    def __init__(self, tensors, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = OrderedDict((k, np.zeros_like(p.data)) for k, p in tensors.items())
        self.v = OrderedDict((k, np.zeros_like(p.data)) for k, p in tensors.items())

    def step(self, tensors) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in tensors.items():
            g = p.grad
            if g is None:
                continue
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# -- soft-target update rules ---------------------------------------------------


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Per-pixel Euclidean projection of (C, H, W) onto the probability simplex."""
    c = v.shape[0]
    u = np.sort(v, axis=0)[::-1]
    css = np.cumsum(u, axis=0) - 1.0
    ks = np.arange(1, c + 1, dtype=v.dtype).reshape((c,) + (1,) * (v.ndim - 1))
    rho = np.count_nonzero(u - css / ks > 0, axis=0)
    tau = np.take_along_axis(css, rho[None] - 1, axis=0)[0] / rho.astype(v.dtype)
    return np.maximum(v - tau, 0.0)


def _target_grad(kind: str, z: np.ndarray, f: np.ndarray) -> np.ndarray:
    # derivative of the distance D(z, f) in its first argument, per pixel
    if kind == "mse":
        return z - f
    if kind == "cross-entropy":
        return -np.log(np.maximum(f, losses.PROB_CLAMP))
    if kind == "dice":
        return losses.dice_grad(z, f)
    raise ValueError(f"no target gradient for loss kind {kind!r}")


def _check_weights(alpha: float, beta: float):
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")


def target_update_blend(z_prev, f, af, alpha: float, beta: float) -> np.ndarray:
    """Three-way convex combination with weights (1-alpha, alpha(1-beta), alpha*beta).

    Grouped as alpha*(beta*af + (1-beta)*f) + (1-alpha)*z_prev; at beta=0 the
    denoised field is not needed and may be None.
    """
    _check_weights(alpha, beta)
    inner = f if beta == 0.0 else beta * af + (1.0 - beta) * f
    return alpha * inner + (1.0 - alpha) * z_prev


def target_update_projected(z_prev, f, af, alpha: float, beta: float, loss_kind: str = "mse") -> np.ndarray:
    """Gradient step on D(z, f) + beta * spatial penalty, then simplex projection."""
    _check_weights(alpha, beta)
    step = z_prev - alpha * _target_grad(loss_kind, z_prev, f)
    if beta != 0.0:
        step = step - (alpha * beta) * (f - af)
    return project_simplex(step)


def target_update_exponential(z_prev, f, af, alpha: float, beta: float, loss_kind: str = "mse") -> np.ndarray:
    """Multiplicative-weights form: softmax(log z - alpha*D' - alpha*beta*R').

    Stays on the simplex for any finite gradients. Zero entries of z_prev are
    clamped to the probability floor and flagged.
    """
    _check_weights(alpha, beta)
    if (z_prev < losses.PROB_CLAMP).any():
        warnings.warn("target_update_exponential: z entries clamped to floor", RuntimeWarning)
    logit = np.log(np.maximum(z_prev, losses.PROB_CLAMP)) - alpha * _target_grad(loss_kind, z_prev, f)
    if beta != 0.0:
        logit = logit - (alpha * beta) * (f - af)
    e = np.exp(logit - logit.max(axis=0, keepdims=True))
    return e / e.sum(axis=0, keepdims=True)


# -- run plumbing ----------------------------------------------------------------


@dataclass
class RunContext:
    ms: ModeSetup
    sched: temporal.Schedule
    denoiser: spatial.DenoiserSpec | None
    dtype: np.dtype
    seed: int
    sup_kind: str
    unsup_kind: str
    target_step: str
    aug_labeled: synth.AugmentOpts
    aug_unlabeled: synth.AugmentOpts
    two_pass: bool = False


@dataclass
class TrainState:
    step: int
    params: nets.ModelParams
    teacher: nets.ModelParams | None
    store: temporal.SoftTargetStore
    adam: Adam
    last_loss: float = float("nan")
    best_dice: float = float("-inf")
    best_params: nets.ModelParams | None = None


def _make_context(cfg: ExperimentConfig) -> RunContext:
    tc = cfg.train
    ms = resolve_mode(tc.mode, tc.beta)
    if ms.alpha_override is None:
        alpha_curve, alpha_value = tc.alpha_curve, tc.alpha_value
    else:
        alpha_curve, alpha_value = "constant", ms.alpha_override
    sched = temporal.Schedule(
        n_total=tc.steps,
        lambda_max=tc.lambda_max,
        alpha_curve=alpha_curve,
        alpha_value=alpha_value,
        lambda_curve=tc.lambda_curve,
        lambda_value=tc.lambda_value,
    )
    sched.validate()
    dtype = np.float32 if tc.precision == "float32" else np.float64

    denoiser = None
    if ms.uses_unlabeled and ms.beta > 0.0:
        if tc.denoiser_kind == "learned":
            if not tc.denoiser_path:
                raise ValueError("mode needs a denoiser but train.denoiser_path is empty")
            dp = nets.load_model(tc.denoiser_path).cast(dtype)
            denoiser = spatial.DenoiserSpec(kind="learned", params=dp)
        else:
            denoiser = spatial.DenoiserSpec(kind=tc.denoiser_kind, width=tc.denoiser_width)
        denoiser.validate()

    a = cfg.augment
    aug_labeled = synth.AugmentOpts(
        flip_p=a.flip_p,
        elastic_p=a.elastic_p,
        elastic_grid=a.elastic_grid,
        elastic_shift=a.elastic_shift,
        intensity_scale_p=a.intensity_scale_p,
        intensity_scale_range=(a.intensity_lo, a.intensity_hi),
        noise_p=a.noise_p,
        noise_scale_range=(0.0, a.noise_hi),
    )
    # geometric ops would shear stored targets off their pixels; unlabeled
    # examples get intensity-only augmentation
    aug_unlabeled = synth.AugmentOpts(
        intensity_scale_p=a.intensity_scale_p,
        intensity_scale_range=(a.intensity_lo, a.intensity_hi),
        noise_p=a.noise_p,
        noise_scale_range=(0.0, a.noise_hi),
    )
    unsup_kind = tc.sup_loss if tc.unsup_loss == "same" else tc.unsup_loss
    return RunContext(
        ms=ms,
        sched=sched,
        denoiser=denoiser,
        dtype=np.dtype(dtype),
        seed=tc.seed,
        sup_kind=tc.sup_loss,
        unsup_kind=unsup_kind,
        target_step=tc.target_step,
        aug_labeled=aug_labeled,
        aug_unlabeled=aug_unlabeled,
        two_pass=tc.two_pass_updates,
    )


def _sup_loss_t(kind: str, pred: Tensor, y: np.ndarray, n_classes: int, dtype) -> Tensor:
    if kind == "cross-entropy":
        return losses.cross_entropy_t(pred, y)
    if kind == "dice":
        return losses.dice_loss_t(losses.one_hot(y, n_classes, dtype=dtype), pred)
    raise ValueError(f"unknown supervised loss {kind!r}")


def _unsup_loss_t(kind: str, pred: Tensor, z: np.ndarray) -> Tensor:
    if kind == "mse":
        return losses.mse_t(pred, z)
    if kind == "cross-entropy":
        return losses.soft_cross_entropy_t(pred, z)
    if kind == "dice":
        return losses.dice_loss_t(z, pred)
    raise ValueError(f"unknown unsupervised loss {kind!r}")


def _opt_step(state: TrainState, loss_t: Tensor) -> None:
    for p in state.params.tensors.values():
        p.grad = None
    backward(loss_t)
    state.adam.step(state.params.tensors)


def sud_step(state: TrainState, labeled, unlabeled, ctx: RunContext) -> TrainState:
    """One training step; mutates state in place and returns it.

    labeled: (image (H,W), label (H,W)); unlabeled: (image (H,W), example id).
    """
    n = state.step
    ms = ctx.ms
    alpha, lam = temporal.schedule_at(ctx.sched, n)

    x_img, y = labeled
    rng_l = np.random.default_rng([ctx.seed, P_LABELED_AUG, n])
    x_img, y = synth.augment(x_img, y, rng_l, ctx.aug_labeled)
    x = x_img[None].astype(ctx.dtype)

    u = None
    z = None
    if ms.uses_unlabeled:
        u_img, uid = unlabeled
        rng_u = np.random.default_rng([ctx.seed, P_UNLABELED_AUG, n])
        u_img, _ = synth.augment(u_img, np.zeros(u_img.shape, dtype=np.int64), rng_u, ctx.aug_unlabeled)
        u = u_img[None].astype(ctx.dtype)

        # target pass sees this step's pre-update weights
        if ms.source == "teacher":
            abar = temporal.teacher_alpha(alpha, ms.beta)
            temporal.teacher_update(state.teacher, state.params, abar)
            tgt_params = state.teacher
        else:
            tgt_params = state.params
        rng_t = np.random.default_rng([ctx.seed, P_TARGET_DROP, n])
        with no_grad():
            ft = nets.forward(tgt_params, u, train=True, rng=rng_t).data
        af = spatial.apply_denoiser(ctx.denoiser, ft) if ms.beta > 0.0 else None

        if ms.source == "teacher":
            z = ft if af is None else spatial.direct_blend(ft, af, ms.beta)
        else:
            z_prev = state.store.get(uid, ft.shape, dtype=ft.dtype)
            if ctx.target_step == "convex-blend":
                z = target_update_blend(z_prev, ft, af, alpha, ms.beta)
            elif ctx.target_step == "projected-descent":
                z = target_update_projected(z_prev, ft, af, alpha, ms.beta, ctx.unsup_kind)
            elif ctx.target_step == "exponential-descent":
                z = target_update_exponential(z_prev, ft, af, alpha, ms.beta, ctx.unsup_kind)
            else:
                raise ValueError(f"unknown target step {ctx.target_step!r}")
        z = np.ascontiguousarray(z.astype(ctx.dtype))
        state.store.update(uid, z)

    n_classes = state.params.cfg.n_classes

    def labeled_loss() -> Tensor:
        rng = np.random.default_rng([ctx.seed, P_LAB_DROP, n])
        pred = nets.forward(state.params, x, train=True, rng=rng)
        return _sup_loss_t(ctx.sup_kind, pred, y, n_classes, ctx.dtype)

    def unlabeled_loss() -> Tensor:
        rng = np.random.default_rng([ctx.seed, P_UNLAB_DROP, n])
        pred = nets.forward(state.params, u, train=True, rng=rng)
        return _unsup_loss_t(ctx.unsup_kind, pred, z)

    if ctx.two_pass and ms.uses_unlabeled:
        # alternating variant: self-supervision step, then supervised step
        lu = ops.scale(unlabeled_loss(), lam)
        _check_finite_loss(float(lu.data), n)
        _opt_step(state, lu)
        ls = labeled_loss()
        loss_val = float(ls.data) + float(lu.data)
        _check_finite_loss(loss_val, n)
        _opt_step(state, ls)
    else:
        total = labeled_loss()
        if ms.uses_unlabeled:
            total = ops.add(total, ops.scale(unlabeled_loss(), lam))
        loss_val = float(total.data)
        _check_finite_loss(loss_val, n)
        _opt_step(state, total)

    state.last_loss = loss_val
    state.step = n + 1
    return state


def _check_finite_loss(value: float, step: int) -> None:
    if not np.isfinite(value) or value > 1e6:
        raise DivergenceError(f"diverged at step {step}: loss {value!r}")


# -- monitoring objective ---------------------------------------------------------


def joint_objective(params, targets, labeled_set, unlabeled_set, lam: float,
                    beta_tilde: float = 0.0, denoiser=None,
                    sup_kind: str = "cross-entropy", unsup_kind: str = "mse") -> float:
    """Full objective over datasets: mean supervised loss plus, per unlabeled
    example, lam * D(z, f(u)) + beta_tilde * 0.5 <z, z - a(z)>. Monitoring only."""
    dtype = next(iter(params.tensors.values())).data.dtype

    def pred(img):
        with no_grad():
            return nets.forward(params, img[None].astype(dtype), train=False).data

    total = 0.0
    if labeled_set:
        s = 0.0
        for _id, img, lab in labeled_set:
            p = pred(img)
            if sup_kind == "cross-entropy":
                s += losses.cross_entropy(p, lab)
            else:
                s += losses.dice_loss(losses.one_hot(lab, p.shape[0]), p)
        total += s / len(labeled_set)
    if unlabeled_set and (lam != 0.0 or beta_tilde != 0.0):
        s = 0.0
        for uid, img, _lab in unlabeled_set:
            p = pred(img)
            if isinstance(targets, temporal.SoftTargetStore):
                z = targets.get(uid, p.shape, dtype=p.dtype)
            else:
                z = targets[uid]
            if unsup_kind == "mse":
                d = losses.mse(p, z)
            elif unsup_kind == "cross-entropy":
                d = losses.soft_cross_entropy(p, z)
            else:
                d = losses.dice_loss(z, p)
            s += lam * d
            if beta_tilde != 0.0:
                az = spatial.apply_denoiser(denoiser, z)
                s += beta_tilde * 0.5 * float((z * (z - az)).sum())
        total += s / len(unlabeled_set)
    return float(total)


# -- evaluation --------------------------------------------------------------------


def evaluate(params: nets.ModelParams, examples, n_classes: int):
    """Per-example foreground mean Dice and mean 95HD; returns (rows, summary)."""
    dtype = next(iter(params.tensors.values())).data.dtype
    rows = []
    for ex_id, img, lab in examples:
        with no_grad():
            p = nets.forward(params, img[None].astype(dtype), train=False).data
        pred = p.argmax(axis=0)
        d = losses.mean_dice(pred, lab, n_classes, include_background=False)
        hds = []
        for c in range(1, n_classes):
            pm, rm = pred == c, lab == c
            if pm.any() and rm.any():
                hds.append(losses.hausdorff95(pm, rm))
        h = float(np.mean(hds)) if hds else float("nan")
        rows.append({"id": ex_id, "dice": d, "hd95": h,
                     "per_class": losses.dice_scores(pred, lab, n_classes)})
    dices = np.array([r["dice"] for r in rows], dtype=np.float64)
    hds = np.array([r["hd95"] for r in rows], dtype=np.float64)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-nan slices
        summary = {
            "mean_dice": float(np.nanmean(dices)) if len(rows) else float("nan"),
            "mean_hd95": float(np.nanmean(hds)) if len(rows) else float("nan"),
        }
    return rows, summary


def validate(params, examples, n_classes: int) -> tuple[float, float]:
    _rows, summary = evaluate(params, examples, n_classes)
    return summary["mean_dice"], summary["mean_hd95"]


# -- checkpointing -----------------------------------------------------------------


def save_checkpoint(path, state: TrainState) -> None:
    entries = OrderedDict()
    entries["meta/step"] = np.float64(state.step)
    entries["meta/adam_t"] = np.float64(state.adam.t)
    entries["meta/best_dice"] = np.float64(state.best_dice)
    for k, p in state.params.tensors.items():
        entries[f"param/{k}"] = p.data
    for k, m in state.adam.m.items():
        entries[f"adam_m/{k}"] = m
    for k, v in state.adam.v.items():
        entries[f"adam_v/{k}"] = v
    if state.teacher is not None:
        for k, p in state.teacher.tensors.items():
            entries[f"teacher/{k}"] = p.data
    if state.best_params is not None:
        for k, p in state.best_params.tensors.items():
            entries[f"best/{k}"] = p.data
    entries.update(state.store.snapshot())
    save_tensors(path, entries)


def load_checkpoint(path, state: TrainState, dtype) -> TrainState:
    """Restore into a freshly built state (same config and seed)."""
    entries = load_tensors(path)
    state.step = int(entries["meta/step"].item())
    state.adam.t = int(entries["meta/adam_t"].item())
    state.best_dice = float(entries["meta/best_dice"].item())

    def group(prefix):
        return {k[len(prefix):]: v for k, v in entries.items() if k.startswith(prefix)}

    state.params.load_state(group("param/"))
    for k in state.adam.m:
        state.adam.m[k] = entries[f"adam_m/{k}"].astype(dtype)
        state.adam.v[k] = entries[f"adam_v/{k}"].astype(dtype)
    if state.teacher is not None:
        state.teacher.load_state(group("teacher/"))
    best = group("best/")
    if best:
        state.best_params = state.params.copy()
        state.best_params.load_state(best)
    state.store.load_snapshot(
        {k: v for k, v in entries.items() if k.startswith(temporal.SoftTargetStore.PREFIX)},
        dtype=dtype,
    )
    return state


# -- training ------------------------------------------------------------------------


def train(cfg: ExperimentConfig, resume_from=None):
    """Run the configured experiment; returns (model, metric rows).

    Regularized modes return the final-step model; supervised-only returns the
    best-validation model. Writes checkpoints under cfg.run_dir when set.
    """
    cfg.validate()
    tc = cfg.train
    ds = synth.load_dataset(cfg.data.dir)
    if ds.n_classes != cfg.net.n_classes:
        raise ValueError(f"dataset has {ds.n_classes} classes, net config expects {cfg.net.n_classes}")
    labeled = ds.split("labeled")
    unlabeled = ds.split("unlabeled")
    val = ds.split("val")
    if not labeled:
        raise ValueError("dataset has no labeled split")
    ctx = _make_context(cfg)
    if ctx.ms.uses_unlabeled and not unlabeled:
        raise ValueError(f"mode {tc.mode!r} needs an unlabeled split")

    params = nets.build_reconstructor(cfg.net, np.random.default_rng([tc.seed, P_INIT]))
    params.cast(ctx.dtype)
    teacher = params.copy() if ctx.ms.needs_teacher else None
    state = TrainState(
        step=0,
        params=params,
        teacher=teacher,
        store=temporal.SoftTargetStore(),
        adam=Adam(params.tensors, lr=tc.lr, beta1=tc.adam_beta1, beta2=tc.adam_beta2, eps=tc.adam_eps),
    )
    if resume_from is not None:
        load_checkpoint(resume_from, state, ctx.dtype)

    run_dir = Path(cfg.run_dir) if cfg.run_dir else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = run_dir / CHECKPOINT_NAME if run_dir is not None else None

    log: list[dict] = []
    if tc.steps == 0:
        return state.params, log
    nL = len(labeled)
    nU = len(unlabeled)
    epoch_len = nU if nU else nL
    track_best = tc.mode == "supervised-only"

    for n in range(state.step, tc.steps):
        _id, li, ll = labeled[n % nL]
        lab_pair = (li, ll)
        unl_pair = None
        if nU:
            uid, ui, _ul = unlabeled[n % nU]
            unl_pair = (ui, uid)
        sud_step(state, lab_pair, unl_pair, ctx)
        done = n + 1
        if done % epoch_len == 0 or done == tc.steps:
            epoch = -(-done // epoch_len)
            if epoch % tc.val_every == 0 or done == tc.steps:
                vd, vhd = validate(state.params, val, cfg.net.n_classes) if val else (float("nan"), float("nan"))
                alpha, lam = temporal.schedule_at(ctx.sched, n)
                log.append({
                    "step": done,
                    "epoch": epoch,
                    "mode": tc.mode,
                    "alpha": alpha,
                    "lambda": lam,
                    "train_loss": state.last_loss,
                    "val_mean_dice": vd,
                    "val_95hd": vhd,
                })
                if track_best and vd >= state.best_dice:
                    state.best_dice = vd
                    state.best_params = state.params.copy()
        if run_dir is not None and tc.checkpoint_every and done % tc.checkpoint_every == 0:
            save_checkpoint(run_dir / f"checkpoint-{done:06d}.sudt", state)

    if ckpt_path is not None:
        save_checkpoint(ckpt_path, state)
    model = state.best_params if (track_best and state.best_params is not None) else state.params
    return model, log


# -- denoiser training ----------------------------------------------------------------


def train_denoiser(cfg: ExperimentConfig, steps: int | None = None, source_labels=None):
    """Fit the autoencoder to map corrupted label fields back to clean one-hots.

    Uses the dataset's denoiser split labels; each step draws a fresh
    corruption. Returns (params, rows) with per-epoch validation Dice of
    argmax(denoised) against held-out corrupted fields.
    """
    tc = cfg.train
    ds = synth.load_dataset(cfg.data.dir)
    labels = source_labels if source_labels is not None else [lab for _i, _img, lab in ds.split("denoiser")]
    if not labels:
        raise ValueError("dataset has no denoiser split")
    n_classes = ds.n_classes
    dcfg = cfg.denoiser_net
    if dcfg.n_classes != n_classes or dcfg.in_channels != n_classes:
        raise ValueError("denoiser net channels must equal the class count")
    dtype = np.float32 if tc.precision == "float32" else np.float64
    n_steps = tc.steps if steps is None else steps

    params = nets.build_denoiser(dcfg, np.random.default_rng([tc.seed, P_INIT, 1]))
    params.cast(dtype)
    adam = Adam(params.tensors, lr=tc.lr, beta1=tc.adam_beta1, beta2=tc.adam_beta2, eps=tc.adam_eps)

    # fixed held-out corruptions for validation
    vrng = np.random.default_rng([tc.seed, P_DEN_VAL, 1])
    val_pairs = synth.make_denoiser_dataset(labels, (1.0, 8.0), (1, 8), max(8, len(labels)), vrng, n_classes)

    rows = []
    val_every = max(1, n_steps // 10)
    for n in range(n_steps):
        rng = np.random.default_rng([tc.seed, P_DEN_DATA, n])
        idx = int(rng.integers(len(labels)))
        y = labels[idx]
        sigma = float(rng.uniform(0.0, 8.0))
        varsigma = int(rng.integers(1, 9))
        fin = synth.corrupt_labels(y, synth.CorruptionParams(sigma=sigma, varsigma=varsigma), rng, n_classes)
        target = losses.one_hot(y, n_classes, dtype=dtype)
        pred = nets.forward(params, fin.astype(dtype), train=True, rng=np.random.default_rng([tc.seed, P_DEN_DROP, n]))
        loss = losses.soft_cross_entropy_t(pred, target)
        _check_finite_loss(float(loss.data), n)
        for p in params.tensors.values():
            p.grad = None
        backward(loss)
        adam.step(params.tensors)
        if (n + 1) % val_every == 0 or n + 1 == n_steps:
            dices = []
            for fv, yv in val_pairs:
                with no_grad():
                    out = nets.forward(params, fv.astype(dtype), train=False).data
                dices.append(losses.mean_dice(out.argmax(axis=0), yv, n_classes))
            rows.append({"step": n + 1, "train_loss": float(loss.data), "val_dice": float(np.nanmean(dices))})
    return params, rows
