"""Experiment harness.

Subcommands: gen-data, train-denoiser, train, eval, sweep, spectrum. Every
run directory receives the fully resolved config, so any output can be
regenerated by pointing the same subcommand at that file. Exit codes:
0 success, 1 usage error, 2 data error, 3 numerical failure or divergence.
"""

from __future__ import annotations

import os

# pin BLAS threads before numpy loads so runs are bit-reproducible across
# machines; respects values the caller already exported
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
             "VECLIB_MAXIMUM_THREADS", "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import csv
import dataclasses
import shutil
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfglib
from . import nets, spatial, synth, trainer
from .config import ConfigError
from .trainer import DivergenceError

LOG_HEADER = ("step", "epoch", "mode", "alpha", "lambda", "train_loss", "val_mean_dice", "val_95hd")
SWEEP_AXES = ("beta", "alpha-const", "lambda-max", "mode", "denoiser-labels")


class UsageError(Exception):
    pass


# -- output helpers ---------------------------------------------------------


def _fmt(v) -> str:
    # repr floats survive a round trip, so identical runs give identical files
    return repr(v) if isinstance(v, float) else str(v)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _plot_sidecar(csv_path, lines) -> None:
    Path(csv_path).with_suffix(".plot.txt").write_text("\n".join(lines) + "\n")


def _parse_list(text: str, what: str) -> list[str]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise UsageError(f"empty {what} list")
    return items


# -- config assembly --------------------------------------------------------


def _base_cfg(args) -> cfglib.ExperimentConfig:
    return cfglib.load_config(args.config, args.set)


def _with_train(cfg, **kw):
    return dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, **kw))


def _with_data(cfg, **kw):
    return dataclasses.replace(cfg, data=dataclasses.replace(cfg.data, **kw))


def _run_dir(cfg, args) -> tuple[cfglib.ExperimentConfig, Path]:
    if args.out:
        cfg = dataclasses.replace(cfg, run_dir=args.out)
    if args.seed is not None:
        cfg = _with_train(cfg, seed=args.seed)
    cfg.validate()
    run_dir = Path(cfg.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    cfglib.write_config_file(run_dir / "config.txt", cfg)
    return cfg, run_dir


# -- subcommands ------------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = _base_cfg(args)
    if args.out:
        cfg = _with_data(cfg, dir=args.out)
    if args.seed is not None:
        cfg = _with_data(cfg, seed=args.seed)
    cfg.validate()
    counts = {name: getattr(cfg.data, name) for name in synth.SPLITS}
    if sum(counts.values()) == 0:
        raise UsageError("no examples requested; every split count is zero")
    root = Path(cfg.data.dir)
    if root.exists() and any(root.iterdir()):
        if not args.force:
            raise FileExistsError(f"{root} is not empty; pass --force to regenerate")
        shutil.rmtree(root)
    synth.write_dataset(root, cfg.scene, counts, cfg.data.seed)
    cfglib.write_config_file(root / "config.txt", cfg)
    print(f"wrote {sum(counts.values())} examples to {root}:",
          " ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


def cmd_train_denoiser(args) -> int:
    cfg, out = _run_dir(_base_cfg(args), args)
    if args.identity:
        # baseline that skips pretraining entirely
        (out / "denoiser.spec").write_text("kind identity\n")
        print(f"identity denoiser spec written to {out / 'denoiser.spec'}")
        return 0
    params, rows = trainer.train_denoiser(cfg, steps=args.steps)
    nets.save_model(out / "denoiser.sudt", params)
    write_csv(out / "denoiser_log.csv", ("step", "train_loss", "val_dice"),
              [(r["step"], r["train_loss"], r["val_dice"]) for r in rows])
    last = rows[-1]["val_dice"] if rows else float("nan")
    print(f"denoiser saved to {out / 'denoiser.sudt'} (val dice {last:.4f})")
    return 0


def cmd_train(args) -> int:
    cfg, run_dir = _run_dir(_base_cfg(args), args)
    try:
        model, log = trainer.train(cfg, resume_from=args.resume)
    except DivergenceError as e:
        # a diverged run is an outcome, not a crash: label it and exit 3
        (run_dir / "status.txt").write_text(f"{e}\n")
        print(str(e), file=sys.stderr)
        return 3
    nets.save_model(run_dir / "model.sudt", model)
    prior = []
    mpath = run_dir / "metrics.csv"
    if args.resume and mpath.exists():
        # keep rows logged before the resume point; the continuation rows are
        # bit-identical to an uninterrupted run, so the merged file is too
        with open(mpath, newline="") as fh:
            reader = csv.reader(fh)
            next(reader, None)
            prior = list(reader)
        if log:
            prior = [row for row in prior if int(row[0]) < log[0]["step"]]
    write_csv(mpath, LOG_HEADER, prior + [[r[k] for k in LOG_HEADER] for r in log])
    (run_dir / "status.txt").write_text("ok\n")
    if log:
        last = log[-1]
        print(f"{cfg.train.mode}: step {last['step']}, val dice {last['val_mean_dice']:.4f}, "
              f"val 95hd {last['val_95hd']:.3f} -> {run_dir}")
    else:
        print(f"{cfg.train.mode}: finished with no validation rows -> {run_dir}")
    return 0


def cmd_eval(args) -> int:
    params = nets.load_model(args.model)
    ds = synth.load_dataset(args.data)
    if params.cfg.n_classes != ds.n_classes:
        raise ValueError(f"model has {params.cfg.n_classes} classes, dataset {ds.n_classes}")
    examples = ds.split(args.split)
    if not examples:
        raise ValueError(f"split {args.split!r} of {args.data} is empty")
    rows, summary = trainer.evaluate(params, examples, ds.n_classes)
    header = ["id", "mean_dice", "hd95"] + [f"dice_c{c}" for c in range(ds.n_classes)]
    table = [[r["id"], r["dice"], r["hd95"]] + [r["per_class"][c] for c in range(ds.n_classes)]
             for r in rows]
    mat = np.array([row[1:] for row in table], dtype=np.float64)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-nan columns
        table.append(["mean"] + [float(v) for v in np.nanmean(mat, axis=0)])
        table.append(["median"] + [float(v) for v in np.nanmedian(mat, axis=0)])
    out = Path(args.out) if args.out else Path(args.model).parent / f"eval_{args.split}.csv"
    write_csv(out, header, table)
    print(f"{len(rows)} examples: mean dice {summary['mean_dice']:.4f}, "
          f"mean 95hd {summary['mean_hd95']:.3f} -> {out}")
    return 0


def _axis_overrides(axis: str, value: str) -> dict[str, str]:
    if axis == "beta":
        return {"train.beta": value}
    if axis == "alpha-const":
        return {"train.alpha_curve": "constant", "train.alpha_value": value}
    if axis == "lambda-max":
        return {"train.lambda_max": value}
    if axis == "mode":
        return {"train.mode": value}
    return {}  # denoiser-labels handled in the worker


def _sweep_run(task):
    """One (value, seed) cell; returns (value, seed, dice, hd95, error or None)."""
    axis, value, seed, flat = task
    try:
        cfg = cfglib.from_flat(flat)
        run_dir = Path(cfg.run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        cfglib.write_config_file(run_dir / "config.txt", cfg)
        if axis == "denoiser-labels":
            n = int(value)
            ds = synth.load_dataset(cfg.data.dir)
            labels = [lab for _i, _img, lab in ds.split("denoiser")][:n]
            if len(labels) < n:
                raise ValueError(f"denoiser split has fewer than {n} labels")
            params, rows = trainer.train_denoiser(cfg, source_labels=labels)
            nets.save_model(run_dir / "denoiser.sudt", params)
            write_csv(run_dir / "denoiser_log.csv", ("step", "train_loss", "val_dice"),
                      [(r["step"], r["train_loss"], r["val_dice"]) for r in rows])
            dice = rows[-1]["val_dice"] if rows else float("nan")
            return value, seed, dice, float("nan"), None
        model, log = trainer.train(cfg)
        nets.save_model(run_dir / "model.sudt", model)
        write_csv(run_dir / "metrics.csv", LOG_HEADER, [[r[k] for k in LOG_HEADER] for r in log])
        ds = synth.load_dataset(cfg.data.dir)
        test = ds.split("test")
        if not test:
            raise ValueError("dataset has no test split")
        _rows, summary = trainer.evaluate(model, test, ds.n_classes)
        return value, seed, summary["mean_dice"], summary["mean_hd95"], None
    except Exception as e:  # keep the sweep going, record the failure
        return value, seed, float("nan"), float("nan"), f"{type(e).__name__}: {e}"


def cmd_sweep(args) -> int:
    base = _base_cfg(args)
    values = _parse_list(args.values, "values")
    seeds = [int(s) for s in _parse_list(args.seeds, "seeds")]
    out = Path(args.out or f"runs/sweep-{args.axis}")
    out.mkdir(parents=True, exist_ok=True)

    base_flat = cfglib.to_flat(base)
    tasks = []
    for value in values:
        for seed in seeds:  # same seed list per value, so columns are paired
            flat = dict(base_flat)
            flat.update(_axis_overrides(args.axis, value))
            flat["train.seed"] = str(seed)
            flat["run_dir"] = str(out / f"{args.axis}-{value}" / f"seed-{seed}")
            cfglib.from_flat(flat).validate()  # fail fast on bad axis values
            tasks.append((args.axis, value, seed, flat))

    if args.parallel > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as pool:
            results = list(pool.map(_sweep_run, tasks))
    else:
        results = [_sweep_run(t) for t in tasks]

    rows, errors = [], []
    for value, seed, dice, hd, err in results:
        rows.append((value, seed, dice, hd))
        if err:
            errors.append(f"{args.axis}={value} seed={seed}: {err}")
    csv_path = out / "sweep.csv"
    write_csv(csv_path, ("value", "seed", "dice", "95hd"), rows)
    _plot_sidecar(csv_path, [
        f"x: {args.axis}",
        "y: test mean dice (foreground classes)",
        "series: one line per seed; aggregate: median over seeds per value",
        f"rows: {len(rows)} ({len(values)} values x {len(seeds)} seeds)",
    ])
    if errors:
        (out / "errors.txt").write_text("\n".join(errors) + "\n")
        print(f"{len(errors)} of {len(rows)} runs failed; see {out / 'errors.txt'}", file=sys.stderr)
    print(f"sweep over {args.axis} complete -> {csv_path}")
    return 0


def cmd_spectrum(args) -> int:
    try:
        if args.kernel:
            taps = np.array([float(t) for t in _parse_list(args.kernel, "kernel")])
            ring = spatial.LinearDenoiser(kernel=taps, n=args.ring)
        else:
            taps_n = args.taps or 2 * int(np.ceil(3.0 * args.sigma)) + 1
            ring = spatial.LinearDenoiser.gaussian_ring(args.sigma, taps_n, args.ring)
        betas = [float(b) for b in _parse_list(args.betas, "beta")]
        factors = [(b, spatial.filter_factors(ring, b)) for b in betas]
    except ValueError as e:
        raise UsageError(str(e)) from e
    rows = []
    for b, ff in factors:
        for lam, d, p in zip(ff.lambdas, ff.direct, ff.proximal):
            rows.append((b, float(lam), float(d), float(p), abs(float(d) - float(p)), (b * float(lam)) ** 2))
    csv_path = Path(args.out or "spectrum.csv")
    write_csv(csv_path, ("beta", "lambda", "direct", "proximal", "gap", "bound"), rows)
    _plot_sidecar(csv_path, [
        "x: lambda (eigenvalues of I - A, ascending)",
        "y: filter factor per mode frequency",
        "series: direct = 1 - beta*lambda, proximal = 1/(1 + beta*lambda), one pair per beta",
        "note: proximal has all-pass floor 1/(1+beta); gap <= bound = (beta*lambda)^2",
    ])
    print(f"{len(rows)} rows over {len(factors)} beta values -> {csv_path}")
    return 0


# -- argument parsing --------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; keep 1 = usage
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sudseg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True, metavar="command")

    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--seed", type=int, help="override the subcommand's base seed")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--force", action="store_true", help="replace existing outputs")

    g = sub.add_parser("gen-data", parents=[common], help="generate a synthetic dataset")
    g.set_defaults(func=cmd_gen_data)

    d = sub.add_parser("train-denoiser", parents=[common], help="pretrain the label-field denoiser")
    d.add_argument("--steps", type=int, help="override train.steps for the denoiser")
    d.add_argument("--identity", action="store_true",
                   help="skip training and emit an identity-denoiser spec")
    d.set_defaults(func=cmd_train_denoiser)

    t = sub.add_parser("train", parents=[common], help="train a segmentation model")
    t.add_argument("--resume", metavar="CKPT", help="resume from a training checkpoint")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a saved model on a dataset split")
    e.add_argument("--model", required=True, metavar="PATH", help="model file (.sudt)")
    e.add_argument("--data", required=True, metavar="DIR", help="dataset directory")
    e.add_argument("--split", default="test", help="dataset split (default: test)")
    e.add_argument("--out", metavar="PATH", help="output CSV path")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", parents=[common], help="train+eval over one hyperparameter axis")
    s.add_argument("--axis", required=True, choices=SWEEP_AXES)
    s.add_argument("--values", required=True, help="comma-separated axis values")
    s.add_argument("--seeds", default="0", help="comma-separated seeds, matched across values")
    s.add_argument("--parallel", type=int, default=1, metavar="N",
                   help="run up to N sweep cells concurrently (default: sequential)")
    s.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("spectrum", help="filter factors of a linear smoother on a ring")
    sp.add_argument("--sigma", type=float, default=1.0, help="gaussian kernel width in pixels")
    sp.add_argument("--taps", type=int, help="kernel length (odd; default covers 3 sigma)")
    sp.add_argument("--kernel", help="explicit comma-separated taps instead of a gaussian")
    sp.add_argument("--ring", type=int, default=64, help="ring size N")
    sp.add_argument("--betas", default="0.05,0.125,1.0", help="comma-separated beta values")
    sp.add_argument("--out", metavar="PATH", help="output CSV path")
    sp.set_defaults(func=cmd_spectrum)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except DivergenceError as e:
        print(f"diverged: {e}", file=sys.stderr)
        return 3
    except (FloatingPointError, ZeroDivisionError, RuntimeError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    except (FileNotFoundError, ValueError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
