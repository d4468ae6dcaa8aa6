"""Synthetic data: label corruption for denoiser training, procedural scenes,
augmentation, and on-disk dataset plumbing.

Corruption pipeline: one-hot -> log with the zero-probability entries mapped
to the clip floor (-3 by default) -> additive Gaussian noise drawn at a
coarser scale and bilinearly upsampled -> per-pixel softmax. At sigma=0 the
field's argmax reproduces the input label exactly.

Scenes pair a label map of overlapping shapes (class identity is the shape
kind: ellipse, box, annulus) with an intensity image whose per-class means
overlap under pixel noise and a smooth multiplicative bias field, so shape
rather than texture carries most of the class evidence.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# -- corruption pipeline ------------------------------------------------------


@dataclass(frozen=True)
class CorruptionParams:
    sigma: float = 0.0
    varsigma: int = 1
    clip: tuple[float, float] = (-3.0, 0.0)

    def validate(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.varsigma < 1:
            raise ValueError("varsigma must be a positive integer")
        if self.clip[0] >= self.clip[1]:
            raise ValueError("clip range must be increasing")


def bilinear_upsample(src: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Resize the last two axes to out_hw; samples sit at pixel centers."""
    h_in, w_in = src.shape[-2:]
    h_out, w_out = out_hw
    if (h_in, w_in) == (h_out, w_out):
        return src.copy()

    def coords(n_out, n_in):
        c = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        return np.clip(c, 0.0, n_in - 1.0)

    yy = coords(h_out, h_in)
    xx = coords(w_out, w_in)
    y0 = np.floor(yy).astype(np.intp)
    x0 = np.floor(xx).astype(np.intp)
    y1 = np.minimum(y0 + 1, h_in - 1)
    x1 = np.minimum(x0 + 1, w_in - 1)
    wy = (yy - y0)[:, None]
    wx = (xx - x0)[None, :]
    a = src[..., y0[:, None], x0[None, :]]
    b = src[..., y0[:, None], x1[None, :]]
    c = src[..., y1[:, None], x0[None, :]]
    d = src[..., y1[:, None], x1[None, :]]
    return (a * (1 - wy) * (1 - wx) + b * (1 - wy) * wx + c * wy * (1 - wx) + d * wy * wx)


def _softmax_channels(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=0, keepdims=True))
    return e / e.sum(axis=0, keepdims=True)


def corrupt_labels(y: np.ndarray, p: CorruptionParams, rng: np.random.Generator, n_classes: int) -> np.ndarray:
    p.validate()
    h, w = y.shape
    if p.varsigma > min(h, w):
        raise ValueError(f"spatial scale {p.varsigma} exceeds canvas {(h, w)}")
    lo, hi = p.clip
    base = np.where(
        np.arange(n_classes)[:, None, None] == y[None], 0.0, lo
    )
    base = np.clip(base, lo, hi)
    if p.sigma > 0:
        hs = -(-h // p.varsigma)  # ceil
        ws = -(-w // p.varsigma)
        noise = rng.normal(0.0, p.sigma, size=(n_classes, hs, ws))
        base = base + bilinear_upsample(noise, (h, w))
    return _softmax_channels(base)


def make_denoiser_dataset(labels, sigma_range, varsigma_range, count: int, rng: np.random.Generator, n_classes: int):
    """Sample labels with replacement and corrupt each with fresh (sigma, varsigma)."""
    if not labels:
        raise ValueError("empty label list")
    out = []
    for _ in range(count):
        idx = int(rng.integers(len(labels)))
        sigma = float(rng.uniform(*sigma_range))
        varsigma = int(rng.integers(varsigma_range[0], varsigma_range[1] + 1))
        y = labels[idx]
        f = corrupt_labels(y, CorruptionParams(sigma=sigma, varsigma=varsigma), rng, n_classes)
        out.append((f, y))
    return out


# -- procedural scenes --------------------------------------------------------

SHAPE_KINDS = ("ellipse", "box", "annulus")


@dataclass(frozen=True)
class ShapeSceneConfig:
    height: int = 64
    width: int = 64
    n_classes: int = 4
    shapes_per_class: tuple[int, int] = (1, 2)
    radius_range: tuple[float, float] = (7.0, 16.0)
    background_mean: float = 0.25
    class_means: tuple[float, ...] = (0.55, 0.62, 0.69)
    pixel_noise: float = 0.08
    bias_amplitude: float = 0.15
    bias_grid: int = 4

    def validate(self):
        if self.n_classes < 2:
            raise ValueError("need at least background + 1 class")
        if len(self.class_means) < self.n_classes - 1:
            raise ValueError("need a mean intensity per foreground class")
        if self.radius_range[0] <= 0 or self.radius_range[0] > self.radius_range[1]:
            raise ValueError("bad radius range")


def _shape_mask(kind: str, h: int, w: int, cx, cy, r1, r2, theta) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    dx = xx - cx
    dy = yy - cy
    ct, st = np.cos(theta), np.sin(theta)
    u = dx * ct + dy * st
    v = -dx * st + dy * ct
    if kind == "ellipse":
        return (u / r1) ** 2 + (v / r2) ** 2 <= 1.0
    if kind == "box":
        return (np.abs(u) <= r1) & (np.abs(v) <= r2)
    if kind == "annulus":
        rr = np.sqrt(dx * dx + dy * dy)
        inner = 0.45 * r1
        return (rr <= r1) & (rr >= inner)
    raise ValueError(f"unknown shape kind {kind}")


def gen_scene(cfg: ShapeSceneConfig, rng: np.random.Generator):
    """Returns (image (H,W) float64, label (H,W) int64)."""
    cfg.validate()
    h, w = cfg.height, cfg.width
    shapes = []
    for c in range(1, cfg.n_classes):
        kind = SHAPE_KINDS[(c - 1) % len(SHAPE_KINDS)]
        count = int(rng.integers(cfg.shapes_per_class[0], cfg.shapes_per_class[1] + 1))
        for _ in range(count):
            cx = rng.uniform(0.15 * w, 0.85 * w)
            cy = rng.uniform(0.15 * h, 0.85 * h)
            r1 = rng.uniform(*cfg.radius_range)
            r2 = rng.uniform(*cfg.radius_range)
            theta = rng.uniform(0.0, np.pi)
            shapes.append((c, kind, cx, cy, r1, r2, theta))
    order = rng.permutation(len(shapes))
    label = np.zeros((h, w), dtype=np.int64)
    for i in order:
        c, kind, cx, cy, r1, r2, theta = shapes[i]
        label[_shape_mask(kind, h, w, cx, cy, r1, r2, theta)] = c

    means = np.array((cfg.background_mean,) + tuple(cfg.class_means[: cfg.n_classes - 1]))
    image = means[label] + rng.normal(0.0, cfg.pixel_noise, size=(h, w))
    if cfg.bias_amplitude > 0:
        grid = rng.uniform(-1.0, 1.0, size=(cfg.bias_grid, cfg.bias_grid))
        bias = 1.0 + cfg.bias_amplitude * bilinear_upsample(grid, (h, w))
        image = image * bias
    return image, label


# -- augmentation -------------------------------------------------------------


@dataclass(frozen=True)
class AugmentOpts:
    flip_p: float = 0.0
    elastic_p: float = 0.0
    elastic_grid: int = 16
    elastic_shift: float = 4.0
    intensity_scale_p: float = 0.0
    intensity_scale_range: tuple[float, float] = (0.75, 1.25)
    noise_p: float = 0.0
    noise_scale_range: tuple[float, float] = (0.0, 0.1)


def _warp(image: np.ndarray, label: np.ndarray, dy: np.ndarray, dx: np.ndarray):
    h, w = image.shape
    yy, xx = np.mgrid[0:h, 0:w]
    sy = np.clip(yy + dy, 0.0, h - 1.0)
    sx = np.clip(xx + dx, 0.0, w - 1.0)
    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = sy - y0
    wx = sx - x0
    img = (
        image[y0, x0] * (1 - wy) * (1 - wx)
        + image[y0, x1] * (1 - wy) * wx
        + image[y1, x0] * wy * (1 - wx)
        + image[y1, x1] * wy * wx
    )
    yn = np.clip(np.rint(sy), 0, h - 1).astype(np.intp)
    xn = np.clip(np.rint(sx), 0, w - 1).astype(np.intp)
    lab = label[yn, xn]
    return img, lab


def augment(image: np.ndarray, label: np.ndarray, rng: np.random.Generator, opts: AugmentOpts):
    """Geometric ops hit image and label identically (label nearest-neighbor);
    intensity ops hit the image only. Order: flips, elastic, scale, noise."""
    img = image.copy()
    lab = label.copy()
    if opts.flip_p > 0 and rng.random() < opts.flip_p:
        if rng.random() < 0.5:
            img = img[::-1].copy()
            lab = lab[::-1].copy()
        if rng.random() < 0.5:
            img = img[:, ::-1].copy()
            lab = lab[:, ::-1].copy()
    if opts.elastic_p > 0 and rng.random() < opts.elastic_p:
        g = opts.elastic_grid
        disp = rng.uniform(-opts.elastic_shift, opts.elastic_shift, size=(2, g, g))
        dy = bilinear_upsample(disp[0], img.shape)
        dx = bilinear_upsample(disp[1], img.shape)
        img, lab = _warp(img, lab, dy, dx)
    if opts.intensity_scale_p > 0 and rng.random() < opts.intensity_scale_p:
        img = img * rng.uniform(*opts.intensity_scale_range)
    if opts.noise_p > 0 and rng.random() < opts.noise_p:
        scale = rng.uniform(*opts.noise_scale_range)
        img = img + rng.normal(0.0, 1.0, size=img.shape) * scale
    return img, lab


# -- P5 graymap I/O and dataset layout ---------------------------------------

INTENSITY_SCALE = 32768.0  # stored value = round(intensity * scale), u16


def write_pgm16(path, img: np.ndarray) -> None:
    q = np.clip(np.rint(img * INTENSITY_SCALE), 0, 65535).astype(">u2")
    with open(path, "wb") as f:
        f.write(f"P5\n{img.shape[1]} {img.shape[0]}\n65535\n".encode())
        f.write(q.tobytes())


def write_pgm8(path, label: np.ndarray) -> None:
    if label.min() < 0 or label.max() > 255:
        raise ValueError("label indices must fit u8")
    with open(path, "wb") as f:
        f.write(f"P5\n{label.shape[1]} {label.shape[0]}\n255\n".encode())
        f.write(label.astype(np.uint8).tobytes())


def read_pgm(path) -> np.ndarray:
    """Returns float64 intensities for 16-bit maps, int64 indices for 8-bit."""
    with open(path, "rb") as f:
        data = f.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P5":
        raise ValueError(f"not a P5 graymap: {path}")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    pos += 1  # single whitespace after maxval
    if maxval > 255:
        arr = np.frombuffer(data, dtype=">u2", count=h * w, offset=pos).reshape(h, w)
        return arr.astype(np.float64) / INTENSITY_SCALE
    arr = np.frombuffer(data, dtype=np.uint8, count=h * w, offset=pos).reshape(h, w)
    return arr.astype(np.int64)


SPLITS = ("labeled", "unlabeled", "val", "test", "denoiser")


@dataclass
class Dataset:
    root: Path
    n_classes: int
    height: int
    width: int
    splits: dict = field(default_factory=dict)  # split -> list of (id, image, label)

    def split(self, name):
        return self.splits.get(name, [])


def write_dataset(root, scene_cfg: ShapeSceneConfig, counts: dict[str, int], master_seed: int) -> None:
    """Generate scenes per split. Each example's RNG derives from
    (master_seed, split index, item index), so splits are disjoint streams."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    lines = [
        f"# n_classes {scene_cfg.n_classes}",
        f"# height {scene_cfg.height}",
        f"# width {scene_cfg.width}",
        f"# intensity_scale {INTENSITY_SCALE}",
        f"# master_seed {master_seed}",
    ]
    for split, count in counts.items():
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        sidx = SPLITS.index(split)
        for i in range(count):
            rng = np.random.default_rng([master_seed, sidx, i])
            image, label = gen_scene(scene_cfg, rng)
            ex_id = f"{split}-{i:04d}"
            write_pgm16(root / "images" / f"{ex_id}.pgm", image)
            write_pgm8(root / "labels" / f"{ex_id}.pgm", label)
            lines.append(f"{ex_id} {split} {master_seed}:{sidx}:{i}")
    (root / "manifest.txt").write_text("\n".join(lines) + "\n")


def load_dataset(root) -> Dataset:
    root = Path(root)
    manifest = root / "manifest.txt"
    if not manifest.exists():
        raise FileNotFoundError(f"no manifest in {root}")
    meta = {}
    rows = []
    for line in manifest.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            k, v = line[1:].split(None, 1)
            meta[k] = v
            continue
        rows.append(line.split())
    ds = Dataset(
        root=root,
        n_classes=int(meta["n_classes"]),
        height=int(meta["height"]),
        width=int(meta["width"]),
    )
    for ex_id, split, _seed in rows:
        image = read_pgm(root / "images" / f"{ex_id}.pgm")
        label = read_pgm(root / "labels" / f"{ex_id}.pgm")
        ds.splits.setdefault(split, []).append((ex_id, image, label))
    return ds
