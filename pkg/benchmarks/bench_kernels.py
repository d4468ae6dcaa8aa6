"""Timing comparison of the compiled kernel extension vs the numpy fallback.

Micro-benchmarks call both backend modules directly; the end-to-end rows run
one training step in a subprocess per backend (the backend is chosen at
import, so each measurement needs a fresh interpreter).

    python3 benchmarks/bench_kernels.py            # full table
    python3 benchmarks/bench_kernels.py --micro    # skip the subprocess rows
"""

import argparse
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from sudseg.diffcore import _kernels_np  # noqa: E402

try:
    from sudseg.diffcore import _kernels_cy
except ImportError:
    _kernels_cy = None


def timeit(fn, *args, repeat=20):
    fn(*args)  # warm up
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def micro_cases(rng):
    x = rng.standard_normal((8, 64, 64)).astype(np.float32)
    big = rng.standard_normal((16, 32, 32)).astype(np.float32)
    cols = _kernels_np.im2col(x, 3, 3, 1, 1)
    pooled, idx = _kernels_np.maxpool2(big)
    dy = rng.standard_normal(pooled.shape).astype(np.float32)
    up = rng.standard_normal((16, 32, 32)).astype(np.float32)
    return [
        ("im2col 8x64x64 k3", lambda k: k.im2col(x, 3, 3, 1, 1)),
        ("im2col 16x32x32 k3 s2", lambda k: k.im2col(big, 3, 3, 2, 1)),
        ("col2im 8x64x64 k3", lambda k: k.col2im(cols, 8, 64, 64, 3, 3, 1, 1)),
        ("maxpool2 16x32x32", lambda k: k.maxpool2(big)),
        ("maxpool2_backward", lambda k: k.maxpool2_backward(dy, idx)),
        ("max_unpool2", lambda k: k.max_unpool2(dy, idx)),
        ("max_unpool2_backward", lambda k: k.max_unpool2_backward(up, idx)),
    ]


def run_micro():
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numpy':>10s} {'compiled':>10s} {'speedup':>8s}")
    for name, call in micro_cases(rng):
        t_np = timeit(call, _kernels_np)
        if _kernels_cy is None:
            print(f"{name:28s} {t_np * 1e6:9.1f}u {'n/a':>10s}")
            continue
        t_cy = timeit(call, _kernels_cy)
        print(f"{name:28s} {t_np * 1e6:9.1f}u {t_cy * 1e6:9.1f}u {t_np / t_cy:7.1f}x")


STEP_SNIPPET = """
import time
import numpy as np
from sudseg import nets, synth, trainer, config
from sudseg.diffcore.kernels import BACKEND

cfg = config.from_flat({
    "scene.height": "64", "scene.width": "64",
    "net.levels": "3", "net.base_features": "4",
    "train.precision": "float32", "train.steps": "60",
    "run_dir": "",
})
img, lab = synth.gen_scene(cfg.scene, np.random.default_rng(0))
uimg, _ = synth.gen_scene(cfg.scene, np.random.default_rng(1))
ctx = trainer._make_context(cfg)
params = nets.build_reconstructor(cfg.net, np.random.default_rng([0, trainer.P_INIT]))
params.cast(ctx.dtype)
state = trainer.TrainState(step=0, params=params, teacher=None,
                           store=__import__("sudseg.temporal", fromlist=["x"]).SoftTargetStore(),
                           adam=trainer.Adam(params.tensors, lr=cfg.train.lr))
for _ in range(5):
    trainer.sud_step(state, (img, lab), (uimg, "u0"), ctx)
t0 = time.perf_counter()
for _ in range(50):
    trainer.sud_step(state, (img, lab), (uimg, "u0"), ctx)
dt = (time.perf_counter() - t0) / 50
print(f"{BACKEND}: {dt * 1e3:.2f} ms/step")
"""


def run_step_bench():
    print("\nfull training step, 64x64 scene, levels=3 base=4, float32:")
    for backend in ("numpy", "compiled"):
        if backend == "compiled" and _kernels_cy is None:
            print("compiled: extension not built")
            continue
        env = dict(os.environ, SUDSEG_KERNELS=backend)
        out = subprocess.run([sys.executable, "-c", STEP_SNIPPET], env=env,
                             capture_output=True, text=True, cwd=Path(__file__).parent.parent)
        print((out.stdout.strip() or out.stderr.strip().splitlines()[-1]))


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--micro", action="store_true", help="kernel micro-benchmarks only")
    args = ap.parse_args()
    run_micro()
    if not args.micro:
        run_step_bench()
