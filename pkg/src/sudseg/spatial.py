"""Spatial denoisers and their spectral analysis.

The training path applies a denoiser a(.) to probability fields: identity, a
channel-wise gaussian blur with per-pixel renormalization, or a learned
autoencoder. The analysis path studies linear symmetric smoothers A: the
direct blend beta*A + (1-beta)*I has filter factors 1 - beta*lam on the
eigenbasis of I - A, while the proximal map (I + beta*(I-A))^-1 has factors
1/(1 + beta*lam); their gap is at most (beta*lam)^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import no_grad

RENORM_FLOOR = 1e-12


@dataclass
class DenoiserSpec:
    kind: str = "identity"  # identity | gaussian | learned
    width: float = 1.0  # gaussian sigma, pixels
    params: object = None  # ModelParams for learned

    def validate(self):
        if self.kind not in ("identity", "gaussian", "learned"):
            raise ValueError(f"unknown denoiser kind {self.kind!r}")
        if self.kind == "gaussian" and self.width < 0:
            raise ValueError("gaussian width must be >= 0")
        if self.kind == "learned" and self.params is None:
            raise ValueError("learned denoiser needs model parameters")


def gaussian_kernel1d(sigma: float, radius: int | None = None) -> np.ndarray:
    if sigma <= 0:
        return np.array([1.0])
    if radius is None:
        radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _blur_axis(f: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """Correlate one spatial axis with zero padding."""
    r = (len(kernel) - 1) // 2
    if r == 0:
        return f * kernel[0]
    pad = [(0, 0)] * f.ndim
    pad[axis] = (r, r)
    fp = np.pad(f, pad)
    out = np.zeros_like(f)
    n = f.shape[axis]
    for i, wk in enumerate(kernel):
        sl = [slice(None)] * f.ndim
        sl[axis] = slice(i, i + n)
        out += wk * fp[tuple(sl)]
    return out


def gaussian_blur(f: np.ndarray, sigma: float) -> np.ndarray:
    k = gaussian_kernel1d(sigma)
    return _blur_axis(_blur_axis(f, k, 1), k, 2)


def _apply_raw(spec: DenoiserSpec, f: np.ndarray) -> np.ndarray:
    """Denoise without the simplex renormalization step (diagnostics path)."""
    spec.validate()
    if spec.kind == "identity":
        return f.copy()
    if spec.kind == "gaussian":
        return gaussian_blur(f, spec.width)
    from . import nets

    with no_grad():
        return nets.forward(spec.params, np.ascontiguousarray(f)).data


def apply_denoiser(spec: DenoiserSpec, f: np.ndarray) -> np.ndarray:
    out = _apply_raw(spec, f)
    if spec.kind == "gaussian":
        s = out.sum(axis=0, keepdims=True)
        out = out / np.maximum(s, RENORM_FLOOR)
    return out


def direct_blend(f: np.ndarray, af: np.ndarray, beta: float) -> np.ndarray:
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    return beta * af + (1.0 - beta) * f


def red_gradient(f: np.ndarray, spec: DenoiserSpec) -> np.ndarray:
    """Residual f - a(f): gradient of the denoising regularizer R(f) = <f, f - a(f)>/2."""
    return f - apply_denoiser(spec, f)


def homogeneity_check(spec: DenoiserSpec, f: np.ndarray, c: float) -> float:
    """max |a(c f) - c a(f)| / max |a(f)|, on pre-renormalization outputs."""
    if not 0.99 <= c <= 1.01:
        raise ValueError("c must be within 1% of 1")
    base = _apply_raw(spec, f)
    scaled = _apply_raw(spec, c * f)
    denom = np.abs(base).max()
    if denom == 0.0:
        return 0.0
    return float(np.abs(scaled - c * base).max() / denom)


# -- linear smoothers, spectral path ----------------------------------------


class LinearDenoiser:
    """Symmetric linear smoother, dense or circulant-by-kernel (periodic)."""

    def __init__(self, matrix: np.ndarray | None = None, kernel: np.ndarray | None = None, n: int | None = None):
        if (matrix is None) == (kernel is None):
            raise ValueError("give exactly one of matrix or (kernel, n)")
        if matrix is not None:
            matrix = np.asarray(matrix, dtype=np.float64)
            if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
                raise ValueError("matrix must be square")
            if np.abs(matrix - matrix.T).max() >= 1e-10:
                raise ValueError("asymmetric matrix")
            self.matrix = matrix
            self.kernel = None
            self.n = matrix.shape[0]
        else:
            kernel = np.asarray(kernel, dtype=np.float64)
            if kernel.ndim != 1 or len(kernel) % 2 == 0:
                raise ValueError("kernel must be 1-D with odd length")
            if n is None or n < len(kernel):
                raise ValueError("ring size must cover the kernel")
            if np.abs(kernel - kernel[::-1]).max() >= 1e-10:
                raise ValueError("asymmetric matrix")  # even kernel <=> symmetric circulant
            self.kernel = kernel
            self.matrix = None
            self.n = n

    @classmethod
    def gaussian_ring(cls, sigma: float, taps: int, n: int) -> "LinearDenoiser":
        r = (taps - 1) // 2
        return cls(kernel=gaussian_kernel1d(sigma, radius=r), n=n)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix @ v
        r = (len(self.kernel) - 1) // 2
        out = np.zeros_like(v, dtype=np.float64)
        for i, wk in enumerate(self.kernel):
            out += wk * np.roll(v, r - i)
        return out

    def dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        a = np.zeros((self.n, self.n))
        r = (len(self.kernel) - 1) // 2
        row = np.zeros(self.n)
        for i, wk in enumerate(self.kernel):
            row[(i - r) % self.n] += wk
        for i in range(self.n):
            a[i] = np.roll(row, i)
        return a

    def eigenvalues_fft(self) -> np.ndarray:
        """Circulant eigenvalues of A via the DFT of its first row, sorted ascending."""
        if self.kernel is None:
            raise ValueError("FFT eigenvalues need a circulant operator")
        a = self.dense()
        eig = np.fft.fft(a[0]).real
        return np.sort(eig)


def proximal_denoise(f: np.ndarray, a: LinearDenoiser, beta: float, tol: float = 1e-10, max_iter: int | None = None):
    """Solve (I + beta*(I - A)) z = f by conjugate gradients, residual < tol."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    f = np.asarray(f, dtype=np.float64)
    if f.ndim == 1:
        return _cg(f, a, beta, tol, max_iter)
    return np.stack([_cg(ch, a, beta, tol, max_iter) for ch in f])


def _cg(b: np.ndarray, a: LinearDenoiser, beta: float, tol: float, max_iter: int | None):
    def op(v):
        return v + beta * (v - a.matvec(v))

    n = b.size
    if max_iter is None:
        max_iter = 20 * n + 100
    z = np.zeros_like(b)
    r = b - op(z)
    p = r.copy()
    rr = float(r @ r)
    for _ in range(max_iter):
        if np.sqrt(rr) < tol:
            return z
        ap = op(p)
        alpha = rr / float(p @ ap)
        z = z + alpha * p
        r = r - alpha * ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    if np.sqrt(rr) < tol:
        return z
    raise RuntimeError(f"CG did not reach residual {tol} in {max_iter} iterations")


@dataclass
class FilterFactors:
    lambdas: np.ndarray  # eigenvalues of I - A, ascending
    direct: np.ndarray  # 1 - beta*lambda, descending, aligned with lambdas
    proximal: np.ndarray  # 1/(1 + beta*lambda), descending, aligned with lambdas
    beta: float


def filter_factors(a: LinearDenoiser, beta: float, tol: float = 1e-8) -> FilterFactors:
    """Spectral factors of the direct blend and the proximal map.

    Verifies the smoother's eigenvalues sit in [0, 1] (so the chain
    1 >= 1 - lam_1 >= ... >= 0 holds) before deriving the factors.
    """
    dense = a.dense()
    if dense.shape[0] > 4096:
        raise ValueError("dense eigendecomposition capped at N=4096")
    a_eigs = np.linalg.eigvalsh(dense)
    if a_eigs.min() < -tol or a_eigs.max() > 1.0 + tol:
        raise ValueError(f"smoother eigenvalues outside [0,1]: [{a_eigs.min():.3e}, {a_eigs.max():.3e}]")
    lam = np.sort(1.0 - a_eigs)
    return FilterFactors(
        lambdas=lam,
        direct=1.0 - beta * lam,
        proximal=1.0 / (1.0 + beta * lam),
        beta=beta,
    )


def endpoint_combination_factors(lambdas: np.ndarray, beta: float) -> np.ndarray:
    """Factors of the blend with weights beta/(1+beta) on A and 1/(1+beta) on I.

    Matches the proximal factors exactly at lambda = 0 and lambda = 1, and
    approximates them in between.
    """
    return (1.0 + beta * (1.0 - np.asarray(lambdas))) / (1.0 + beta)
