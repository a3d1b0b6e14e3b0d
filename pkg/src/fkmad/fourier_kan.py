"""Hybrid input projection: a linear map plus a low-rank Fourier-feature branch.

Each input dimension is expanded into sine/cosine features at a fixed ladder
of frequencies; a rank-r pair of matrices compresses those features back to
the hidden width, and the result is added to an ordinary affine projection.
Frequencies are fixed buffers (integer ladder by default); the learnable
amplitude structure lives entirely in the low-rank factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class ProjectionParams:
    """Parameters of the hybrid projection.

    Matrix layouts are chosen multiply-ready for row vectors: an input batch
    (N, D) is projected as x @ w_lin, and the Fourier features (N, 2FD) as
    (phi @ v_lr) @ u_lr.
    """

    w_lin: Tensor  # (D, H)
    b_lin: Tensor  # (H,)
    u_lr: Tensor   # (r, H)
    v_lr: Tensor   # (2FD, r)
    b_four: Tensor  # (H,)
    freqs: np.ndarray = field(default=None)  # (F,), fixed buffer
    scale: float = 1.0

    def named(self, prefix: str = "proj") -> dict[str, Tensor]:
        return {
            f"{prefix}.w_lin": self.w_lin,
            f"{prefix}.b_lin": self.b_lin,
            f"{prefix}.u_lr": self.u_lr,
            f"{prefix}.v_lr": self.v_lr,
            f"{prefix}.b_four": self.b_four,
        }


def init_projection(d_in: int, d_hidden: int, n_freqs: int, f_max: float,
                    rank: int, scale: float, rng: np.random.Generator) -> ProjectionParams:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, linear frequency ladder."""
    if n_freqs < 1:
        raise ValueError(f"need at least one frequency, got {n_freqs}")
    if scale <= 0:
        raise ValueError(f"input scale must be positive, got {scale}")
    if f_max < 1:
        raise ValueError(f"f_max must be >= 1 (first frequency is pinned at 1), got {f_max}")
    two_fd = 2 * n_freqs * d_in
    if not (1 <= rank <= min(d_hidden, two_fd)):
        raise ValueError(
            f"rank {rank} outside [1, min(H={d_hidden}, 2FD={two_fd})]"
        )
    if n_freqs == 1 and f_max != 1:
        raise ValueError("with a single frequency, f_max must be 1")

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)

    return ProjectionParams(
        w_lin=uniform((d_in, d_hidden), d_in),
        b_lin=Tensor(np.zeros(d_hidden), requires_grad=True),
        u_lr=uniform((rank, d_hidden), rank),
        v_lr=uniform((two_fd, rank), two_fd),
        b_four=Tensor(np.zeros(d_hidden), requires_grad=True),
        freqs=np.linspace(1.0, f_max, n_freqs),
        scale=float(scale),
    )


def fourier_basis(x: np.ndarray, freqs: np.ndarray, scale: float) -> np.ndarray:
    """Sine/cosine features of the scaled input, blocked per input dimension.

    For each dimension i the block is [sin(2 pi f_1 x~_i) ... sin(2 pi f_F x~_i),
    cos(...) ...] with x~ = x / scale; blocks are concatenated in index order,
    so the output has shape (..., 2*F*D).  Every entry lies in [-1, 1].
    """
    x = np.asarray(x, dtype=np.float64)
    ang = 2.0 * np.pi * (x[..., None] / scale) * freqs  # (..., D, F)
    block = np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)  # (..., D, 2F)
    return block.reshape(x.shape[:-1] + (x.shape[-1] * 2 * freqs.size,))


def project(x: np.ndarray, params: ProjectionParams) -> Tensor:
    """h = (x W_lin + b_lin) + (Phi(x) V U + b_four) for a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    rows = x.reshape(1, -1) if squeeze else x
    phi = fourier_basis(rows, params.freqs, params.scale)
    linear = T.add(T.matmul(Tensor(rows), params.w_lin), params.b_lin)
    low_rank = T.matmul(T.matmul(Tensor(phi), params.v_lr), params.u_lr)
    h = T.add(linear, T.add(low_rank, params.b_four))
    return T.reshape(h, (-1,)) if squeeze else h
