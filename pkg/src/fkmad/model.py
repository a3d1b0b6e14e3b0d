"""Model assembly: projection in, gated scan in the middle, readout back out.

The hybrid projection emits 2*d_inner features per timestep; the first half
feeds the convolutional main branch, the second half is the gate
pre-activation.  A linear readout maps the gated scan output back to input
space for the reconstruction objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .fourier_kan import ProjectionParams, init_projection, project
from .ssm import (ScanParams, ScanTrace, causal_conv, compute_step,
                  init_scan_params, selective_scan, sharpen_gate, silu,
                  temporal_gate)


@dataclass
class ModelConfig:
    d_in: int
    d_inner: int = 16
    d_state: int = 8
    n_freqs: int = 8
    f_max: float = 8.0
    rank: int = 0        # 0 = min(16, hidden, 2*F*d_in)
    scale: float = 1.0
    k_main: int = 4
    k_gate: int = 5
    delta_max: float = 2.0
    hidden: int = 0      # 0 = derived; must equal 2*d_inner when given
    window: int = 64     # sequence length for training windows and scoring

    def resolved_hidden(self) -> int:
        derived = 2 * self.d_inner
        if self.hidden and self.hidden != derived:
            raise ValueError(
                f"hidden width {self.hidden} conflicts with 2*d_inner={derived}; "
                "the projection feeds the main branch and the gate, half each"
            )
        return derived

    def resolved_rank(self) -> int:
        if self.rank:
            return self.rank
        return min(16, self.resolved_hidden(), 2 * self.n_freqs * self.d_in)


@dataclass
class ForwardPass:
    hidden: Tensor     # (B, L, 2*d_inner), projection output
    trace: ScanTrace
    recon: Tensor      # (B, L, d_in)
    gate_center: np.ndarray = None  # stop-gradient centering constant used


@dataclass
class FkmadModel:
    config: ModelConfig
    proj: ProjectionParams
    scan: ScanParams
    w_out: Tensor
    b_out: Tensor
    norm_mean: np.ndarray = field(default=None)  # training-split feature stats
    norm_std: np.ndarray = field(default=None)

    def named_params(self) -> dict[str, Tensor]:
        params = self.proj.named()
        params.update(self.scan.named())
        params["out.w"] = self.w_out
        params["out.b"] = self.b_out
        return params

    def forward(self, x: np.ndarray,
                gate_center: np.ndarray | None = None) -> ForwardPass:
        """x is a standardized batch (B, L, d_in) of windows.

        gate_center optionally pins the stop-gradient centering constant of
        the gate branch (see ssm.sharpen_gate); the gradient-check harness
        uses it, normal callers do not.
        """
        x = np.asarray(x, dtype=np.float64)
        n_batch, length, d_in = x.shape
        if d_in != self.config.d_in:
            raise ValueError(
                f"input width {d_in} does not match model d_in {self.config.d_in}"
            )
        d_inner = self.config.d_inner
        h = project(x.reshape(n_batch * length, d_in), self.proj)
        hidden = T.reshape(h, (n_batch, length, 2 * d_inner))
        main = hidden[:, :, :d_inner]
        gate_pre = hidden[:, :, d_inner:]

        u = silu(causal_conv(main, self.scan.conv_w, self.scan.conv_b))
        z_sharp = sharpen_gate(gate_pre, self.scan.gate_temp, gate_center)
        center = (gate_center if gate_center is not None
                  else gate_pre.data.mean(axis=1, keepdims=True))
        delta = compute_step(u, self.scan)
        gate = temporal_gate(delta, self.scan)
        trace = selective_scan(u, z_sharp, delta, gate, self.scan)
        recon = T.add(T.matmul(trace.y_gated, self.w_out), self.b_out)
        return ForwardPass(hidden=hidden, trace=trace, recon=recon,
                           gate_center=center)


def init_model(config: ModelConfig, seed: int = 0) -> FkmadModel:
    rng = np.random.default_rng(seed)
    hidden = config.resolved_hidden()
    proj = init_projection(config.d_in, hidden, config.n_freqs, config.f_max,
                           config.resolved_rank(), config.scale, rng)
    scan = init_scan_params(config.d_inner, config.d_state, config.k_main,
                            config.k_gate, config.delta_max, rng)
    bound = 1.0 / np.sqrt(config.d_inner)
    w_out = Tensor(rng.uniform(-bound, bound, (config.d_inner, config.d_in)),
                   requires_grad=True)
    b_out = Tensor(np.zeros(config.d_in), requires_grad=True)
    return FkmadModel(config=config, proj=proj, scan=scan,
                      w_out=w_out, b_out=b_out)
