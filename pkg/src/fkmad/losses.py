"""The unsupervised training objective and its component terms.

Five pieces: reconstruction, a log-domain gain-bound hinge on output vs
effective-input energy, a top/bottom margin hinge on per-window
log-energies, step-size regularization (target pull + smoothness), and gate
sparsity.  Each component returns a graph scalar; total_loss also produces a
plain-float breakdown whose weighted sum reproduces the graph total exactly
(the identity is asserted in tests at 1e-12).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class LossConfig:
    gamma: float = 2.0          # gain upper bound in the passivity hinge
    margin: float = 0.5
    top_pct: float = 10.0
    bottom_pct: float = 10.0
    w_pass: float = 0.01
    w_margin: float = 0.01
    w_step: float = 0.01
    w_gate: float = 0.001
    step_target: float = float(np.log(2.0))  # softplus(0), the resting step
    l1_recon: bool = False
    entropy_gate: bool = False
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epochs: int = 5
    batch_size: int = 32
    max_steps: int = 0  # 0 = run all epochs

    def validate(self) -> None:
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.margin <= 0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        if not (0 < self.top_pct and 0 < self.bottom_pct
                and self.top_pct + self.bottom_pct <= 100):
            raise ValueError(
                f"percent groups invalid: top={self.top_pct} bottom={self.bottom_pct}"
            )
        for name in ("w_pass", "w_margin", "w_step", "w_gate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class LossBreakdown:
    step: int
    recon: float
    passivity: float
    margin: float
    step_small: float
    step_smooth: float
    gate_reg: float
    total: float

    FIELDS = ("recon", "passivity", "margin", "step_small", "step_smooth",
              "gate_reg", "total")

    def weighted_total(self, cfg: LossConfig) -> float:
        """Recompute the total from components; must match `total` to 1e-12."""
        return (self.recon + cfg.w_pass * self.passivity
                + cfg.w_margin * self.margin
                + cfg.w_step * (self.step_small + self.step_smooth)
                + cfg.w_gate * self.gate_reg)


def window_log_energy(y: Tensor) -> Tensor:
    """log(1 + mean square) per window of a (B, L, C) tensor -> (B,)."""
    return T.log1p(T.mean(T.square(y), axis=(1, 2)))


def recon_loss(recon: Tensor, target: np.ndarray, l1: bool = False) -> Tensor:
    diff = T.sub(recon, Tensor(np.asarray(target, dtype=np.float64)))
    if l1:
        return T.mean(T.add(T.relu(diff), T.relu(T.neg(diff))))
    return T.mean(T.square(diff))


def pass_loss(e_y: Tensor, e_u: Tensor, gamma: float) -> Tensor:
    """Mean of [e_y - log(1 + gamma^2 (e^{e_u} - 1))]_+^2.

    Both arguments are log-domain energies e = log(1 + E); the bound inside
    the hinge is exactly log(1 + gamma^2 E_u), so the hinge activates when
    E_y > gamma^2 E_u.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    bound = T.log1p(T.mul(gamma * gamma, T.sub(T.exp(e_u), 1.0)))
    return T.mean(T.square(T.relu(T.sub(e_y, bound))))


def margin_batch_floor(top_pct: float, bottom_pct: float) -> int:
    """Smallest batch where both percentile groups are nonempty."""
    return int(np.ceil(100.0 / min(top_pct, bottom_pct)))


def margin_loss(e_y: Tensor, margin: float, top_pct: float, bottom_pct: float) -> Tensor:
    """[m - (mean of top-p% e_y - mean of bottom-q% e_y)]_+ over a batch.

    Group membership is decided on the forward values with a stable sort
    (ties broken by index) and treated as constant in backward, the usual
    subgradient choice for order statistics.
    """
    n = e_y.size
    need = margin_batch_floor(top_pct, bottom_pct)
    if n < need:
        raise ValueError(
            f"batch of {n} too small for p={top_pct}%, q={bottom_pct}% "
            f"(need >= {need} so both groups are nonempty)"
        )
    n_top = int(np.floor(n * top_pct / 100.0))
    n_bot = int(np.floor(n * bottom_pct / 100.0))
    order = np.argsort(e_y.data, kind="stable")
    top_mean = T.mean(T.take(e_y, order[n - n_top:]))
    bot_mean = T.mean(T.take(e_y, order[:n_bot]))
    return T.relu(T.sub(margin, T.sub(top_mean, bot_mean)))


def step_reg(delta: Tensor, step_target: float) -> tuple[Tensor, Tensor]:
    """(target pull, smoothness) for the step-size trajectory.

    For a single trajectory (L,) these are plain sums over time:
    sum_t (delta_t - target)^2 and sum_t (delta_{t+1} - delta_t)^2.  Batched
    (B, L, C) input sums over time the same way, then averages over batch
    and channels so the magnitude does not grow with batch size.
    """
    if delta.ndim == 1:
        delta = T.reshape(delta, (1, -1, 1))
    if delta.shape[1] < 2:
        raise ValueError(f"need at least two timesteps, got {delta.shape[1]}")
    off = T.square(T.sub(delta, step_target))
    small = T.mean(T.sum_(off, axis=1))
    diffs = T.sub(delta[:, 1:, :], delta[:, :-1, :])
    smooth = T.mean(T.sum_(T.square(diffs), axis=1))
    return small, smooth


def gate_reg(z_sharp: Tensor, entropy: bool = False) -> Tensor:
    """Mean gate activity: l1 of sigma(z') by default, binary entropy by flag."""
    if entropy:
        sig = T.sigmoid(z_sharp)
        # -s log s - (1-s) log(1-s), written via softplus for stability
        return T.mean(T.add(T.mul(sig, T.softplus(T.neg(z_sharp))),
                            T.mul(T.sub(1.0, sig), T.softplus(z_sharp))))
    return T.mean(T.sigmoid(z_sharp))


def total_loss(components: dict[str, Tensor], cfg: LossConfig,
               step: int = 0) -> tuple[Tensor, LossBreakdown]:
    """Weighted sum per the breakdown identity; returns graph total + floats.

    The float total is rebuilt with the same operation order as the
    breakdown identity so the two stay bit-comparable.
    """
    total = components["recon"]
    total = T.add(total, T.mul(cfg.w_pass, components["passivity"]))
    total = T.add(total, T.mul(cfg.w_margin, components["margin"]))
    total = T.add(total, T.mul(cfg.w_step, T.add(components["step_small"],
                                                 components["step_smooth"])))
    total = T.add(total, T.mul(cfg.w_gate, components["gate_reg"]))
    breakdown = LossBreakdown(
        step=step,
        recon=components["recon"].item(),
        passivity=components["passivity"].item(),
        margin=components["margin"].item(),
        step_small=components["step_small"].item(),
        step_smooth=components["step_smooth"].item(),
        gate_reg=components["gate_reg"].item(),
        total=components["recon"].item()
        + cfg.w_pass * components["passivity"].item()
        + cfg.w_margin * components["margin"].item()
        + cfg.w_step * (components["step_small"].item()
                        + components["step_smooth"].item())
        + cfg.w_gate * components["gate_reg"].item(),
    )
    return total, breakdown


def batch_losses(forward, x: np.ndarray, cfg: LossConfig, step: int = 0):
    """Assemble every component from one forward pass on batch x."""
    trace = forward.trace
    e_y = window_log_energy(trace.y_gated)
    e_u = window_log_energy(trace.u_eff)
    small, smooth = step_reg(trace.delta, cfg.step_target)
    need = margin_batch_floor(cfg.top_pct, cfg.bottom_pct)
    if e_y.size >= need:
        margin = margin_loss(e_y, cfg.margin, cfg.top_pct, cfg.bottom_pct)
    elif cfg.w_margin == 0.0:
        margin = Tensor(0.0)  # term disabled; small batches stay legal
    else:
        margin = margin_loss(e_y, cfg.margin, cfg.top_pct, cfg.bottom_pct)
    components = {
        "recon": recon_loss(forward.recon, x, cfg.l1_recon),
        "passivity": pass_loss(e_y, e_u, cfg.gamma),
        "margin": margin,
        "step_small": small,
        "step_smooth": smooth,
        "gate_reg": gate_reg(trace.z_sharp, cfg.entropy_gate),
    }
    return total_loss(components, cfg, step)
