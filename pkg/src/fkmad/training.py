"""Adam loop over shuffled window batches."""

from __future__ import annotations

import numpy as np

from .losses import LossBreakdown, LossConfig, batch_losses
from .model import FkmadModel
from .ssm import DivergedScanError
from .tensor import Tensor


class TrainingDiverged(FloatingPointError):
    def __init__(self, step: int, value: float):
        self.step = step
        super().__init__(f"non-finite loss {value} at step {step}")


class Adam:
    """Standard adaptive-moment optimizer over a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        """Consume .grad of every parameter and update .data in place."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def train_model(model: FkmadModel, windows: np.ndarray, cfg: LossConfig,
                seed: int = 0,
                on_step=None) -> list[LossBreakdown]:
    """Train in place on standardized windows (n, L, D); returns loss history.

    Batches are drawn by reshuffling the window index each epoch from a
    dedicated generator, so identical seed and data reproduce the exact run.
    Raises TrainingDiverged if any batch loss goes non-finite.
    """
    cfg.validate()
    n = windows.shape[0]
    if n < 1:
        raise ValueError("no training windows")
    batch = min(cfg.batch_size, n)
    rng = np.random.default_rng(seed)
    opt = Adam(model.named_params(), lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
    history: list[LossBreakdown] = []
    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n - batch + 1, batch):
            idx = order[start:start + batch]
            # divergence is detected explicitly below (and by the scan's own
            # NaN check), so numpy warnings from already-poisoned values are
            # noise, not signal
            with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
                try:
                    fwd = model.forward(windows[idx])
                except DivergedScanError as exc:
                    raise TrainingDiverged(step, float("nan")) from exc
                total, breakdown = batch_losses(fwd, windows[idx], cfg, step)
                if not np.isfinite(breakdown.total):
                    raise TrainingDiverged(step, breakdown.total)
                opt.zero_grad()
                total.backward()
                opt.step()
            history.append(breakdown)
            if on_step is not None:
                on_step(breakdown)
            step += 1
            if cfg.max_steps and step >= cfg.max_steps:
                return history
    return history
