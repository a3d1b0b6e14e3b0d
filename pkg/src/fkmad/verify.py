"""Runnable verification suites for the numerical claims of the detector.

Each suite reruns one of the theory oracles at a pinned tolerance and
returns structured CheckResults, so the same code backs both `fkmad verify`
and the acceptance tests:

  scan      selective scan vs time-varying impulse-kernel convolution
  taylor    third-order error decay of the 2nd-order Taylor discretization
  dhk       analytic kernel sensitivity dH_k/ddelta vs finite differences
  parseval  time-domain vs frequency-domain output energy of frozen windows
  energy    quadratic growth (slope 2) of output energy under perturbations
  grad      full-model backward pass vs central finite differences

`perturb_a` deliberately corrupts the oracle A_d trajectory so the harness
can demonstrate that the scan check actually has teeth (a mutation run).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import ssm_oracles as so
from . import tensor as T
from .gradcheck import fd_gradient, max_param_relative_error
from .losses import LossConfig, batch_losses
from .model import ModelConfig, init_model
from .ssm import (compute_step, discretize, init_scan_params, selective_scan,
                  taylor_discretize, temporal_gate)
from .tensor import Tensor


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    measured: float
    bound: str       # human-readable acceptance bound
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.suite:<8s} {self.name}: "
                f"measured {self.measured:.3e} (bound {self.bound}, "
                f"{self.seconds:.2f}s)")


SUITE_NAMES = ("scan", "taylor", "dhk", "parseval", "energy", "grad")


def _random_scan_setup(rng: np.random.Generator):
    d_inner = int(rng.integers(2, 9))
    d_state = int(rng.integers(2, 9))
    length = int(rng.integers(8, 65))
    params = init_scan_params(d_inner, d_state, 4, 5, 2.0, rng)
    # spread the projections so b/c rows vary across time
    params.b_proj.data = rng.uniform(-1, 1, params.b_proj.data.shape)
    params.c_proj.data = rng.uniform(-1, 1, params.c_proj.data.shape)
    params.mod_strength.data = np.asarray(rng.uniform(0.0, 0.5))
    u = Tensor(rng.uniform(-1, 1, (2, length, d_inner)))
    z = Tensor(rng.uniform(-1, 1, (2, length, d_inner)))
    delta = compute_step(u, params)
    gate = temporal_gate(delta, params)
    return params, u, z, delta, gate


def suite_scan(seed: int = 0, perturb_a: float = 0.0,
               instances: int = 50) -> list[CheckResult]:
    """Scan vs LTV convolution, `instances` random systems, 1e-9 absolute."""
    t0 = time.perf_counter()
    worst = 0.0
    rng = np.random.default_rng(seed)
    with T.no_grad():
        for _ in range(instances):
            params, u, z, delta, gate = _random_scan_setup(rng)
            trace = selective_scan(u, z, delta, gate, params)
            ref = so.reference_outputs(trace, params, perturb_a=perturb_a)
            worst = max(worst, float(np.abs(ref - trace.y.data).max()))
    return [CheckResult("scan", f"ltv convolution agreement ({instances} systems)",
                        worst <= 1e-9, worst, "<= 1e-9 abs",
                        time.perf_counter() - t0)]


def suite_taylor(seed: int = 0, systems: int = 10) -> list[CheckResult]:
    """Error ratio under delta-halving must sit in [7.5, 8.5]."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    lo, hi = np.inf, -np.inf
    for _ in range(systems):
        n = int(rng.integers(2, 9))
        a = rng.uniform(-1.5, -0.3, n)
        b = rng.uniform(-1, 1, (n, 3))

        def err(d):
            a_d, b_d = discretize(a, b, d)
            a_2, b_2 = taylor_discretize(a, b, d)
            return np.sqrt(((a_d - a_2) ** 2).sum() + ((b_d - b_2) ** 2).sum())

        for d in (0.2, 0.1, 0.05):
            ratio = err(d) / err(d / 2.0)
            lo, hi = min(lo, ratio), max(hi, ratio)
    passed = 7.5 <= lo and hi <= 8.5
    measured = hi if (hi - 8.0) > (8.0 - lo) else lo
    return [CheckResult("taylor", f"halving ratio range [{lo:.3f}, {hi:.3f}]",
                        passed, measured, "in [7.5, 8.5]",
                        time.perf_counter() - t0)]


def suite_dhk(seed: int = 0, kmax: int = 8) -> list[CheckResult]:
    """Analytic dH_k/ddelta vs central differences, h=1e-5, rel <= 1e-5."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    h = 1e-5
    worst = 0.0
    for _ in range(5):
        n = int(rng.integers(2, 7))
        a = rng.uniform(-2.0, -0.2, n)
        b = rng.uniform(-1, 1, (n, 1))
        c = rng.uniform(-1, 1, (1, n))
        delta = rng.uniform(0.05, 0.5)
        for k in range(1, kmax + 1):
            analytic = so.dhk_ddelta(a, b, c, delta, k)
            plus = so.lti_hk(a, b, c, delta + h, k)
            minus = so.lti_hk(a, b, c, delta - h, k)
            numeric = (plus - minus) / (2.0 * h)
            denom = max(np.abs(analytic).max(), 1e-8)
            worst = max(worst, float(np.abs(analytic - numeric).max() / denom))
    return [CheckResult("dhk", f"kernel sensitivity k=1..{kmax}",
                        worst <= 1e-5, worst, "<= 1e-5 rel",
                        time.perf_counter() - t0)]


def _random_frozen_system(rng: np.random.Generator, d_inner: int,
                          d_state: int) -> so.FrozenLtiSystem:
    a = rng.uniform(-2.0, -0.2, (d_inner, d_state))
    delta = rng.uniform(0.1, 0.8)
    a_d = np.exp(a * delta)
    b_c = rng.uniform(-1, 1, (d_inner, d_state))
    b_d = (a_d - 1.0) / a * b_c
    c = rng.uniform(-1, 1, (d_inner, d_state))
    d = rng.uniform(-1, 1, d_inner)
    return so.FrozenLtiSystem(a_d=a_d, b_d=b_d, c=c, d=d)


def suite_parseval(seed: int = 0, systems: int = 20,
                   length: int = 256) -> list[CheckResult]:
    """Time vs frequency output energy, rel <= 1e-6, L=256 windows."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(systems):
        sys = _random_frozen_system(rng, int(rng.integers(2, 5)),
                                    int(rng.integers(2, 5)))
        u = rng.standard_normal((length, sys.a_d.shape[0]))
        te, fe = so.parseval_energy(sys, u)
        worst = max(worst, abs(te - fe) / max(abs(te), 1e-12))
    return [CheckResult("parseval", f"energy accounting ({systems} systems, L={length})",
                        worst <= 1e-6, worst, "<= 1e-6 rel",
                        time.perf_counter() - t0)]


def suite_energy(seed: int = 0) -> list[CheckResult]:
    """Perturbation energy slope 2 +/- 0.1 and nonnegative growth."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    with T.no_grad():
        params, u, z, delta, gate = _random_scan_setup(rng)
        trace = selective_scan(u, z, delta, gate, params)
    op = so.FrozenLtvOperator.from_trace(trace, params, window=0)
    length = trace.u_eff.data.shape[1]
    gain_vec = 1.0 + params.mod_strength.data * trace.gate.data[0]
    rhos = np.logspace(-3, -1, 9)
    result = so.energy_dominance_experiment(
        op, gain_vec, trace.u_eff.data[0], rhos, seed=seed)
    slope = result["slope"]
    min_de = float(result["delta_e"].min())
    return [
        CheckResult("energy", f"log-log slope over rho 1e-3..1e-1 (L={length})",
                    abs(slope - 2.0) <= 0.1, slope, "2 +/- 0.1",
                    time.perf_counter() - t0),
        CheckResult("energy", "minimum energy increase",
                    min_de >= -1e-9, min_de, ">= -1e-9",
                    0.0),
    ]


def _toy_model():
    return ModelConfig(d_in=3, d_inner=4, d_state=4, n_freqs=2, f_max=2.0,
                       rank=4, k_main=3, k_gate=3, window=8)


def suite_grad(seed: int = 0, seeds: int = 20) -> list[CheckResult]:
    """Backward vs finite differences on a 2x8-window toy model, <= 1e-3."""
    t0 = time.perf_counter()
    cfg = LossConfig(top_pct=50.0, bottom_pct=50.0, w_margin=0.0)
    worst = 0.0
    for s in range(seeds):
        rng = np.random.default_rng(seed + s)
        model = init_model(_toy_model(), seed=seed + s)
        x = rng.uniform(-1, 1, (2, 8, 3))
        base = model.forward(x)
        center = base.gate_center  # pin the stop-gradient constant

        def run():
            fwd = model.forward(x, gate_center=center)
            total, _ = batch_losses(fwd, x, cfg)
            return total

        loss = run()
        grads = loss.backward()
        named = model.named_params()
        analytic = {k: grads.get(p, np.zeros_like(p.data))
                    for k, p in named.items()}
        numeric = fd_gradient(lambda: run().item(),
                              {k: p.data for k, p in named.items()})
        worst = max(worst, max_param_relative_error(analytic, numeric))
        for p in named.values():
            p.grad = None
    return [CheckResult("grad", f"full-model gradient check ({seeds} seeds)",
                        worst <= 1e-3, worst, "<= 1e-3 rel",
                        time.perf_counter() - t0)]


_SUITES = {
    "scan": suite_scan,
    "taylor": suite_taylor,
    "dhk": suite_dhk,
    "parseval": suite_parseval,
    "energy": suite_energy,
    "grad": suite_grad,
}


def run_suite(name: str, seed: int = 0,
              perturb_a: float = 0.0) -> list[CheckResult]:
    """Run one suite or 'all'; unknown names raise KeyError."""
    if name == "all":
        results = []
        for key in SUITE_NAMES:
            results.extend(run_suite(key, seed, perturb_a))
        return results
    if name not in _SUITES:
        raise KeyError(name)
    if name == "scan":
        return suite_scan(seed, perturb_a=perturb_a)
    return _SUITES[name](seed)
