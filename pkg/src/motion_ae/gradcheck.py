"""Finite-difference verification of the analytic BPTT gradients.

Each case draws a small random auto-encoder and batch from its own seed and
compares ``backward`` against central differences of ``total_loss``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .model import Gradients, SparsityConfig, backward, finite_difference_gradients, init_autoencoder, total_loss

MAX_DIM = 16
MAX_STEPS = 4


def relative_error(a, b, floor: float = 1e-8) -> np.ndarray:
    """|a - b| / max(|a|, |b|, floor), elementwise."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


@dataclass
class GradcheckCase:
    seed: int
    beta: float
    input_dim: int
    hidden_dim: int
    steps: int
    batch: int
    max_rel_error: float
    worst_param: str
    passed: bool


@dataclass
class GradcheckReport:
    tolerance: float
    cases: list[GradcheckCase] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.cases) and all(c.passed for c in self.cases)

    @property
    def max_rel_error(self) -> float:
        return max((c.max_rel_error for c in self.cases), default=0.0)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tolerance": self.tolerance,
            "max_rel_error": self.max_rel_error,
            "cases": [asdict(c) for c in self.cases],
        }


def resolution_floor(loss: float, step: float, tol: float) -> float:
    """Denominator floor for entries central differences cannot resolve.

    Round-off in (L(p + s) - L(p - s)) / 2s is of order eps * |L| / s; a
    difference ten times that size is treated as noise, so entries smaller
    than it / tol are in effect compared absolutely.
    """
    noise = 10.0 * np.finfo(np.float64).eps * max(1.0, abs(loss)) / step
    return max(1e-8, noise / tol)


def check_case(
    seed: int,
    beta: float,
    max_dim: int = MAX_DIM,
    max_steps: int = MAX_STEPS,
    max_batch: int = 3,
    tol: float = 1e-4,
    step: float = 1e-5,
    corrupt: Optional[Callable[[Gradients], Gradients]] = None,
) -> GradcheckCase:
    if not 1 <= max_dim <= MAX_DIM or not 1 <= max_steps <= MAX_STEPS:
        raise ValueError(f"gradcheck needs dims <= {MAX_DIM} and T <= {MAX_STEPS}")
    rng = np.random.default_rng([seed, int(round(beta * 1e6))])
    d, hid = (int(v) for v in rng.integers(1, max_dim + 1, size=2))
    T = int(rng.integers(1, max_steps + 1))
    K = int(rng.integers(1, max_batch + 1))
    params = init_autoencoder(d, hid, rng)
    batch = rng.normal(size=(K, T, d))
    cfg = SparsityConfig(beta=beta)

    analytic = backward(params, batch, cfg)
    if corrupt is not None:
        analytic = corrupt(analytic)
    numeric = finite_difference_gradients(params, batch, cfg, step=step)
    floor = resolution_floor(total_loss(params, batch, cfg), step, tol)

    worst, worst_name = 0.0, ""
    for (name, a), (_, n) in zip(analytic.named_arrays(), numeric.named_arrays()):
        err = float(relative_error(a, n, floor).max()) if a.size else 0.0
        if err > worst:
            worst, worst_name = err, name
    return GradcheckCase(seed, beta, d, hid, T, K, worst, worst_name, worst <= tol)


def run_gradcheck(
    n_seeds: int = 20,
    betas: Sequence[float] = (0.0, 0.1),
    base_seed: int = 0,
    max_dim: int = MAX_DIM,
    max_steps: int = MAX_STEPS,
    tol: float = 1e-4,
    corrupt: Optional[Callable[[Gradients], Gradients]] = None,
) -> GradcheckReport:
    """Check ``n_seeds`` random instances for every beta.

    ``corrupt`` rewrites the analytic gradients before comparison; it exists
    so tests can confirm the harness actually detects a wrong gradient.
    """
    if n_seeds < 1:
        raise ValueError(f"n_seeds must be >= 1, got {n_seeds}")
    report = GradcheckReport(tol)
    for beta in betas:
        for k in range(n_seeds):
            report.cases.append(
                check_case(base_seed + k, float(beta), max_dim, max_steps, tol=tol, corrupt=corrupt)
            )
    return report
