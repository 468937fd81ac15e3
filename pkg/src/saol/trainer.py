"""Geometric stochastic gradient descent on products of oblique manifolds.

Each iteration draws a batch, projects the Euclidean gradient onto the
tangent space, runs the averaged-Armijo backtracking search along the
geodesic in the negative gradient direction, records the batch cost and
evaluates the stopping statistic.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence, TextIO

import numpy as np

from .errors import NumericalError, TrainingError
from .objective import ObjectiveParams, SignalSet, cost_and_gradient, sample_cost, clamped_pairs
from .oblique import AnalysisOperator, direction_sqnorm, project_direction


@dataclass(frozen=True)
class TrainerConfig:
    batch_size: int = 500
    params: ObjectiveParams = field(default_factory=ObjectiveParams)
    a0: float = 0.1
    armijo_b: float = 0.9
    armijo_c: float = 1e-4
    k_max: int = 40
    avg_window: int = 2000
    stop_window: int = 200
    stop_tol: float = 5e-5
    max_iters: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.armijo_b < 1 and 0 < self.armijo_c < 1):
            raise ValueError("armijo_b and armijo_c must lie in (0, 1)")
        if not self.a0 > 0:
            raise ValueError("a0 must be positive")
        for name in ("batch_size", "k_max", "avg_window", "stop_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")


class CostWindow:
    """Sliding window of the last ``size`` batch costs."""

    def __init__(self, size: int):
        self.size = int(size)
        self._buf = np.zeros(self.size)
        self._count = 0
        self._head = 0  # slot of the oldest entry once full

    def __len__(self):
        return self._count

    def values(self) -> np.ndarray:
        if self._count < self.size:
            return self._buf[:self._count].copy()
        return np.roll(self._buf, -self._head)

    def mean(self) -> float:
        if self._count == 0:
            raise ValueError("empty cost window")
        return float(self._buf[:self._count].sum() / self._count)

    def mean_if_pushed(self, cost: float) -> float:
        """Window average after a hypothetical push, without modifying the window.

        Summed exactly as :meth:`push` followed by :meth:`mean` would, so the
        two agree bit for bit.
        """
        if self._count < self.size:
            buf = self._buf[:self._count + 1].copy()
            buf[self._count] = cost
            return float(buf.sum() / (self._count + 1))
        buf = self._buf.copy()
        buf[self._head] = cost
        return float(buf.sum() / self.size)

    def push(self, cost: float) -> float:
        if self._count < self.size:
            self._buf[self._count] = cost
            self._count += 1
        else:
            self._buf[self._head] = cost
            self._head = (self._head + 1) % self.size
        return self.mean()


def sliding_average_update(window: CostWindow, cost: float) -> float:
    """Push a batch cost and return the new window average."""
    return window.push(cost)


class StoppingMonitor:
    """Running mean ``phi`` of all recorded costs and its relative variation.

    ``v = |phi_i - mean(last l phi)| / mean(last l phi)``; stopping is only
    possible once ``l`` values of ``phi`` exist.
    """

    def __init__(self, window: int, tol: float):
        self.window = int(window)
        self.tol = float(tol)
        self._sum = 0.0
        self._count = 0
        self._phi = np.zeros(self.window)
        self._nphi = 0

    @property
    def phi(self) -> float:
        return self._sum / self._count

    def record(self, cost: float) -> None:
        self._sum += cost
        self._count += 1
        self._phi[self._nphi % self.window] = self._sum / self._count
        self._nphi += 1

    def check(self) -> tuple[float, bool]:
        if self._nphi < self.window:
            return float("nan"), False
        phibar = float(self._phi.sum() / self.window)
        if phibar == 0.0:
            return 0.0, True
        v = abs(self.phi - phibar) / phibar
        return v, v < self.tol


def stopping_check(monitor: StoppingMonitor) -> tuple[float, bool]:
    return monitor.check()


def sample_batch(signals: SignalSet | int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` sample indices uniformly with replacement."""
    n = signals if isinstance(signals, (int, np.integer)) else len(signals)
    if size < 1 or n < 1:
        raise ValueError("batch size and sample count must be positive")
    return rng.integers(0, n, size=size)


def riemannian_gradient(op: AnalysisOperator, batch: np.ndarray, params: ObjectiveParams) -> list[np.ndarray]:
    return project_direction(op, cost_and_gradient(op, batch, params)[1])


class SearchResult(NamedTuple):
    accepted: bool
    step: float
    op: AnalysisOperator
    fbar: float
    cost: float
    trials: int


def armijo_search(op: AnalysisOperator, direction: Sequence[np.ndarray],
                  cost_fn: Callable[[AnalysisOperator], float], fbar_prev: float,
                  window: CostWindow, a_init: float, b: float = 0.9, c: float = 1e-4,
                  k_max: int = 40) -> SearchResult:
    """Backtracking search along the geodesic in direction ``-direction``.

    A trial step ``a`` is accepted when the window average including the
    trial cost satisfies ``fbar_new <= fbar_prev - a c |G|^2``. After
    ``k_max`` rejected trials the operator is returned unchanged with
    ``accepted=False``. The window itself is never modified.
    """
    gsq = direction_sqnorm(direction)
    descent = [-h for h in direction]
    a = a_init
    for k in range(1, k_max + 1):
        trial = op.step(descent, a)
        cost = cost_fn(trial)
        fbar = window.mean_if_pushed(cost)
        if fbar <= fbar_prev - a * c * gsq:
            return SearchResult(True, a, trial, fbar, cost, k)
        if k < k_max:
            a = b * a
    return SearchResult(False, a, op, fbar_prev, float("nan"), k_max)


class IterRecord(NamedTuple):
    iteration: int
    cost: float
    fbar_prev: float
    fbar: float
    step: float
    trials: int
    accepted: bool
    grad_sqnorm: float
    v: float


@dataclass(frozen=True)
class TrainReport:
    op: AnalysisOperator
    iterations: int
    reason: str  # "converged" or "max_iters"
    log: list[IterRecord]
    accepted_steps: int = 0
    failed_searches: int = 0
    clamped_pairs: int = 0


def _record_json(rec: IterRecord) -> str:
    d = rec._asdict()
    return json.dumps({k: (None if isinstance(v, float) and not np.isfinite(v) else v)
                       for k, v in d.items()})


def train(signals: SignalSet, init: AnalysisOperator, config: TrainerConfig,
          log_stream: TextIO | None = None,
          callback: Callable[[int, AnalysisOperator], None] | None = None) -> TrainReport:
    """Run geometric SGD from ``init`` until the stopping rule fires or ``max_iters``.

    Parameters
    ----------
    signals : SignalSet
        Training samples; their length must match ``init.p``.
    init : AnalysisOperator
        Starting point.
    config : TrainerConfig
        Hyperparameters and seed. Runs are bit-reproducible for a fixed seed.
    log_stream : file-like, optional
        Receives one JSON object per iteration.
    callback : callable, optional
        Called as ``callback(iteration, op)`` after every iteration.

    Raises
    ------
    TrainingError
        When the operator becomes numerically rank deficient.
    """
    if signals.p != init.p:
        raise ValueError(f"signal length {signals.p} does not match operator p={init.p}")
    if init.separable and tuple(signals.mode_sizes) != init.mode_sizes:
        raise ValueError(f"signal modes {signals.mode_sizes} do not match factors {init.mode_sizes}")

    cfg = config
    params = cfg.params
    rng = np.random.default_rng(cfg.seed)
    window = CostWindow(cfg.avg_window)
    monitor = StoppingMonitor(cfg.stop_window, cfg.stop_tol)
    samples = signals.samples
    op = init
    a_init = cfg.a0
    log: list[IterRecord] = []
    accepted_steps = failed = clamped = 0
    reason = "max_iters"

    for i in range(cfg.max_iters):
        batch = samples[sample_batch(len(samples), cfg.batch_size, rng)]
        try:
            cost_now, grads = cost_and_gradient(op, batch, params)
            if i == 0:
                window.push(cost_now)
            direction = project_direction(op, grads)
            gsq = direction_sqnorm(direction)
            fbar_prev = window.mean()
            if gsq > 0:
                res = armijo_search(op, direction, lambda o: sample_cost(o, batch, params),
                                    fbar_prev, window, a_init, cfg.armijo_b, cfg.armijo_c, cfg.k_max)
            else:
                res = SearchResult(False, 0.0, op, fbar_prev, float("nan"), 0)
        except NumericalError as exc:
            raise TrainingError(i, exc) from exc

        if res.accepted:
            op = res.op
            cost = res.cost
            a_init = min(res.step / cfg.armijo_b, cfg.a0)
            accepted_steps += 1
            if params.mu:
                clamped += clamped_pairs(op.compose())
        else:
            cost = cost_now
            a_init = cfg.a0
            failed += 1
        fbar = window.push(cost)
        monitor.record(cost)
        v, stop = monitor.check()
        rec = IterRecord(i, float(cost), fbar_prev, fbar, float(res.step), res.trials, res.accepted,
                         float(gsq), float(v))
        log.append(rec)
        if log_stream is not None:
            log_stream.write(_record_json(rec) + "\n")
        if callback is not None:
            callback(i, op)
        if stop:
            reason = "converged"
            break

    return TrainReport(op, len(log), reason, log, accepted_steps, failed, clamped)
