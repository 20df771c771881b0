"""Gradient-based optimizers with function-evaluation accounting.

Objectives are duck-typed: ``value(x) -> float`` and ``gradient(x) ->
ndarray``. If the objective exposes ``value_evals`` / ``gradient_evals``
counters (as circuit objectives do) those are logged; otherwise calls are
counted here, one per ``value`` or ``gradient`` call.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

OPTIMIZER_KINDS = ("gd-decay", "bfgs", "adam")
LOG_HEADER = ("step", "objective", "grad_norm", "fevals", "seconds")


class OptimizationError(RuntimeError):
    """Raised when the objective or gradient becomes non-finite."""

    def __init__(self, message: str, x: np.ndarray):
        super().__init__(message)
        self.x = np.array(x, copy=True)


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "bfgs"
    learning_rate: float | None = None
    decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    max_iter: int = 200
    gtol: float = 1e-8
    ftol: float = 0.0
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    seed: int = 0
    record_time: bool = False

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ValueError(f"optimizer kind must be one of {OPTIMIZER_KINDS}")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if min(self.gtol, self.ftol, self.decay) < 0:
            raise ValueError("tolerances and decay must be non-negative")
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")

    @property
    def lr(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return 0.001 if self.kind == "adam" else 0.05

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LogEntry:
    step: int
    objective: float
    grad_norm: float
    fevals: int
    seconds: float
    value_evals: int = 0
    gradient_evals: int = 0


@dataclass
class RunLog:
    iterations: list[LogEntry] = field(default_factory=list)
    stop_reason: str = ""

    def append(self, entry: LogEntry) -> None:
        if self.iterations:
            last = self.iterations[-1]
            if entry.step <= last.step or entry.fevals < last.fevals:
                raise ValueError("log steps must increase and evaluation counts must not decrease")
        self.iterations.append(entry)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([e.objective for e in self.iterations])

    @property
    def fevals(self) -> np.ndarray:
        return np.array([e.fevals for e in self.iterations])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_HEADER)
        for e in self.iterations:
            w.writerow([e.step, repr(float(e.objective)), repr(float(e.grad_norm)), e.fevals,
                        "nan" if math.isnan(e.seconds) else repr(e.seconds)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RunLog":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != LOG_HEADER:
            raise ValueError("not a run log: unexpected header")
        log = cls()
        for r in rows[1:]:
            log.append(LogEntry(int(r[0]), float(r[1]), float(r[2]), int(r[3]), float(r[4])))
        return log


class _Counter:
    """Wraps an objective, counting calls when it does not count itself."""

    def __init__(self, objective):
        self.obj = objective
        self.own = hasattr(objective, "value_evals") and hasattr(objective, "gradient_evals")
        self._v = 0
        self._g = 0

    def value(self, x):
        if not self.own:
            self._v += 1
        return float(self.obj.value(x))

    def gradient(self, x):
        if not self.own:
            self._g += 1
        return np.asarray(self.obj.gradient(x), dtype=float)

    @property
    def counts(self) -> tuple[int, int]:
        if self.own:
            return int(self.obj.value_evals), int(self.obj.gradient_evals)
        return self._v, self._g


class FunctionObjective:
    """Adapter for plain callables ``f(x)`` and ``grad(x)``."""

    def __init__(self, f: Callable, grad: Callable):
        self.f = f
        self.grad = grad

    def value(self, x):
        return self.f(x)

    def gradient(self, x):
        return self.grad(x)


def _check(value, x, what):
    if not np.all(np.isfinite(value)):
        raise OptimizationError(f"non-finite {what} at iterate", x)


def minimize(objective, x0, cfg: OptimizerConfig = OptimizerConfig(), callback=None):
    """Minimize ``objective`` from ``x0``; returns ``(best_x, RunLog)``.

    Step 0 records the starting point. Stops when ``max_iter`` steps are
    taken, the gradient norm falls to ``gtol`` or below, or the objective
    changes by at most ``ftol`` between consecutive steps (``ftol > 0``).
    ``callback(step, x)`` runs after every recorded step.
    """
    obj = _Counter(objective)
    x = np.array(x0, dtype=float)
    t0 = time.perf_counter()
    log = RunLog()

    def record(step, f, g):
        v, gr = obj.counts
        secs = time.perf_counter() - t0 if cfg.record_time else float("nan")
        log.append(LogEntry(step, f, float(np.linalg.norm(g)), v + gr, secs, v, gr))
        if callback is not None:
            callback(step, x)

    f = obj.value(x)
    _check(f, x, "objective")
    g = obj.gradient(x)
    _check(g, x, "gradient")
    record(0, f, g)
    best_x, best_f = x.copy(), f
    if np.linalg.norm(g) <= cfg.gtol:
        log.stop_reason = "gtol"
        return best_x, log

    lr = cfg.lr
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    h_inv = None
    log.stop_reason = "max_iter"
    for step in range(1, cfg.max_iter + 1):
        f_prev = f
        if cfg.kind == "gd-decay":
            x = x - lr / (1.0 + cfg.decay * (step - 1)) * g
            f = obj.value(x)
            _check(f, x, "objective")
            g = obj.gradient(x)
        elif cfg.kind == "adam":
            m = cfg.beta1 * m + (1 - cfg.beta1) * g
            v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
            m_hat = m / (1 - cfg.beta1**step)
            v_hat = v / (1 - cfg.beta2**step)
            x = x - lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
            f = obj.value(x)
            _check(f, x, "objective")
            g = obj.gradient(x)
        else:
            x, f, g, h_inv, ok = _bfgs_step(obj, x, f, g, h_inv, cfg)
            if not ok and h_inv is not None:
                # retry once from steepest descent before giving up
                x, f, g, h_inv, ok = _bfgs_step(obj, x, f, g, None, cfg)
            if not ok:
                record(step, f, g)
                log.stop_reason = "line_search"
                break
        _check(g, x, "gradient")
        record(step, f, g)
        if f < best_f:
            best_x, best_f = x.copy(), f
        if np.linalg.norm(g) <= cfg.gtol:
            log.stop_reason = "gtol"
            break
        if cfg.ftol > 0 and abs(f - f_prev) <= cfg.ftol:
            log.stop_reason = "ftol"
            break
    return best_x, log


def _bfgs_step(obj, x, f, g, h_inv, cfg):
    """One BFGS iteration with Armijo backtracking; returns ``ok=False`` if no decrease is found."""
    n = x.size
    first = h_inv is None
    if first:
        h_inv = np.eye(n)
    p = -h_inv @ g
    slope = float(g @ p)
    if slope >= 0:
        # not a descent direction: restart from steepest descent
        h_inv = np.eye(n)
        p = -g
        slope = float(g @ p)
    alpha = 1.0
    for _ in range(cfg.max_backtracks):
        x_new = x + alpha * p
        f_new = obj.value(x_new)
        if np.isfinite(f_new) and f_new <= f + cfg.armijo_c * alpha * slope:
            break
        alpha *= cfg.backtrack
    else:
        return x, f, g, h_inv, False
    g_new = obj.gradient(x_new)
    _check(g_new, x_new, "gradient")
    s = x_new - x
    y = g_new - g
    sy = float(s @ y)
    if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
        if first:
            # standard initial scaling of the inverse-Hessian guess
            h_inv = (sy / float(y @ y)) * np.eye(n)
        rho = 1.0 / sy
        hy = h_inv @ y
        h_inv = (
            h_inv
            - rho * (np.outer(s, hy) + np.outer(hy, s))
            + (rho * rho * float(y @ hy) + rho) * np.outer(s, s)
        )
    return x_new, f_new, g_new, h_inv, True
