"""Smooth unconstrained minimization.

All methods share one strong-Wolfe line search (bracketing + zoom). The
objective is a single callable returning ``(value, gradient)``.
"""

from __future__ import annotations

import enum
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, InputError, NumericError

log = logging.getLogger(__name__)

__all__ = ["Method", "Status", "OptimConfig", "OptimResult", "minimize", "check_gradient"]

Objective = Callable[[np.ndarray], "tuple[float, np.ndarray]"]

LBFGS_AUTO_THRESHOLD = 10_000


class Method(str, enum.Enum):
    BFGS = "bfgs"
    LBFGS = "lbfgs"
    CG = "cg"


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    LINE_SEARCH_FAIL = "line_search_fail"


@dataclass(frozen=True)
class OptimConfig:
    method: Method = Method.BFGS
    tol: float = 1e-5
    max_iter: int = 500
    c1: float = 1e-4
    c2: float = 0.9
    memory: int = 10
    # switch BFGS to L-BFGS above this many parameters
    auto_lbfgs: bool = True
    history: bool = True

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not 0 < self.c1 < self.c2 < 1:
            raise ConfigurationError(f"need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}")
        if self.tol <= 0:
            raise ConfigurationError("tol must be positive")
        if self.max_iter < 0 or self.memory < 1:
            raise ConfigurationError("max_iter must be >= 0 and memory >= 1")


@dataclass
class OptimResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    iterations: int
    status: Status
    history: list = field(default_factory=list)
    n_evals: int = 0

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


def _norm(g: np.ndarray) -> float:
    return float(np.max(np.abs(g))) if g.size else 0.0


class _Counted:
    def __init__(self, fun: Objective):
        self.fun = fun
        self.calls = 0

    def __call__(self, x):
        self.calls += 1
        f, g = self.fun(x)
        return float(f), np.asarray(g, dtype=float)


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic interpolating two points with derivatives, or None."""
    d1 = da + db - 3 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    denom = db - da + 2 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def _line_search(fun, x, f0, g0, d, step, c1, c2, max_evals=40):
    """Strong Wolfe step along ``d``. Returns ``(alpha, f, g)`` or None."""
    dphi0 = float(g0 @ d)
    evals = 0

    def phi(a):
        nonlocal evals
        evals += 1
        f, g = fun(x + a * d)
        return f, g, float(g @ d)

    def zoom(lo, f_lo, dlo, g_lo, hi, f_hi, dhi):
        nonlocal evals
        while evals < max_evals:
            a = None
            if np.isfinite(f_hi) and np.isfinite(dhi):
                a = _cubic_min(lo, f_lo, dlo, hi, f_hi, dhi)
            left, right = min(lo, hi), max(lo, hi)
            margin = 0.1 * (right - left)
            if a is None or not (left + margin <= a <= right - margin):
                a = 0.5 * (lo + hi)
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
            f_a, g_a, d_a = phi(a)
            if not np.isfinite(f_a) or f_a > f0 + c1 * a * dphi0 or f_a >= f_lo:
                hi, f_hi, dhi = a, f_a, d_a
            else:
                if abs(d_a) <= -c2 * dphi0:
                    return a, f_a, g_a
                if d_a * (hi - lo) >= 0:
                    hi, f_hi, dhi = lo, f_lo, dlo
                lo, f_lo, dlo, g_lo = a, f_a, d_a, g_a
        # out of budget: accept the best sufficient-decrease point if any
        if lo > 0:
            return lo, f_lo, g_lo
        return None

    a_prev, f_prev, d_prev, g_prev = 0.0, f0, dphi0, g0
    a = step
    for i in range(max_evals):
        f_a, g_a, d_a = phi(a)
        if not np.isfinite(f_a) or f_a > f0 + c1 * a * dphi0 or (i > 0 and f_a >= f_prev):
            return zoom(a_prev, f_prev, d_prev, g_prev, a, f_a, d_a)
        if abs(d_a) <= -c2 * dphi0:
            return a, f_a, g_a
        if d_a >= 0:
            return zoom(a, f_a, d_a, g_a, a_prev, f_prev, d_prev)
        a_prev, f_prev, d_prev, g_prev = a, f_a, d_a, g_a
        a = 2.0 * a
        if evals >= max_evals:
            break
    return None


def minimize(fun: Objective, x0, config: OptimConfig | None = None) -> OptimResult:
    """Minimize ``fun`` from ``x0``.

    BFGS keeps a dense inverse-Hessian approximation, skipping the update
    whenever the curvature condition ``s.y > 0`` fails. L-BFGS uses the
    two-loop recursion. CG is Polak-Ribiere+ with restarts on non-descent
    directions. A failed line search stops the run with
    ``Status.LINE_SEARCH_FAIL`` and returns the last accepted iterate.
    """
    cfg = config or OptimConfig()
    fun = _Counted(fun)
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise InputError("objective or gradient is not finite at the starting point")
    method = cfg.method
    if method is Method.BFGS and cfg.auto_lbfgs and x.size > LBFGS_AUTO_THRESHOLD:
        method = Method.LBFGS

    history = [f] if cfg.history else []
    n = x.size
    H = None
    mem: deque = deque(maxlen=cfg.memory)
    d_prev = g_prev = None
    step_prev = None
    status = Status.MAX_ITER
    it = 0
    gn = _norm(g)
    if gn <= cfg.tol:
        status = Status.CONVERGED

    while status is not Status.CONVERGED and it < cfg.max_iter:
        if method is Method.BFGS:
            d = -(H @ g) if H is not None else -g
        elif method is Method.LBFGS:
            d = _two_loop(g, mem)
        else:
            if d_prev is None:
                d = -g
            else:
                beta = max(0.0, float(g @ (g - g_prev)) / float(g_prev @ g_prev))
                d = -g + beta * d_prev
        if float(g @ d) >= 0:
            # not a descent direction: fall back to steepest descent
            d = -g
            H = None
            mem.clear()

        if it == 0 or (method is Method.CG and step_prev is None):
            step = min(1.0, 1.0 / max(gn, 1e-12))
        elif method is Method.CG:
            step = min(1.0, step_prev * float(g_prev @ d_prev) / float(g @ d)) if step_prev else 1.0
            step = max(step, 1e-10)
        else:
            step = 1.0

        found = _line_search(fun, x, f, g, d, step, cfg.c1, cfg.c2)
        if found is None:
            status = Status.LINE_SEARCH_FAIL
            log.warning("line search failed at iteration %d (f=%.6g, |g|=%.3g)", it, f, gn)
            break
        alpha, f_new, g_new = found
        s = alpha * d
        y = g_new - g
        sy = float(s @ y)
        if method is Method.BFGS:
            if sy > 1e-10 * float(np.linalg.norm(s) * np.linalg.norm(y)):
                if H is None:
                    H = np.eye(n) * (sy / float(y @ y))
                rho = 1.0 / sy
                Hy = H @ y
                H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
        elif method is Method.LBFGS:
            if sy > 1e-10 * float(np.linalg.norm(s) * np.linalg.norm(y)):
                mem.append((s, y, 1.0 / sy))
        x = x + s
        d_prev, g_prev, step_prev = d, g, alpha
        f, g = f_new, g_new
        it += 1
        gn = _norm(g)
        if cfg.history:
            history.append(f)
        if gn <= cfg.tol:
            status = Status.CONVERGED
    return OptimResult(x, f, gn, it, status, history, fun.calls)


def _two_loop(g, mem):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(mem):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if mem:
        s, y, _ = mem[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(mem, reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def check_gradient(fun: Objective, x, eps: float = 1e-5) -> float:
    """Max over coordinates of ``|g_i - fd_i| / max(1, |g_i|)`` using central differences."""
    x = np.array(x, dtype=float)
    _, g = fun(x)
    g = np.asarray(g, dtype=float)
    worst = 0.0
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += eps
        xm[i] -= eps
        fp, _ = fun(xp)
        fm, _ = fun(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite objective while probing coordinate {i}")
        fd = (fp - fm) / (2 * eps)
        worst = max(worst, abs(g[i] - fd) / max(1.0, abs(g[i])))
    return worst
