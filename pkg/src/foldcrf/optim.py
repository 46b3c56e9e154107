"""Thin L-BFGS driver shared by the model trainers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

LBFGS_MEMORY = 10


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    n_iter: int
    history: list[float] = field(default_factory=list)  # objective after each accepted step


def lbfgs(fun_grad, x0: np.ndarray, max_iter: int, error=RuntimeError, label: str = "") -> MinimizeResult:
    """Minimize ``fun_grad(x) -> (value, gradient)`` with L-BFGS-B (memory 10).

    A non-finite value or gradient aborts with ``error`` carrying the
    parameter norm, so divergence is reported instead of silently clamped.
    ``history[0]`` is the starting value.
    """
    seen: dict[bytes, float] = {}

    def wrapped(x):
        val, g = fun_grad(x)
        if not np.isfinite(val) or not np.all(np.isfinite(g)):
            raise error(f"{label}non-finite objective (value={val}, |x|={np.linalg.norm(x):.3g})")
        if len(seen) > 64:
            seen.clear()
        seen[x.tobytes()] = float(val)
        return val, g

    history = [float(wrapped(np.asarray(x0, dtype=float))[0])]

    def record(xk):
        val = seen.get(xk.tobytes())
        history.append(float(fun_grad(xk)[0]) if val is None else val)

    res = optimize.minimize(
        wrapped, x0, jac=True, method="L-BFGS-B", callback=record,
        options={"maxcor": LBFGS_MEMORY, "maxiter": max_iter, "ftol": 1e-12, "gtol": 1e-6},
    )
    return MinimizeResult(np.asarray(res.x), float(res.fun), int(res.nit), history)
