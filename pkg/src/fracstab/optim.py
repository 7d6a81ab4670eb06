"""Nelder-Mead minimisation with a best-so-far history, on top of SciPy's simplex."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    nit: int
    nfev: int
    converged: bool
    history: list = field(default_factory=list)


def nelder_mead(func, x0, step=None, xtol=1e-8, ftol=1e-10, max_iters=1000, max_fev=None, callback=None):
    """Minimise ``func`` from ``x0`` with the standard simplex coefficients.

    The starting simplex is ``x0`` plus ``step`` along each axis (5% of each
    non-zero coordinate by default).  Stops when the simplex spread is under
    both ``xtol`` and ``ftol``, or after ``max_iters`` iterations or
    ``max_fev`` evaluations.  Non-finite objective values count as ``+inf``
    so the search steps away from them.

    ``history`` lists the best value after each iteration and is therefore
    non-increasing; ``callback(k, x_best, f_best)`` runs after every iteration.
    """
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    n = x0.size
    if step is None:
        step = np.where(x0 != 0, 0.05 * x0, 0.00025)
    step = np.broadcast_to(np.asarray(step, dtype=np.float64), (n,))
    simplex = np.vstack([x0, x0 + np.diag(step)])

    def f(x):
        val = float(func(x))
        return val if np.isfinite(val) else np.inf

    history = []

    def on_iter(intermediate_result):
        record(intermediate_result.x, intermediate_result.fun)

    def record(x, fun):
        history.append(float(fun))
        if callback is not None:
            callback(len(history), np.array(x), history[-1])

    if max_iters <= 0:
        return SimplexResult(x0.copy(), f(x0), 0, 1, False, history)
    res = minimize(
        f, x0, method="Nelder-Mead", callback=on_iter,
        options={
            "initial_simplex": simplex, "xatol": xtol, "fatol": ftol, "maxiter": int(max_iters),
            "maxfev": np.inf if max_fev is None else int(max_fev), "adaptive": False,
        },
    )
    if len(history) < res.nit:
        # SciPy skips the callback on the iteration that exhausts its budget
        record(res.x, res.fun)
    return SimplexResult(np.array(res.x), float(res.fun), int(res.nit), int(res.nfev), res.status == 0, history)
