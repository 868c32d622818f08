from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from ab.lcnl.util.errors import NumericalError


@dataclass(frozen=True)
class StepPolicy:
    """
    Relative central-difference steps: h_i = rel * max(1, |x_i|).
    """
    gradient_step: float = 1e-6
    hessian_step: float = 1e-4

    @staticmethod
    def steps(x, relative) -> np.ndarray:
        return relative * np.maximum(1.0, np.abs(np.asarray(x, dtype=float)))


DEFAULT_POLICY = StepPolicy()


def _free_indices(x, free_mask):
    if free_mask is None:
        return np.arange(len(x))
    return np.flatnonzero(np.asarray(free_mask, dtype=bool))


def _label(names, i):
    return names[i] if names is not None else f"#{i}"


def _checked(func, x, names, i):
    value = func(x)
    if not np.all(np.isfinite(value)):
        raise NumericalError(f"Objective is not finite when perturbing coordinate '{_label(names, i)}'",
                             coordinate=_label(names, i))
    return value


def gradient(func, x, free_mask=None, policy: StepPolicy = DEFAULT_POLICY, names=None, relative_step=None):
    """
    Central-difference gradient over the full vector; coordinates outside free_mask get 0.
    """
    x = np.asarray(x, dtype=float)
    h = StepPolicy.steps(x, policy.gradient_step if relative_step is None else relative_step)
    g = np.zeros_like(x)
    for i in _free_indices(x, free_mask):
        up, down = x.copy(), x.copy()
        up[i] += h[i]
        down[i] -= h[i]
        g[i] = (_checked(func, up, names, i) - _checked(func, down, names, i)) / (2.0 * h[i])
    return g


def jacobian(func, x, free_mask=None, policy: StepPolicy = DEFAULT_POLICY, names=None):
    """
    Central-difference Jacobian of a vector-valued func, columns over the free coordinates only.
    Used for per-observation scores.
    """
    x = np.asarray(x, dtype=float)
    h = StepPolicy.steps(x, policy.gradient_step)
    free = _free_indices(x, free_mask)
    columns = []
    for i in free:
        up, down = x.copy(), x.copy()
        up[i] += h[i]
        down[i] -= h[i]
        columns.append((_checked(func, up, names, i) - _checked(func, down, names, i)) / (2.0 * h[i]))
    if not columns:
        return np.zeros((len(np.atleast_1d(func(x))), 0))
    return np.column_stack(columns)


def hessian(func, x, free_mask=None, policy: StepPolicy = DEFAULT_POLICY, names=None, verbose=False):
    """
    Central second differences over the free coordinates: three-point rule on the diagonal,
    four-point rule off it. Each off-diagonal pair is evaluated once and mirrored, so H is exactly symmetric.
    """
    x = np.asarray(x, dtype=float)
    h = StepPolicy.steps(x, policy.hessian_step)
    free = _free_indices(x, free_mask)
    k = len(free)
    f0 = _checked(func, x, names, free[0] if k else 0)
    H = np.zeros((k, k))

    def at(i, di, j=None, dj=0.0):
        point = x.copy()
        point[i] += di
        if j is not None:
            point[j] += dj
        return _checked(func, point, names, i)

    for a in tqdm(range(k), desc="Hessian", disable=not verbose):
        i = free[a]
        H[a, a] = (at(i, h[i]) - 2.0 * f0 + at(i, -h[i])) / (h[i] * h[i])
        for b in range(a + 1, k):
            j = free[b]
            pp = at(i, h[i], j, h[j])
            pm = at(i, h[i], j, -h[j])
            mp = at(i, -h[i], j, h[j])
            mm = at(i, -h[i], j, -h[j])
            H[a, b] = H[b, a] = (pp - pm - mp + mm) / (4.0 * h[i] * h[j])
    return H


def richardson_drift(func, x, free_mask=None, policy: StepPolicy = DEFAULT_POLICY, names=None) -> float:
    """
    Relative change between the gradient at step h and at step h/2, measured on the free coordinates.
    """
    full = gradient(func, x, free_mask, policy, names)
    half = gradient(func, x, free_mask, policy, names, relative_step=policy.gradient_step / 2.0)
    free = _free_indices(np.asarray(x), free_mask)
    diff = np.abs(full[free] - half[free])
    scale = np.maximum(1.0, np.abs(full[free]))
    return float(np.max(diff / scale)) if free.size else 0.0
