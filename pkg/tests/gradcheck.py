"""Central finite-difference gradient checking for autodiff graphs."""

import numpy as np

from graphfuzzy.autodiff import Parameter

STEP = 1e-5
TOL = 1e-4


def relative_error(analytic, numeric, floor=1e-8):
    a, n = np.asarray(analytic), np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def check(build_loss, arrays, step=STEP):
    """Max relative error between backward() and central differences.

    ``build_loss`` maps a list of Parameters to a 1x1 Value.
    """
    params = [Parameter(np.array(a, dtype=np.float64), f"p{i}") for i, a in enumerate(arrays)]
    build_loss(params).backward()
    worst = 0.0
    for p in params:
        numeric = np.zeros_like(p.data)
        for idx in np.ndindex(p.data.shape):
            old = p.data[idx]
            p.data[idx] = old + step
            up = build_loss(params).item()
            p.data[idx] = old - step
            down = build_loss(params).item()
            p.data[idx] = old
            numeric[idx] = (up - down) / (2 * step)
        worst = max(worst, relative_error(p.grad, numeric))
    return worst


def check_params(build_loss, params, step=STEP):
    """Same as :func:`check` but on existing Parameters (e.g. a whole model)."""
    for p in params:
        p.zero_grad()
    build_loss().backward()
    worst = 0.0
    for p in params:
        numeric = np.zeros_like(p.data)
        for idx in np.ndindex(p.data.shape):
            old = p.data[idx]
            p.data[idx] = old + step
            up = build_loss().item()
            p.data[idx] = old - step
            down = build_loss().item()
            p.data[idx] = old
            numeric[idx] = (up - down) / (2 * step)
        worst = max(worst, relative_error(p.grad, numeric))
    return worst


def away_from_zero(rng, shape, margin=1e-2):
    # keeps piecewise-linear ops away from their kink
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-300) * margin + x, x)
