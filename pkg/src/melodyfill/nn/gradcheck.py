"""Central finite-difference gradient verification.

Used by the test suite: run the core in float64 (``set_dtype``), evaluate the
analytic gradient once, then perturb parameter entries by +/-h and compare.
Large tensors are probed on a seeded subsample of coordinates to keep the
check fast; every tensor is always probed at least ``min_coords`` times.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, no_grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> float:
    """Worst-case |a - n| / max(|a|, |n|, floor) over all entries.

    The floor turns the comparison into an absolute tolerance for entries
    whose true gradient is smaller than ``floor``, which is where central
    differences run out of precision.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def check_gradients(loss_fn, params: list[Tensor], h: float = 1e-5,
                    max_coords_per_tensor: int | None = None, seed: int = 0,
                    floor: float = 1e-4) -> float:
    """Compare analytic and numeric gradients of ``loss_fn`` w.r.t. ``params``.

    ``loss_fn`` must be deterministic and return a scalar Tensor.  Returns the
    maximum relative error over all probed coordinates.
    """
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    probe_rng = np.random.Generator(np.random.PCG64(seed))
    worst = 0.0
    with no_grad():
        for p, a in zip(params, analytic):
            flat = p.data.reshape(-1)
            n = flat.size
            if max_coords_per_tensor is not None and n > max_coords_per_tensor:
                coords = probe_rng.choice(n, size=max_coords_per_tensor, replace=False)
            else:
                coords = np.arange(n)
            a_flat = a.reshape(-1)
            for i in coords:
                orig = flat[i]
                flat[i] = orig + h
                f_plus = float(loss_fn().data)
                flat[i] = orig - h
                f_minus = float(loss_fn().data)
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2.0 * h)
                err = abs(a_flat[i] - numeric) / max(abs(a_flat[i]), abs(numeric), floor)
                worst = max(worst, err)
    return worst
