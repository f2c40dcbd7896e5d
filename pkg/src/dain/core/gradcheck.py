"""Central finite-difference gradient checking."""
import math

import numpy as np

from ..errors import NumericError
from .rng import check_random_state

__all__ = ["grad_check", "relative_error"]


def relative_error(analytic, numeric):
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
    return np.abs(a - n) / denom


def grad_check(fn, inputs, eps=1e-6, n_coords=20, random_state=None, skip_kinks=True,
               loss_fn=None):
    """Max relative error between analytic and central-difference gradients.

    Parameters
    ----------
    fn : callable
        ``fn(*inputs) -> (loss, grads)`` with ``grads`` aligned to ``inputs``.
        Called once for the analytic gradient and then with single
        coordinates perturbed in place.
    inputs : list of ndarray
        Mutable float arrays; they are restored after each probe.
    eps : float
        Half-width of the central difference.
    n_coords : int or None
        Coordinates probed per input (random subset); ``None`` probes all.
    skip_kinks : bool
        Drop a coordinate when its one-sided slopes disagree by more than
        0.1% (a probe straddling a ReLU kink or a max-pool tie).  A kink the
        filter lets through can bias the central difference by at most
        half that.
    loss_fn : callable, optional
        ``loss_fn(*inputs) -> loss`` used for the perturbed probes when a
        forward-only path is cheaper than ``fn``.

    Returns
    -------
    float
        ``max |a - n| / max(|a|, |n|, 1e-8)`` over probed coordinates.
    """
    rng = check_random_state(random_state)
    probe = loss_fn if loss_fn is not None else (lambda *a: fn(*a)[0])
    loss0, grads = fn(*inputs)
    loss0 = _finite(loss0)
    grads = [np.array(g, dtype=np.float64, copy=True) for g in grads]
    worst = 0.0
    for arr, g in zip(inputs, grads):
        flat = arr.reshape(-1)
        if n_coords is None or n_coords >= flat.size:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=n_coords, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            fp = _finite(probe(*inputs))
            flat[c] = orig - eps
            fm = _finite(probe(*inputs))
            flat[c] = orig
            numeric = (fp - fm) / (2 * eps)
            if skip_kinks:
                right = (fp - loss0) / eps
                left = (loss0 - fm) / eps
                scale = max(abs(right), abs(left), 1e-6)
                if abs(right - left) > 1e-3 * scale:
                    continue
            err = float(relative_error(g.reshape(-1)[c], numeric))
            worst = max(worst, err)
    return worst


def _finite(loss):
    loss = float(loss)
    if not math.isfinite(loss):
        raise NumericError(f"non-finite loss {loss}")
    return loss
