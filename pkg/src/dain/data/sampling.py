"""Contiguous windows of views along the arc."""
from ..errors import SamplingError
from .layout import THETAS

__all__ = ["window_starts", "sample_view_window"]


def window_starts(complete_thetas, n):
    """Arc indices at which ``n`` consecutive complete base views begin."""
    if n < 1:
        raise ValueError("window length must be positive")
    have = {THETAS.index(t) for t in complete_thetas}
    return [s for s in range(len(THETAS) - n + 1) if all(s + i in have for i in range(n))]


def sample_view_window(instance, n, rng, illumination=None):
    """Draw ``n`` consecutive base views, each with its offset partner.

    The start is uniform over valid positions.  Without ``illumination``
    the condition is drawn uniformly among those offering a window.
    Returns a list of ``(view, offset_view)`` records in arc order.
    """
    conds = [illumination] if illumination is not None else instance.conditions
    options = [(c, window_starts(instance.complete_thetas(c), n)) for c in conds]
    options = [(c, s) for c, s in options if s]
    if not options:
        raise SamplingError(
            f"{instance.instance_id} has no {n} contiguous complete views"
            + (f" under {illumination}" if illumination is not None else ""))
    cond, starts = options[int(rng.integers(len(options)))] if len(options) > 1 else options[0]
    start = starts[int(rng.integers(len(starts)))]
    return [(instance.view(t, 0, cond), instance.view(t, 5, cond))
            for t in THETAS[start:start + n]]
