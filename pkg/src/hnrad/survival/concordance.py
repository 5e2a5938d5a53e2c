from __future__ import annotations

import numpy as np

from ..errors import UndefinedMetricError


def concordance_index(risks, times, events) -> float:
    """Harrell's C-index; higher risk should mean earlier event.

    A pair (i, j) is comparable when ``times[i] < times[j]`` and patient i had
    the event. Tied risks count one half.
    """
    r = np.asarray(risks, dtype=float)
    t = np.asarray(times, dtype=float)
    e = np.asarray(events, dtype=bool)
    if not (len(r) == len(t) == len(e)):
        raise ValueError("risks, times and events must have equal length")
    comparable = e[:, None] & (t[:, None] < t[None, :])
    n_pairs = int(comparable.sum())
    if n_pairs == 0:
        raise UndefinedMetricError("no comparable pairs (all censored or all tied)")
    higher = (r[:, None] > r[None, :]) & comparable
    ties = (r[:, None] == r[None, :]) & comparable
    return (int(higher.sum()) + 0.5 * int(ties.sum())) / n_pairs
