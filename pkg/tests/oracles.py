"""Brute-force reference implementations shared by the test modules."""
from __future__ import annotations

import numpy as np


def sweep_band(active_tail, reference, lo_q=0.10, hi_q=0.90):
    """Brute force over a dense grid of candidate thresholds: keep those that put all
    trimmed active samples strictly above and all trimmed reference samples at or
    below; returns (min, max) of the kept candidates widened by one grid step."""
    a = np.sort(active_tail)
    b = np.sort(reference)
    a_kept = a[a >= np.quantile(a, lo_q)]
    b_kept = b[b <= np.quantile(b, hi_q)]
    lo, hi = min(a[0], b[0]), max(a[-1], b[-1])
    cands, step = np.linspace(lo, hi, 4001, retstep=True)
    ok = [c for c in cands if np.all(a_kept > c) and np.all(b_kept <= c)]
    if not ok:
        return None
    return min(ok) - step, max(ok) + step
