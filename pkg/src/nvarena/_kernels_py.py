"""Pure-Python kernel fallback.

Same contracts as the compiled core in ``_ckernels.pyx``; used when the
extension is not built. Readable loops, no attempt at speed.
"""

from __future__ import annotations

from collections import Counter

import numpy as np


def kill_grid(sig_ids, ref_ids):
    """kills[t][v] = sig_ids[t][v] != ref_ids[t], as a bool grid."""
    ids = sig_ids.tolist()
    ref = ref_ids.tolist()
    out = [[cell != ref[t] for cell in row] for t, row in enumerate(ids)]
    return np.array(out, dtype=bool).reshape(sig_ids.shape)


def vote_rows(sig_ids):
    """Per test: (winner id or -1 on a tie for the maximum, max multiplicity)."""
    winners, support = [], []
    for row in sig_ids.tolist():
        counts = Counter(row)
        top = max(counts.values())
        leaders = [k for k, c in counts.items() if c == top]
        winners.append(leaders[0] if len(leaders) == 1 else -1)
        support.append(top)
    return np.array(winners, dtype=np.int64), np.array(support, dtype=np.int64)


def greedy_cover(kills):
    """Greedy set cover over a bool kill grid; returns test indices in pick order.

    Each step takes the test killing the most not-yet-killed versions,
    breaking ties toward the lower test index, until no test adds kills.
    """
    rows = [list(row) for row in np.asarray(kills, dtype=bool).tolist()]
    n_tests = len(rows)
    n_versions = len(rows[0]) if n_tests else 0
    covered = [False] * n_versions
    chosen = []
    while True:
        best_t, best_gain = -1, 0
        for t in range(n_tests):
            row = rows[t]
            gain = sum(1 for v in range(n_versions) if row[v] and not covered[v])
            if gain > best_gain:
                best_gain, best_t = gain, t
        if best_t < 0:
            break
        chosen.append(best_t)
        for v in range(n_versions):
            if rows[best_t][v]:
                covered[v] = True
    return chosen
