"""Kernel backend selection and dtype normalization.

Imports the compiled core when the extension was built, otherwise the pure
fallback. All callers go through the wrappers here, which pin the array
dtypes both backends expect. ``BACKEND`` names the active implementation.
"""

from __future__ import annotations

import numpy as np

try:
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:  # extension not built; pure fallback
    from . import _kernels_py as _impl

    BACKEND = "python"


def kill_grid(sig_ids, ref_ids):
    sig = np.ascontiguousarray(sig_ids, dtype=np.int64)
    ref = np.ascontiguousarray(ref_ids, dtype=np.int64)
    if sig.ndim != 2 or ref.shape != (sig.shape[0],):
        raise ValueError("sig_ids must be (tests, versions), ref_ids (tests,)")
    return np.asarray(_impl.kill_grid(sig, ref), dtype=bool)


def vote_rows(sig_ids):
    sig = np.ascontiguousarray(sig_ids, dtype=np.int64)
    winners, support = _impl.vote_rows(sig)
    return np.asarray(winners, dtype=np.int64), np.asarray(support, dtype=np.int64)


def greedy_cover(kills):
    grid = np.ascontiguousarray(np.asarray(kills, dtype=bool), dtype=np.uint8)
    return [int(t) for t in _impl.greedy_cover(grid)]


def intern_grid(keys_by_test):
    """Intern arbitrary hashable signature keys into an int64 id grid.

    ``keys_by_test`` is a list (per test) of lists (per version) of hashable
    keys; returns (grid, table) where table maps key -> id. Equal keys get
    equal ids, so the compiled kernels only ever compare integers.
    """
    table = {}
    n_tests = len(keys_by_test)
    n_versions = len(keys_by_test[0]) if n_tests else 0
    grid = np.empty((n_tests, n_versions), dtype=np.int64)
    for t, row in enumerate(keys_by_test):
        for v, key in enumerate(row):
            grid[t, v] = table.setdefault(key, len(table))
    return grid, table
