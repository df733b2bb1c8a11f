# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel core: kill grids, per-test voting, greedy set cover.

Hot loops for research-scale matrices (thousands of tests x versions).
``nvarena.kernels`` selects this module when built, else the pure fallback.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def kill_grid(cnp.int64_t[:, ::1] sig_ids, cnp.int64_t[::1] ref_ids):
    cdef Py_ssize_t n_tests = sig_ids.shape[0]
    cdef Py_ssize_t n_versions = sig_ids.shape[1]
    out_arr = np.zeros((n_tests, n_versions), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] out = out_arr
    cdef Py_ssize_t t, v
    for t in range(n_tests):
        for v in range(n_versions):
            out[t, v] = sig_ids[t, v] != ref_ids[t]
    return out_arr.view(np.bool_)


def vote_rows(cnp.int64_t[:, ::1] sig_ids):
    cdef Py_ssize_t n_tests = sig_ids.shape[0]
    cdef Py_ssize_t n_versions = sig_ids.shape[1]
    winners_arr = np.empty(n_tests, dtype=np.int64)
    support_arr = np.empty(n_tests, dtype=np.int64)
    if n_tests == 0 or n_versions == 0:
        return winners_arr[:0], support_arr[:0]
    cdef cnp.int64_t[::1] winners = winners_arr
    cdef cnp.int64_t[::1] support = support_arr
    buf_arr = np.empty(n_versions, dtype=np.int64)
    cdef cnp.int64_t[::1] buf = buf_arr  # sort below is in place, view stays valid
    cdef cnp.int64_t best_val, cur_val
    cdef Py_ssize_t t, v, best_cnt, cur_cnt
    cdef bint tie
    for t in range(n_tests):
        for v in range(n_versions):
            buf[v] = sig_ids[t, v]
        buf_arr.sort()
        best_cnt = 0
        best_val = buf[0]
        cur_val = buf[0]
        cur_cnt = 1
        tie = False
        for v in range(1, n_versions):
            if buf[v] == cur_val:
                cur_cnt += 1
            else:
                if cur_cnt > best_cnt:
                    best_cnt = cur_cnt
                    best_val = cur_val
                    tie = False
                elif cur_cnt == best_cnt:
                    tie = True
                cur_val = buf[v]
                cur_cnt = 1
        if cur_cnt > best_cnt:
            best_cnt = cur_cnt
            best_val = cur_val
            tie = False
        elif cur_cnt == best_cnt:
            tie = True
        winners[t] = -1 if tie else best_val
        support[t] = best_cnt
    return winners_arr, support_arr


def greedy_cover(cnp.uint8_t[:, ::1] kills):
    cdef Py_ssize_t n_tests = kills.shape[0]
    cdef Py_ssize_t n_versions = kills.shape[1]
    covered_arr = np.zeros(n_versions, dtype=np.uint8)
    cdef cnp.uint8_t[::1] covered = covered_arr
    chosen = []
    cdef Py_ssize_t t, v, best_t
    cdef long gain, best_gain
    while True:
        best_t = -1
        best_gain = 0
        for t in range(n_tests):
            gain = 0
            for v in range(n_versions):
                if kills[t, v] and not covered[v]:
                    gain += 1
            if gain > best_gain:
                best_gain = gain
                best_t = t
        if best_t < 0:
            break
        chosen.append(best_t)
        for v in range(n_versions):
            if kills[best_t, v]:
                covered[v] = 1
    return chosen
