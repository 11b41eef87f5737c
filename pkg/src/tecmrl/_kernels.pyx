# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Semantics mirror _kernels_py exactly."""

import numpy as np


def ql_sweep(double[:, ::1] q, long long[:, ::1] visits,
             const long long[::1] s, const long long[::1] a, const double[::1] r,
             const long long[::1] s_next, const unsigned char[::1] done,
             const long long[::1] order, double lr, double gamma):
    cdef Py_ssize_t k, i, j, n_act = q.shape[1]
    cdef long long si, ai, sn
    cdef double best, target
    for k in range(order.shape[0]):
        i = order[k]
        si = s[i]
        ai = a[i]
        if done[i]:
            target = r[i]
        else:
            sn = s_next[i]
            best = q[sn, 0]
            for j in range(1, n_act):
                if q[sn, j] > best:
                    best = q[sn, j]
            target = r[i] + gamma * best
        q[si, ai] = q[si, ai] + lr * (target - q[si, ai])
        visits[si, ai] += 1


def episode_similarity(const long long[::1] actions, const long long[::1] best,
                       const long long[::1] worst, const long long[::1] offsets):
    cdef Py_ssize_t n_ep = offsets.shape[0] - 1
    sum_o_arr = np.zeros(n_ep, dtype=np.float64)
    sum_w_arr = np.zeros(n_ep, dtype=np.float64)
    n_og_arr = np.zeros(n_ep, dtype=np.int64)
    n_wb_arr = np.zeros(n_ep, dtype=np.int64)
    n_match_arr = np.zeros(n_ep, dtype=np.int64)
    cdef double[::1] sum_o = sum_o_arr
    cdef double[::1] sum_w = sum_w_arr
    cdef long long[::1] n_og = n_og_arr
    cdef long long[::1] n_wb = n_wb_arr
    cdef long long[::1] n_match = n_match_arr
    cdef Py_ssize_t e, t
    cdef long long d_o, d_w
    cdef double sim_o, sim_w, acc_o, acc_w
    for e in range(n_ep):
        acc_o = 0.0
        acc_w = 0.0
        for t in range(offsets[e], offsets[e + 1]):
            d_o = actions[t] - best[t]
            d_w = actions[t] - worst[t]
            if d_o < 0:
                d_o = -d_o
            if d_w < 0:
                d_w = -d_w
            sim_o = 1.0 / (1.0 + 0.25 * d_o)
            sim_w = 1.0 / (1.0 + 0.25 * d_w)
            acc_o = acc_o + sim_o
            acc_w = acc_w + sim_w
            if sim_o >= sim_w:
                n_og[e] += 1
            if sim_w >= sim_o:
                n_wb[e] += 1
            if d_o == 0:
                n_match[e] += 1
        sum_o[e] = acc_o
        sum_w[e] = acc_w
    return sum_o_arr, sum_w_arr, n_og_arr, n_wb_arr, n_match_arr
