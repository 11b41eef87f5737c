"""Pure-Python versions of the compiled kernels (same arithmetic order)."""
import numpy as np


def ql_sweep(q, visits, s, a, r, s_next, done, order, lr, gamma):
    table = q.tolist()
    n_act = q.shape[1]
    s, a, r, s_next, done = s.tolist(), a.tolist(), r.tolist(), s_next.tolist(), done.tolist()
    counts = visits.tolist()
    for i in order.tolist():
        si, ai = s[i], a[i]
        if done[i]:
            target = r[i]
        else:
            row = table[s_next[i]]
            best = row[0]
            for j in range(1, n_act):
                if row[j] > best:
                    best = row[j]
            target = r[i] + gamma * best
        cell = table[si][ai]
        table[si][ai] = cell + lr * (target - cell)
        counts[si][ai] += 1
    q[...] = table
    visits[...] = counts


def episode_similarity(actions, best, worst, offsets):
    n_ep = len(offsets) - 1
    sum_o = np.zeros(n_ep)
    sum_w = np.zeros(n_ep)
    n_og = np.zeros(n_ep, dtype=np.int64)
    n_wb = np.zeros(n_ep, dtype=np.int64)
    n_match = np.zeros(n_ep, dtype=np.int64)
    actions, best, worst, offsets = actions.tolist(), best.tolist(), worst.tolist(), offsets.tolist()
    for e in range(n_ep):
        acc_o = acc_w = 0.0
        for t in range(offsets[e], offsets[e + 1]):
            d_o = abs(actions[t] - best[t])
            d_w = abs(actions[t] - worst[t])
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
    return sum_o, sum_w, n_og, n_wb, n_match
