"""Reference implementations written independently of the package.

Nothing here imports tecmrl internals beyond plain data access; the point
is a second, deliberately naive computation to check the real one against.
"""
from __future__ import annotations

import math

# -- cxSOFA polynomials, transcribed term by term in plain Python -------------


def cx_f1(pf, pf_vent):
    return max(0.0, 4 - pf / 100, 4 - pf_vent / 100)


def cx_f2(plt):
    return max(0.0, -1.367e-6 * plt ** 3 + 4.075e-4 * plt ** 2 - 0.0573 * plt + 4)


def cx_f3(bili):
    return min(4.0, 1.137e-7 * bili ** 4 - 3.613e-5 * bili ** 3 + 2.685e-3 * bili ** 2 + 9.831e-3)


def cx_f4(mbp, dopa, dobu, epi, norepi):
    gate = lambda v: 1.0 if v > 0 else 0.0
    return max(
        max(0.0, -mbp / 5),
        min(4.0, -3.365e-4 * dopa ** 2 - 6.254e-5 * dopa ** 2 + 0.208 * dopa + 2),
        2 * gate(dobu),
        min(gate(epi), 10 * epi + 3),
        min(gate(norepi), 10 * norepi + 3),
    )


def cx_f5(gcs):
    return -1.404e-4 * gcs ** 4 + 3.797e-3 * gcs ** 3 - 4.175e-2 * gcs ** 2 - 2.363e-2 * gcs + 4


def cx_f6(creat, uo):
    c = min(4.0, max(0.0, 1.007e-9 * creat ** 4 - 48.889e-7 * creat ** 3 + 2.336e-4 * creat ** 2 - 7.181e-3 * creat))
    u = min(4.0, max(0.0, 2.015e-8 * uo ** 3 + 3.811e-6 * uo ** 2) + (-8.523e-3 * uo + 4.696))
    return max(c, u)


def clamp(v):
    return min(4.0, max(0.0, v))


def cx_components(v: dict) -> list[float]:
    return [
        clamp(cx_f1(v["pf_ratio"], v["pf_ratio_vent"])),
        clamp(cx_f2(v["platelets"])),
        clamp(cx_f3(v["bilirubin"])),
        clamp(cx_f4(v["mbp"], v["dopamine"], v["dobutamine"], v["epinephrine"], v["norepinephrine"])),
        clamp(cx_f5(v["gcs"])),
        clamp(cx_f6(v["creatinine"], v["urine_output"])),
    ]


HEALTHY = dict(pf_ratio=500, pf_ratio_vent=500, platelets=300, bilirubin=5, mbp=90, dopamine=0, dobutamine=0,
               epinephrine=0, norepinephrine=0, gcs=15, creatinine=60, urine_output=2500)

# Frozen before the package existed (repr of the oracle output above).
FROZEN_HEALTHY_COMPONENTS = (0.0, 0.0, 0.0725108125, 2.0, 0.0, 4.0)
FROZEN_HEALTHY_TOTAL = 6.0725108125
FROZEN_F2 = {20: 3.0060640000000003, 50: 1.9828750000000004, 100: 0.9780000000000006, 150: 0.0}
FROZEN_F5_RAW_GCS15 = -0.041075


# -- discrete SOFA, as nested if/else -----------------------------------------


def sofa_oracle(v: dict) -> int:
    # the ventilated ratio is its own field; a normal value there means "not ventilated"
    pf, pfv = v["pf_ratio"], v["pf_ratio_vent"]
    plain = 2 if pf < 300 else 1 if pf < 400 else 0
    vent = 4 if pfv < 100 else 3 if pfv < 200 else 2 if pfv < 300 else 1 if pfv < 400 else 0
    resp = max(plain, vent)
    p = v["platelets"]
    coag = 4 if p < 20 else 3 if p < 50 else 2 if p < 100 else 1 if p < 150 else 0
    b = v["bilirubin"]
    liver = 4 if b > 204 else 3 if b > 101 else 2 if b > 32 else 1 if b >= 20 else 0
    dopa, dobu, epi, ne = v["dopamine"], v["dobutamine"], v["epinephrine"], v["norepinephrine"]
    if dopa > 15 or epi > 0.1 or ne > 0.1:
        circ = 4
    elif dopa > 5 or epi > 0 or ne > 0:
        circ = 3
    elif dopa > 0 or dobu > 0:
        circ = 2
    elif v["mbp"] < 70:
        circ = 1
    else:
        circ = 0
    g = v["gcs"]
    cns = 4 if g < 6 else 3 if g < 10 else 2 if g < 13 else 1 if g < 15 else 0
    c, u = v["creatinine"], v["urine_output"]
    renal_c = 4 if c > 440 else 3 if c > 299 else 2 if c > 170 else 1 if c > 110 else 0
    renal_u = 4 if u < 200 else 3 if u < 500 else 0
    return resp + coag + liver + circ + cns + max(renal_c, renal_u)


# -- TECM by brute force --------------------------------------------------------


def _sim(a, b):
    return 1.0 / (1.0 + 0.25 * abs(a - b))


def _argbest(row):
    best = 0
    for j in range(1, len(row)):
        if row[j] > row[best]:
            best = j
    return best


def _argworst(row):
    worst = 0
    for j in range(1, len(row)):
        if row[j] < row[worst]:
            worst = j
    return worst


def episode_stats(episode, q):
    """Per-step similarities, one step at a time, terminal step excluded."""
    so, sw, match = [], [], 0
    for step in episode.steps[:-1]:
        x = [[getattr(step.vitals, f) for f in step.vitals.__dataclass_fields__]]
        row = list(q.action_values(x)[0])
        b, w = _argbest(row), _argworst(row)
        so.append(_sim(step.action, b))
        sw.append(_sim(step.action, w))
        match += step.action == b
    return so, sw, match


def tecm_oracle(good, bad, q, tau):
    def mean(xs):
        return sum(xs) / len(xs)

    pools = {"OG": ([], []), "WG": ([], []), "OB": ([], []), "WB": ([], [])}
    for ep in good:
        so, sw, _ = episode_stats(ep, q)
        n = len(so)
        rho_og = sum(1 for o, w in zip(so, sw) if o >= w) / n
        if rho_og > tau:
            pools["OG"][0].append(mean(so))
            pools["OG"][1].append(rho_og)
        else:
            pools["WG"][0].append(mean(sw))
            pools["WG"][1].append(1 - rho_og)
    for ep in bad:
        so, sw, _ = episode_stats(ep, q)
        n = len(so)
        rho_wb = sum(1 for o, w in zip(so, sw) if w >= o) / n
        if rho_wb > tau:
            pools["WB"][0].append(mean(sw))
            pools["WB"][1].append(rho_wb)
        else:
            pools["OB"][0].append(mean(so))
            pools["OB"][1].append(1 - rho_wb)
    return {k: (mean(s) * mean(r) if s else 0.0) for k, (s, r) in pools.items()}


def sigma_oracle(og, ob, wg, wb):
    return (2 * og * wb / (og + wb)) * ((og + wg) / (2 * og * wg))


def mu_oracle(og, ob, wg, wb):
    return (og - wg) - (wb - ob)


# -- tabular value iteration -----------------------------------------------------


def value_iteration(transitions, n_states, n_actions, gamma, tol=1e-14, max_iter=100_000):
    """Fixed point of the empirical Bellman operator.

    ``transitions`` is a list of (s, a, r, s_next, done). Pairs never seen keep
    their initial value of 0, matching a default-initialized table.
    """
    buckets = {}
    for s, a, r, sn, done in transitions:
        buckets.setdefault((s, a), []).append((r, sn, done))
    q = [[0.0] * n_actions for _ in range(n_states)]
    for _ in range(max_iter):
        new = [row[:] for row in q]
        for (s, a), outs in buckets.items():
            total = 0.0
            for r, sn, done in outs:
                total += r if done else r + gamma * max(q[sn])
            new[s][a] = total / len(outs)
        delta = max(abs(new[s][a] - q[s][a]) for s in range(n_states) for a in range(n_actions))
        q = new
        if delta < tol:
            break
    return q


# -- Welch statistic and degrees of freedom --------------------------------------


def welch_oracle(a, b):
    na, nb = len(a), len(b)
    ma, mb = sum(a) / na, sum(b) / nb
    va = sum((x - ma) ** 2 for x in a) / (na - 1) / na
    vb = sum((x - mb) ** 2 for x in b) / (nb - 1) / nb
    t = (ma - mb) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va ** 2 / (na - 1) + vb ** 2 / (nb - 1))
    return t, df
