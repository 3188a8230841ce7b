"""Numba slot loop used by :mod:`mista.sim`.

Passive sources activate in the order they last succeeded, so they sit in a
FIFO ring of (source, activation slot). Contention is drawn as counts:
Binomial(m, tau1) minislot attempters, then Binomial(J, tau2) data senders,
with the winner uniform over the active set. By exchangeability this has the
same law as per-source coin flips.
"""

from __future__ import annotations

import numba as nb
import numpy as np

SINGLE_TOSS = 0
MINISLOT = 1
MULTI_MINISLOT = 2


@nb.njit(cache=True, nogil=True)
def _arith_age_sum(a, b, last):
    # sum over slots s in [a, b] of (s - last + 1)
    cnt = b - a + 1
    return (cnt * (a + b)) // 2 - cnt * (last - 1)


@nb.njit(cache=True, nogil=True)
def simulate(n, gamma, mode, tau1, tau2, schedule, slots, warmup, seed, init_ages, sample_every):
    np.random.seed(seed)

    last = np.empty(n, np.int64)  # slot at which the source's age was 1
    active = np.empty(n, np.int64)
    pos = np.full(n, -1, np.int64)
    ring = np.empty(n, np.int64)
    ring_due = np.empty(n, np.int64)
    head = 0
    qlen = 0
    m = 0

    # age a at slot 0 means age 1 at slot 1 - a; passive sources join at gamma - a
    order = np.argsort(-init_ages, kind="mergesort")
    for i in order:
        a = init_ages[i]
        last[i] = 1 - a
        if a >= gamma:
            active[m] = i
            pos[i] = m
            m += 1
        else:
            ring[qlen] = i
            ring_due[qlen] = gamma - a
            qlen += 1
    sum_last = np.int64(0)
    for i in range(n):
        sum_last += last[i]

    age_sum = np.zeros(n, np.int64)
    resets = np.zeros(n, np.int64)
    hist = np.zeros(n + 1, np.int64)
    n_samples = (slots + sample_every - 1) // sample_every
    s_t = np.empty(n_samples, np.int64)
    s_m = np.empty(n_samples, np.int64)
    s_age = np.empty(n_samples, np.float64)
    s_pivot = np.empty(n_samples, np.int64)
    si = 0
    successes = 0
    n_sched = schedule.shape[0]

    for t in range(slots):
        while qlen > 0 and ring_due[head] <= t:
            src = ring[head]
            head += 1
            if head == n:
                head = 0
            qlen -= 1
            active[m] = src
            pos[src] = m
            m += 1

        if t >= warmup:
            hist[m] += 1
        if t % sample_every == 0:
            s_t[si] = t
            s_m[si] = m
            s_age[si] = t + 1.0 - sum_last / n
            s_pivot[si] = t - last[0] + 1
            si += 1

        win = -1
        if m > 0:
            if mode == MULTI_MINISLOT:
                c = m
                for j in range(n_sched):
                    a = np.random.binomial(c, schedule[j])
                    if a == 1:
                        win = np.random.randint(0, m)
                        break
                    if a >= 2:
                        c = a
            else:
                att = np.random.binomial(m, tau1)
                if att == 1:
                    win = np.random.randint(0, m)
                elif att >= 2 and mode == MINISLOT:
                    if np.random.binomial(att, tau2) == 1:
                        win = np.random.randint(0, m)

        if win >= 0:
            src = active[win]
            if t >= warmup:
                lo = last[src] if last[src] > warmup else warmup
                age_sum[src] += _arith_age_sum(lo, t, last[src])
                resets[src] += 1
                successes += 1
            # swap-remove from the active array
            m -= 1
            moved = active[m]
            active[win] = moved
            pos[moved] = win
            pos[src] = -1
            sum_last += (t + 1) - last[src]
            last[src] = t + 1
            tail = head + qlen
            if tail >= n:
                tail -= n
            ring[tail] = src
            ring_due[tail] = t + gamma
            qlen += 1

    end = slots - 1
    for i in range(n):
        lo = last[i] if last[i] > warmup else warmup
        if lo <= end:
            age_sum[i] += _arith_age_sum(lo, end, last[i])

    return age_sum, resets, hist, successes, s_t[:si], s_m[:si], s_age[:si], s_pivot[:si]


def run_kernel(n, gamma, mode, tau1, tau2, schedule, slots, warmup, seed, init_ages, sample_every):
    return simulate(
        np.int64(n), np.int64(gamma), np.int64(mode), float(tau1), float(tau2),
        np.asarray(schedule, dtype=np.float64), np.int64(slots), np.int64(warmup),
        np.uint32(seed), np.ascontiguousarray(init_ages, dtype=np.int64), np.int64(sample_every),
    )
