"""The reference performance model for a serial-dispatch batch scheduler.

A scheduler that starts at most ``r`` jobs per second on ``P`` processors
runs ``N`` jobs of length ``t`` no faster than N/r + t. Efficiency is the
measured speedup over the ideal one, E = S_p / S_i, where the ideal run
takes N*t/P.
"""

import math

from ..providers.simbatch import closed_form_makespan

# Task lengths for 90% efficiency quoted alongside the throughput/efficiency
# curves, keyed by (processors, dispatch rate). N is one million tasks there.
CLAIMED_THRESHOLDS = {
    (100, 1.0): 100.0,
    (1000, 1.0): 900.0,
    (10_000, 1.0): 10_000.0,
    (100, 500.0): 0.2,
    (1000, 500.0): 1.9,
    (10_000, 500.0): 20.0,
}
THRESHOLD_TASKS = 1_000_000


def efficiency(speedup_measured, speedup_ideal):
    """E = S_p / S_i."""
    if speedup_measured <= 0 or speedup_ideal <= 0:
        raise ValueError("speedups must be positive")
    return speedup_measured / speedup_ideal


def ideal_makespan(P, N, t):
    return N * t / P


def efficiency_model(P, r, N, t):
    """Makespan and efficiency of N jobs of length t on P processors behind a
    dispatcher that starts r jobs per second.

    The makespan is exact for the simulated batch scheduler: N/r + t while
    dispatch is the bottleneck (N <= P or r*t <= P - 1), otherwise each round
    of P jobs costs t plus one dispatch interval.
    """
    if min(P, r, N, t) <= 0:
        raise ValueError("P, r, N and t must be positive")
    makespan = closed_form_makespan(int(N), float(t), int(P), float(r))
    return {"makespan": makespan, "ideal": ideal_makespan(P, N, t),
            "efficiency": ideal_makespan(P, N, t) / makespan}


def reference_makespan(P, r, N, t):
    """The rougher two-regime approximation: N/r + t when r*t <= P, else
    N*t/P + P/(2r). Reported next to the exact form for comparison."""
    if r * t <= P:
        return N / r + t
    return N * t / P + P / (2 * r)


def length_for_efficiency(P, r, N=THRESHOLD_TASKS, target=0.9, tol=1e-9):
    """Smallest task length whose modelled efficiency reaches ``target``."""
    lo, hi = 0.0, 1.0
    while efficiency_model(P, r, N, hi)["efficiency"] < target:
        hi *= 2
        if hi > 1e12:
            raise ValueError("target efficiency unreachable")
    while hi - lo > tol * max(1.0, hi):
        mid = (lo + hi) / 2
        if mid > 0 and efficiency_model(P, r, N, mid)["efficiency"] >= target:
            hi = mid
        else:
            lo = mid
    return hi


def threshold_table(N=THRESHOLD_TASKS, target=0.9):
    rows = []
    for (P, r), claim in CLAIMED_THRESHOLDS.items():
        t = length_for_efficiency(P, r, N, target)
        rows.append({"P": P, "r": r, "model_t": t, "claimed_t": claim,
                     "rel_diff": abs(claim - t) / t})
    return rows


def sample_grid(n=50, seed=0):
    """Parameter points (P, r, N, t) for cross-checking model and simulation.

    Sizes stay small so the discrete-event side runs in well under a second.
    """
    import random

    rng = random.Random(seed)
    pts = []
    while len(pts) < n:
        P = rng.choice([4, 8, 16, 32, 64])
        r = rng.choice([0.5, 1.0, 2.0, 11.0, 50.0, 500.0])
        N = P * rng.randint(1, 6) + rng.choice([0, 0, rng.randint(1, P)])
        t = round(math.exp(rng.uniform(math.log(0.05), math.log(2000))), 3)
        pts.append((P, r, N, t))
    return pts


__all__ = ["efficiency", "efficiency_model", "reference_makespan", "ideal_makespan",
           "length_for_efficiency", "threshold_table", "sample_grid", "CLAIMED_THRESHOLDS"]
