"""Independent oracles and small statistics helpers for the test suite.

Everything here deliberately avoids the library's own algorithms: the
all-pairs correlator is plain numpy broadcasting, the telegraph occupation
oracle is a direct dwell-time simulation, and the runs test is textbook.
"""

import numpy as np


def allpairs_hist(a, b, same, width, n_side):
    """Reference correlation counts by brute-force pair enumeration.

    Bin k collects delays d = t_b - t_a with
    sign(d) * ((|d| + width//2) // width) == k; the self pair i == j is
    excluded for same-channel input.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    shift = width // 2
    counts = np.zeros(2 * n_side + 1, dtype=np.int64)
    chunk = max(1, int(2e6 // max(b.size, 1)))
    for start in range(0, a.size, chunk):
        block = a[start:start + chunk]
        d = b[None, :] - block[:, None]
        if same:
            rows = np.arange(start, start + block.size)
            d = np.where(np.arange(b.size)[None, :] == rows[:, None],
                         np.iinfo(np.int64).max, d)
        d = d.ravel()
        d = d[d != np.iinfo(np.int64).max]
        mag = np.abs(d)
        k = np.where(d >= 0, (mag + shift) // width, -((mag + shift) // width))
        k = k[np.abs(k) <= n_side]
        counts += np.bincount((k + n_side).astype(np.int64),
                              minlength=2 * n_side + 1)
    return counts


def telegraph_occupation(rng, rate_01, rate_10, n_switches):
    """Fraction of time a two-state telegraph spends in state 0.

    Direct alternating-dwell simulation with ``n_switches`` transitions,
    independent of the package's interval machinery.
    """
    n_pairs = n_switches // 2 + 1
    dwell_0 = rng.exponential(1.0 / rate_01, n_pairs)
    dwell_1 = rng.exponential(1.0 / rate_10, n_pairs)
    return dwell_0.sum() / (dwell_0.sum() + dwell_1.sum())


def runs_test_z(values):
    """Wald-Wolfowitz runs-test z statistic for the signs of ``values``."""
    signs = np.asarray(values) > 0
    n_pos = int(signs.sum())
    n_neg = signs.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return np.inf
    runs = 1 + int(np.sum(signs[1:] != signs[:-1]))
    mean = 2.0 * n_pos * n_neg / (n_pos + n_neg) + 1.0
    var = (2.0 * n_pos * n_neg * (2.0 * n_pos * n_neg - n_pos - n_neg)
           / ((n_pos + n_neg) ** 2 * (n_pos + n_neg - 1.0)))
    return (runs - mean) / np.sqrt(var)


def trace_distance(a, b):
    return 0.5 * float(np.abs(np.linalg.eigvalsh(np.asarray(a) - np.asarray(b))).sum())


def poisson_times(rng, rate_cps, duration_s):
    """Sorted integer-ps timestamps of a homogeneous Poisson process."""
    n = rng.poisson(rate_cps * duration_s)
    duration_ps = int(round(duration_s * 1e12))
    return np.sort(rng.integers(0, duration_ps, n, dtype=np.int64))
