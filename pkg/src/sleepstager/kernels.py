"""Per-window numeric kernels: numba-compiled loops with a pure-numpy fallback.

The loops here dominate feature-extraction runtime (they run once per
window placement per epoch per channel). Set ``SLEEPSTAGER_NO_NUMBA=1``
before import to force the numpy path; otherwise numba is used when
importable. Both backends implement the same math; see
``benchmarks/bench_kernels.py`` for a timing comparison.
"""

from __future__ import annotations

import math
import os

import numpy as np


def numba_disabled_by_env() -> bool:
    return os.environ.get("SLEEPSTAGER_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")


# ---------------------------------------------------------------------------
# Loop implementations (numba-compilable source)
# ---------------------------------------------------------------------------


def _moments_loop(x):
    """Population std, Fisher-Pearson skewness, excess kurtosis."""
    n = x.shape[0]
    mean = 0.0
    for i in range(n):
        mean += x[i]
    mean /= n
    m2 = 0.0
    m3 = 0.0
    m4 = 0.0
    for i in range(n):
        d = x[i] - mean
        d2 = d * d
        m2 += d2
        m3 += d2 * d
        m4 += d2 * d2
    m2 /= n
    m3 /= n
    m4 /= n
    if m2 <= 0.0:
        return 0.0, 0.0, 0.0
    return math.sqrt(m2), m3 / m2**1.5, m4 / (m2 * m2) - 3.0


def _quantile_sorted(s, q):
    # numpy's 'linear' interpolation between order statistics
    pos = q * (s.shape[0] - 1)
    lo = int(pos)
    if lo >= s.shape[0] - 1:
        return s[s.shape[0] - 1]
    frac = pos - lo
    return s[lo] + (s[lo + 1] - s[lo]) * frac


def _iqr_loop(x):
    s = np.sort(x)
    return _quantile_sorted(s, 0.75) - _quantile_sorted(s, 0.25)


def _zero_crossings_loop(x):
    """Strict sign changes; zero samples inherit the previous sign."""
    count = 0
    cur = 0
    for i in range(x.shape[0]):
        if x[i] > 0.0:
            s = 1
        elif x[i] < 0.0:
            s = -1
        else:
            s = cur
        if cur != 0 and s != cur:
            count += 1
        cur = s
    return count


def _std_loop(x):
    n = x.shape[0]
    mean = 0.0
    for i in range(n):
        mean += x[i]
    mean /= n
    acc = 0.0
    for i in range(n):
        d = x[i] - mean
        acc += d * d
    return math.sqrt(acc / n)


def _hjorth_loop(x):
    """(mobility, complexity); 0.0 where a variance ratio is undefined."""
    sx = _std_loop(x)
    dx = np.diff(x)
    sdx = _std_loop(dx)
    if sx <= 0.0:
        return 0.0, 0.0
    mobility = sdx / sx
    if sdx <= 0.0:
        return mobility, 0.0
    sddx = _std_loop(np.diff(dx))
    return mobility, (sddx / sdx) / mobility


def _petrosian_loop(x):
    n = x.shape[0]
    nd = _zero_crossings_loop(np.diff(x))
    log_n = math.log10(n)
    return log_n / (log_n + math.log10(n / (n + 0.4 * nd)))


def _higuchi_loop(x, kmax):
    """Higuchi curve-length slope of log L(k) against log(1/k)."""
    n = x.shape[0]
    log_lk = np.empty(kmax)
    for k in range(1, kmax + 1):
        total = 0.0
        counted = 0
        for m in range(k):
            n_inc = (n - 1 - m) // k
            if n_inc < 1:
                continue
            length = 0.0
            for i in range(1, n_inc + 1):
                length += abs(x[m + i * k] - x[m + (i - 1) * k])
            total += length * (n - 1) / (n_inc * k) / k
            counted += 1
        if counted == 0 or total <= 0.0:
            return 0.0
        log_lk[k - 1] = math.log(total / counted)
    sum_u = 0.0
    sum_v = 0.0
    for k in range(1, kmax + 1):
        sum_u += -math.log(k)
        sum_v += log_lk[k - 1]
    mean_u = sum_u / kmax
    mean_v = sum_v / kmax
    cov = 0.0
    var_u = 0.0
    for k in range(1, kmax + 1):
        du = -math.log(k) - mean_u
        cov += du * (log_lk[k - 1] - mean_v)
        var_u += du * du
    return cov / var_u


def _permutation_entropy_loop(x, order, delay):
    """Normalized ordinal-pattern entropy; ties broken by index order."""
    n = x.shape[0]
    n_vec = n - (order - 1) * delay
    if n_vec < 1:
        return 0.0
    counts = np.zeros(order**order, dtype=np.int64)
    for start in range(n_vec):
        code = 0
        base = 1
        for j in range(order):
            vj = x[start + j * delay]
            rank = 0
            for i in range(order):
                if i == j:
                    continue
                vi = x[start + i * delay]
                if vi < vj or (vi == vj and i < j):
                    rank += 1
            code += rank * base
            base *= order
        counts[code] += 1
    entropy = 0.0
    for c in counts:
        if c > 0:
            p = c / n_vec
            entropy -= p * math.log2(p)
    n_patterns = 1
    for j in range(2, order + 1):
        n_patterns *= j
    return entropy / math.log2(n_patterns)


def _binned_entropy_loop(x, n_bins):
    """Shannon entropy (natural log) of an equidistant-bin histogram."""
    n = x.shape[0]
    lo = x[0]
    hi = x[0]
    for i in range(n):
        if x[i] < lo:
            lo = x[i]
        if x[i] > hi:
            hi = x[i]
    span = hi - lo
    if span <= 0.0:
        return 0.0
    counts = np.zeros(n_bins, dtype=np.int64)
    for i in range(n):
        idx = int((x[i] - lo) * n_bins / span)
        if idx >= n_bins:
            idx = n_bins - 1
        counts[idx] += 1
    entropy = 0.0
    for c in counts:
        if c > 0:
            p = c / n
            entropy -= p * math.log(p)
    return entropy


# ---------------------------------------------------------------------------
# Vectorized numpy fallback
# ---------------------------------------------------------------------------


def _moments_numpy(x):
    d = x - x.mean()
    m2 = np.mean(d * d)
    if m2 <= 0.0:
        return 0.0, 0.0, 0.0
    m3 = np.mean(d**3)
    m4 = np.mean(d**4)
    return float(np.sqrt(m2)), float(m3 / m2**1.5), float(m4 / (m2 * m2) - 3.0)


def _iqr_numpy(x):
    q25, q75 = np.quantile(x, (0.25, 0.75))
    return float(q75 - q25)


def _signs_with_inherit(x):
    s = np.sign(x)
    idx = np.arange(len(s))
    idx[s == 0] = 0
    np.maximum.accumulate(idx, out=idx)
    return s[idx]


def _zero_crossings_numpy(x):
    s = _signs_with_inherit(np.asarray(x))
    s = s[s != 0]
    if len(s) < 2:
        return 0
    return int(np.count_nonzero(s[1:] != s[:-1]))


def _hjorth_numpy(x):
    sx = float(np.std(x))
    dx = np.diff(x)
    sdx = float(np.std(dx))
    if sx <= 0.0:
        return 0.0, 0.0
    mobility = sdx / sx
    if sdx <= 0.0:
        return mobility, 0.0
    sddx = float(np.std(np.diff(dx)))
    return mobility, (sddx / sdx) / mobility


def _petrosian_numpy(x):
    n = len(x)
    nd = _zero_crossings_numpy(np.diff(x))
    log_n = math.log10(n)
    return log_n / (log_n + math.log10(n / (n + 0.4 * nd)))


def _higuchi_numpy(x, kmax):
    n = len(x)
    log_lk = np.empty(kmax)
    for k in range(1, kmax + 1):
        lengths = []
        for m in range(k):
            n_inc = (n - 1 - m) // k
            if n_inc < 1:
                continue
            strided = x[m : m + n_inc * k + 1 : k]
            length = float(np.abs(np.diff(strided)).sum())
            lengths.append(length * (n - 1) / (n_inc * k) / k)
        if not lengths or sum(lengths) <= 0.0:
            return 0.0
        log_lk[k - 1] = math.log(sum(lengths) / len(lengths))
    u = -np.log(np.arange(1, kmax + 1))
    du = u - u.mean()
    return float(np.dot(du, log_lk - log_lk.mean()) / np.dot(du, du))


def _permutation_entropy_numpy(x, order, delay):
    n_vec = len(x) - (order - 1) * delay
    if n_vec < 1:
        return 0.0
    emb = np.lib.stride_tricks.sliding_window_view(x, (order - 1) * delay + 1)[:, ::delay]
    ranks = np.argsort(np.argsort(emb, axis=1, kind="stable"), axis=1, kind="stable")
    codes = ranks @ (order ** np.arange(order))
    counts = np.bincount(codes)
    p = counts[counts > 0] / n_vec
    entropy = float(-(p * np.log2(p)).sum())
    return entropy / math.log2(math.factorial(order))


def _binned_entropy_numpy(x, n_bins):
    lo = float(np.min(x))
    hi = float(np.max(x))
    span = hi - lo
    if span <= 0.0:
        return 0.0
    idx = np.minimum(((x - lo) * n_bins / span).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    p = counts[counts > 0] / len(x)
    return float(-(p * np.log(p)).sum())


NUMPY_BACKEND = {
    "moments": _moments_numpy,
    "iqr": _iqr_numpy,
    "zero_crossings": _zero_crossings_numpy,
    "hjorth": _hjorth_numpy,
    "petrosian_fd": _petrosian_numpy,
    "higuchi_fd": _higuchi_numpy,
    "permutation_entropy": _permutation_entropy_numpy,
    "binned_entropy": _binned_entropy_numpy,
}

_LOOP_SOURCES = {
    "moments": _moments_loop,
    "iqr": _iqr_loop,
    "zero_crossings": _zero_crossings_loop,
    "hjorth": _hjorth_loop,
    "petrosian_fd": _petrosian_loop,
    "higuchi_fd": _higuchi_loop,
    "permutation_entropy": _permutation_entropy_loop,
    "binned_entropy": _binned_entropy_loop,
}

_numba_cache: dict | None = None


def numba_backend() -> dict | None:
    """Compile (once) and return the numba kernel set, or None if unavailable."""
    global _numba_cache, _quantile_sorted, _std_loop, _zero_crossings_loop
    if _numba_cache is not None:
        return _numba_cache
    try:
        from numba import njit
    except ImportError:
        return None
    jit = njit(cache=True, nogil=True)
    # helpers must resolve to jitted versions before their callers compile
    _quantile_sorted = jit(_quantile_sorted)
    _std_loop = jit(_std_loop)
    _zero_crossings_loop = jit(_zero_crossings_loop)
    compiled = {
        name: (_zero_crossings_loop if name == "zero_crossings" else jit(fn))
        for name, fn in _LOOP_SOURCES.items()
    }
    _numba_cache = compiled
    return compiled


def _select_backend() -> dict:
    if numba_disabled_by_env():
        return NUMPY_BACKEND
    backend = numba_backend()
    return backend if backend is not None else NUMPY_BACKEND


ACTIVE_BACKEND = _select_backend()
USING_NUMBA = ACTIVE_BACKEND is not NUMPY_BACKEND

moments = ACTIVE_BACKEND["moments"]
iqr = ACTIVE_BACKEND["iqr"]
zero_crossings = ACTIVE_BACKEND["zero_crossings"]
hjorth = ACTIVE_BACKEND["hjorth"]
petrosian_fd = ACTIVE_BACKEND["petrosian_fd"]
higuchi_fd = ACTIVE_BACKEND["higuchi_fd"]
permutation_entropy = ACTIVE_BACKEND["permutation_entropy"]
binned_entropy = ACTIVE_BACKEND["binned_entropy"]
