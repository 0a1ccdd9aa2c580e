"""Pairwise distances, thresholded contact counts and distance histograms."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import _accel
from .errors import NoOverlap

DEFAULT_THRESHOLDS = (0.75, 1.0, 1.25, 1.5)


def pair_key(a, b):
    """Canonical (lexicographically ordered) pair of distinct tags."""
    if a == b:
        raise ValueError(f"pair of identical tags {a!r}")
    return (a, b) if a < b else (b, a)


def all_pairs(tags):
    return list(combinations(sorted(tags), 2))


@dataclass
class ContactSeries:
    pair: tuple
    start: int
    d: np.ndarray  # NaN = Unavailable

    def __len__(self):
        return len(self.d)

    @property
    def available(self):
        return ~np.isnan(self.d)


def _dist(a, b):
    acc = np.zeros(len(a))
    for k in range(a.shape[1]):
        diff = a[:, k] - b[:, k]
        acc += diff * diff
    return np.sqrt(acc)


def pair_distances(ta, tb):
    """Per-second Euclidean distance over the overlap of two trajectories."""
    if ta.tag > tb.tag:
        ta, tb = tb, ta
    lo = max(ta.t0, tb.t0)
    hi = min(ta.end, tb.end)
    if lo >= hi:
        raise NoOverlap(f"{ta.tag} and {tb.tag} share no seconds")
    a = ta.xy[lo - ta.t0:hi - ta.t0]
    b = tb.xy[lo - tb.t0:hi - tb.t0]
    return ContactSeries(pair_key(ta.tag, tb.tag), lo, _dist(a, b))


def contact_count(series, th):
    """Seconds with distance <= ``th``; Unavailable seconds never count."""
    if not th > 0:
        raise ValueError("threshold must be positive")
    return int(np.count_nonzero(series.d <= th))


def _bin_edge(k, width):
    return round(k * width, 10)


def histogram_counts(distances, bin_width=0.25):
    d = np.asarray(distances, dtype=float)
    d = d[~np.isnan(d)]
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    if len(d) == 0:
        return {}
    counts = np.bincount(np.floor(d / bin_width).astype(np.int64))
    return {_bin_edge(k, bin_width): int(c) for k, c in enumerate(counts) if c}


def distance_histogram(series, bin_width=0.25):
    """Pooled histogram ``{bin lower edge: count}`` of available distances.

    Accepts a single :class:`ContactSeries` or an iterable of them.
    """
    if isinstance(series, ContactSeries):
        series = [series]
    chunks = [s.d for s in series]
    return histogram_counts(np.concatenate(chunks) if chunks else [], bin_width)


def write_histogram(hist, stream):
    stream.write("bin_lower,count\n")
    for edge in sorted(hist):
        stream.write(f"{edge!r},{hist[edge]}\n")


def read_histogram(stream):
    reader = csv.reader(stream)
    next(reader, None)
    return {float(r[0]): int(r[1]) for r in reader if r}


def pair_series_export(series):
    """CSV ``second,distance`` text, Unavailable as an empty field."""
    buf = io.StringIO()
    buf.write("second,distance\n")
    for i, d in enumerate(series.d):
        buf.write(f"{series.start + i},{'' if math.isnan(d) else repr(float(d))}\n")
    return buf.getvalue()


def parse_pair_series(text, pair):
    rows = list(csv.reader(io.StringIO(text)))[1:]
    rows = [r for r in rows if r]
    if not rows:
        return ContactSeries(pair, 0, np.empty(0))
    secs = [int(r[0]) for r in rows]
    d = np.array([math.nan if r[1] == "" else float(r[1]) for r in rows])
    if secs != list(range(secs[0], secs[0] + len(secs))):
        raise ValueError("pair series seconds are not consecutive")
    return ContactSeries(pair, secs[0], d)


def write_pair_totals(totals, stream):
    stream.write("a,b,contact_seconds\n")
    for (a, b) in sorted(totals):
        stream.write(f"{a},{b},{totals[(a, b)]}\n")


def read_pair_totals(stream):
    reader = csv.reader(stream)
    next(reader, None)
    return {pair_key(r[0], r[1]): int(r[2]) for r in reader if r}


# -- bulk kernels ------------------------------------------------------------

def _distances_loops(pos, pairs):
    n_t, _, dims = pos.shape
    out = np.empty((len(pairs), n_t))
    for p in range(len(pairs)):
        i = pairs[p, 0]
        j = pairs[p, 1]
        for t in range(n_t):
            acc = 0.0
            for k in range(dims):
                diff = pos[t, i, k] - pos[t, j, k]
                acc += diff * diff
            out[p, t] = np.sqrt(acc)
    return out


def _distances_numpy(pos, pairs):
    a = pos[:, pairs[:, 0], :]
    b = pos[:, pairs[:, 1], :]
    acc = np.zeros(a.shape[:2])
    for k in range(pos.shape[2]):
        diff = a[:, :, k] - b[:, :, k]
        acc += diff * diff
    return np.ascontiguousarray(np.sqrt(acc).T)


def _counts_loops(dist, thresholds, bounds):
    n_w = len(bounds) - 1
    n_p = dist.shape[0]
    n_k = len(thresholds)
    out = np.zeros((n_w, n_p, n_k), dtype=np.int64)
    for w in range(n_w):
        for p in range(n_p):
            for t in range(bounds[w], bounds[w + 1]):
                d = dist[p, t]
                for k in range(n_k):
                    if d <= thresholds[k]:
                        out[w, p, k] += 1
    return out


def _counts_numpy(dist, thresholds, bounds):
    n_w = len(bounds) - 1
    out = np.zeros((n_w, dist.shape[0], len(thresholds)), dtype=np.int64)
    if dist.shape[1] == 0 or n_w == 0:
        return out
    for k, th in enumerate(thresholds):
        hits = (dist <= th).astype(np.int64)
        out[:, :, k] = np.add.reduceat(hits, bounds[:-1], axis=1).T
    return out


_distances_numba = _accel.njit(_distances_loops)
_counts_numba = _accel.njit(_counts_loops)


class ContactTable:
    """All pairwise distance series of a set of trajectories on one timeline.

    ``start``/``end`` bound the shared second grid. ``positions`` is
    ``(T, N, dims)`` with NaN for Missing; ``distances`` is ``(P, T)`` with
    one row per canonical pair in ``pairs``.
    """

    def __init__(self, trajs, start=None, end=None, use_numba=None):
        trajs = dict(sorted(trajs.items()))
        self.tags = list(trajs)
        if start is None:
            start = min((t.t0 for t in trajs.values()), default=0)
        if end is None:
            end = max((t.end for t in trajs.values()), default=start)
        self.start, self.end = int(start), int(end)
        dims = max((t.dims for t in trajs.values()), default=2)
        n_t = max(self.end - self.start, 0)
        pos = np.full((n_t, len(self.tags), dims), np.nan)
        for i, tr in enumerate(trajs.values()):
            lo = max(tr.t0, self.start)
            hi = min(tr.end, self.end)
            if lo < hi:
                pos[lo - self.start:hi - self.start, i, :tr.dims] = tr.xy[lo - tr.t0:hi - tr.t0]
        self.positions = pos
        self.present = ~np.isnan(pos).any(axis=2)
        index = {t: i for i, t in enumerate(self.tags)}
        self.pairs = all_pairs(self.tags)
        self._pair_idx = np.array([[index[a], index[b]] for a, b in self.pairs], dtype=np.int64).reshape(-1, 2)
        self._use_numba = use_numba
        kernel = _accel.pick(_distances_numba, _distances_numpy, use_numba)
        self.distances = kernel(np.ascontiguousarray(pos), self._pair_idx)

    @property
    def n_seconds(self):
        return self.end - self.start

    def series(self, pair):
        row = self.pairs.index(pair_key(*pair))
        return ContactSeries(self.pairs[row], self.start, self.distances[row].copy())

    def all_series(self):
        return [ContactSeries(p, self.start, self.distances[i]) for i, p in enumerate(self.pairs)]

    def window_counts(self, thresholds, bounds):
        """Contact seconds per window, pair and threshold: ``(W, P, K)``.

        ``bounds`` are absolute second boundaries ``[b0, b1, ..., bW]``.
        """
        rel = np.asarray(bounds, dtype=np.int64) - self.start
        if len(rel) and (rel[0] < 0 or rel[-1] > self.n_seconds or np.any(np.diff(rel) <= 0)):
            raise ValueError("window bounds must increase inside the table span")
        th = np.asarray(thresholds, dtype=float)
        if np.any(th <= 0):
            raise ValueError("thresholds must be positive")
        kernel = _accel.pick(_counts_numba, _counts_numpy, self._use_numba)
        return kernel(self.distances, th, rel)

    def totals(self, th):
        if self.n_seconds == 0:
            return {p: 0 for p in self.pairs}
        counts = self.window_counts([th], [self.start, self.end])[0, :, 0]
        return {p: int(c) for p, c in zip(self.pairs, counts)}

    def histogram(self, bin_width=0.25):
        return histogram_counts(self.distances.ravel(), bin_width)
