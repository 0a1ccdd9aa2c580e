"""Two-level map equation, a Louvain-style minimiser for it, and ARI.

Flow is the undirected instantiation: a node is visited in proportion to
its strength and every edge direction carries ``w / 2W``. Codelengths are
in bits.
"""
from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import _accel
from .errors import DomainMismatch, EmptyGraph

# a move must shorten the code by more than this to be accepted
MOVE_EPS = 1e-10
# codelengths closer than this are treated as equal when picking a winner
TIE_EPS = 1e-12


@dataclass(frozen=True)
class Partition:
    """Module assignment with labels normalised to ``0..k-1``.

    Modules are numbered in order of their smallest member id.
    """

    assignment: dict

    def __init__(self, assignment):
        object.__setattr__(self, "assignment", _normalize(assignment))

    @classmethod
    def from_modules(cls, modules):
        return cls({n: i for i, mod in enumerate(modules) for n in mod})

    @classmethod
    def singletons(cls, nodes):
        return cls({n: i for i, n in enumerate(sorted(nodes))})

    @classmethod
    def one_module(cls, nodes):
        return cls(dict.fromkeys(nodes, 0))

    @property
    def nodes(self):
        return sorted(self.assignment)

    @property
    def num_modules(self):
        return len(set(self.assignment.values()))

    def modules(self):
        mods = [[] for _ in range(self.num_modules)]
        for n in sorted(self.assignment):
            mods[self.assignment[n]].append(n)
        return mods

    def sizes(self):
        return [len(m) for m in self.modules()]

    def __getitem__(self, node):
        return self.assignment[node]

    def __contains__(self, node):
        return node in self.assignment

    def restrict(self, nodes):
        keep = set(nodes)
        return Partition({n: c for n, c in self.assignment.items() if n in keep})

    def key(self):
        return tuple(self.assignment[n] for n in sorted(self.assignment))


def _normalize(assignment):
    groups = {}
    for n in sorted(assignment):
        groups.setdefault(assignment[n], []).append(n)
    order = sorted(groups.values(), key=lambda members: members[0])
    out = {}
    for i, members in enumerate(order):
        for n in members:
            out[n] = i
    return dict(sorted(out.items()))


def write_partition(part, stream):
    stream.write("tag,community\n")
    for n in sorted(part.assignment):
        stream.write(f"{n},{part.assignment[n]}\n")


def read_partition(stream):
    reader = csv.reader(stream)
    next(reader, None)
    return Partition({r[0]: int(r[1]) for r in reader if r})


# -- map equation ------------------------------------------------------------

def plogp(x):
    return x * math.log2(x) if x > 0 else 0.0


@dataclass
class CodelengthTerms:
    total_weight: float
    node_visit: dict
    module_exit: list
    module_flow: list
    codelength: float

    @property
    def index_codelength(self):
        q = sum(self.module_exit)
        return plogp(q) - sum(plogp(x) for x in self.module_exit)

    @property
    def module_codelength(self):
        return self.codelength - self.index_codelength


def codelength_terms(g, part):
    W = g.total_weight
    if not g.edges or W <= 0:
        raise EmptyGraph("map equation needs at least one weighted edge")
    strength = g.strengths()
    active = [n for n in g.nodes if strength[n] > 0]
    missing = [n for n in active if n not in part]
    if missing:
        raise DomainMismatch(f"partition misses nodes {missing}")
    labels = sorted({part[n] for n in active})
    index = {c: i for i, c in enumerate(labels)}
    p = {n: strength[n] / (2.0 * W) for n in active}
    exit_w = [0.0] * len(labels)
    flow = [0.0] * len(labels)
    for n in active:
        flow[index[part[n]]] += p[n]
    for (a, b), w in g.edges.items():
        ia, ib = index[part[a]], index[part[b]]
        if ia != ib:
            exit_w[ia] += w
            exit_w[ib] += w
    q = [w / (2.0 * W) for w in exit_w]
    L = (
        plogp(sum(q))
        - 2.0 * sum(plogp(x) for x in q)
        - sum(plogp(x) for x in p.values())
        + sum(plogp(qi + pi) for qi, pi in zip(q, flow))
    )
    return CodelengthTerms(W, p, q, flow, max(L, 0.0))


def map_equation(g, part):
    """Two-level codelength of ``part`` on ``g`` in bits."""
    return codelength_terms(g, part).codelength


def write_codelength_report(g, part, stream):
    L = map_equation(g, part) if g.edges else 0.0
    report = {"L": L, "num_modules": part.num_modules, "module_sizes": part.sizes()}
    stream.write(json.dumps(report, indent=2) + "\n")


# -- search kernel -----------------------------------------------------------

@_accel.jitable
def _xlogx(x):
    if x > 0.0:
        return x * math.log2(x)
    return 0.0


def _sweep_loops(F, p, out, module, mod_p, mod_q, mod_n, order, minid, eps, tie):
    """One pass of greedy single-node moves in the given order.

    Returns the number of accepted moves; module arrays are updated in place.
    """
    n = F.shape[0]
    moves = 0
    w_to = np.zeros(n)
    mod_min = np.zeros(n, dtype=np.int64)
    big = np.iinfo(np.int64).max
    for idx in range(n):
        a = order[idx]
        cur = module[a]
        for m in range(n):
            w_to[m] = 0.0
            mod_min[m] = big
        for j in range(n):
            if j == a:
                continue
            mj = module[j]
            w_to[mj] += F[a, j]
            if minid[j] < mod_min[mj]:
                mod_min[mj] = minid[j]
        q_tot = 0.0
        for m in range(n):
            q_tot += mod_q[m]
        qa_old = mod_q[cur]
        pa_old = mod_p[cur]
        qa_new = qa_old - out[a] + 2.0 * w_to[cur]
        pa_new = pa_old - p[a]
        if mod_n[cur] == 1:
            qa_new = 0.0
            pa_new = 0.0
        base_a = -2.0 * (_xlogx(qa_new) - _xlogx(qa_old)) + _xlogx(qa_new + pa_new) - _xlogx(qa_old + pa_old)
        best = 0.0
        best_m = -1
        best_min = big
        empty = -1
        if mod_n[cur] > 1:
            for m in range(n):
                if mod_n[m] == 0:
                    empty = m
                    break
        for m in range(n):
            if m == cur:
                continue
            if m == empty:
                cand_min = minid[a]
            elif mod_n[m] > 0 and w_to[m] > 0.0:
                cand_min = mod_min[m]
            else:
                continue
            qb_old = mod_q[m]
            pb_old = mod_p[m]
            qb_new = qb_old + out[a] - 2.0 * w_to[m]
            pb_new = pb_old + p[a]
            q_new = q_tot - qa_old - qb_old + qa_new + qb_new
            delta = (
                _xlogx(q_new) - _xlogx(q_tot)
                + base_a
                - 2.0 * (_xlogx(qb_new) - _xlogx(qb_old))
                + _xlogx(qb_new + pb_new) - _xlogx(qb_old + pb_old)
            )
            if best_m < 0 or delta < best - tie or (delta <= best + tie and cand_min < best_min):
                best = delta
                best_m = m
                best_min = cand_min
        if best_m >= 0 and best < -eps:
            qb_new = mod_q[best_m] + out[a] - 2.0 * w_to[best_m]
            mod_q[cur] = qa_new
            mod_p[cur] = pa_new
            mod_n[cur] -= 1
            mod_q[best_m] = qb_new
            mod_p[best_m] += p[a]
            mod_n[best_m] += 1
            module[a] = best_m
            moves += 1
    return moves


_sweep_numba = _accel.njit(_sweep_loops)

# the fallback runs _sweep_loops un-jitted


class _FlowGraph:
    """Dense flow representation of the non-isolated part of a graph."""

    def __init__(self, g):
        strength = g.strengths()
        self.nodes = [n for n in g.nodes if strength[n] > 0]
        index = {n: i for i, n in enumerate(self.nodes)}
        n = len(self.nodes)
        two_w = 2.0 * g.total_weight
        F = np.zeros((n, n))
        for (a, b), w in g.edges.items():
            F[index[a], index[b]] = w / two_w
            F[index[b], index[a]] = w / two_w
        self.F = F
        self.p = F.sum(axis=1)
        # node-level entropy term, fixed across all partitions
        self.node_term = sum(plogp(x) for x in self.p)

    def codelength(self, module):
        """Codelength of a node-level module array (same value as
        :func:`map_equation`, computed on the dense representation)."""
        k = module.max() + 1
        same = module[:, None] == module[None, :]
        exit_w = np.bincount(module, weights=(self.F * ~same).sum(axis=1), minlength=k)
        flow = np.bincount(module, weights=self.p, minlength=k)
        return (
            plogp(exit_w.sum())
            - 2.0 * sum(plogp(x) for x in exit_w)
            - self.node_term
            + sum(plogp(q + f) for q, f in zip(exit_w, flow))
        )


def _relabel(module):
    _, inv = np.unique(module, return_inverse=True)
    return inv.astype(np.int64)


def _local_moves(F, p, minid, module, rng, sweep, check=None):
    """Sweep single-node moves in random order until a sweep moves nothing.

    ``check`` (node-level module array -> codelength) enables the monotone
    descent assertion after every productive sweep.
    """
    n = len(p)
    out = p - np.diag(F)
    mod_p = np.zeros(n)
    mod_q = np.zeros(n)
    mod_n = np.zeros(n, dtype=np.int64)
    np.add.at(mod_p, module, p)
    np.add.at(mod_n, module, 1)
    same = module[:, None] == module[None, :]
    np.add.at(mod_q, module, (F * ~same).sum(axis=1))
    total = 0
    before = check(module) if check else None
    while True:
        order = rng.permutation(n).astype(np.int64)
        moved = sweep(F, p, out, module, mod_p, mod_q, mod_n, order, minid, MOVE_EPS, TIE_EPS)
        if moved == 0:
            break
        total += moved
        if check:
            after = check(module)
            assert after < before, "greedy sweep failed to shorten the code"
            before = after
    return module, total


def _optimize(fg, init, rng, sweep, check_descent):
    """Louvain-style levels starting from a node-level assignment ``init``."""
    n = len(fg.p)
    node_module = _relabel(init)
    F, p = fg.F, fg.p
    minid = np.arange(n, dtype=np.int64)
    module = node_module.copy()
    members = np.arange(n)  # node -> current super-node
    level = 0
    while True:
        if check_descent:
            def check(mod, members=members):
                return fg.codelength(_relabel(mod[members]))
        else:
            check = None
        module, moved = _local_moves(F, p, minid, module, rng, sweep, check)
        module = _relabel(module)
        k = module.max() + 1
        node_module = module[members]
        if level > 0 and moved == 0:
            break
        if k == len(p):
            if moved == 0:
                break
        # aggregate modules into super-nodes
        S = np.zeros((len(p), k))
        S[np.arange(len(p)), module] = 1.0
        F = S.T @ F @ S
        p = F.sum(axis=1)
        minid = np.array([minid[module == c].min() for c in range(k)], dtype=np.int64)
        members = node_module
        module = np.arange(k, dtype=np.int64)
        level += 1
    return node_module


def _search(fg, rng, sweep, check_descent):
    n = len(fg.p)
    module = np.arange(n, dtype=np.int64)
    best = fg.codelength(module)
    while True:
        cand = _optimize(fg, module, rng, sweep, check_descent)
        L = fg.codelength(cand)
        if L < best - MOVE_EPS:
            module, best = cand, L
        else:
            break
    return module, best


def detect_communities(g, seed=0, trials=10, use_numba=None, check_descent=False):
    """Low-codelength partition of ``g`` by repeated greedy node moves and
    module aggregation; best of ``trials`` seeded restarts.

    Isolated nodes come back as singleton modules. Ties between restarts go
    to the lexicographically smallest normalised partition.
    """
    isolated = [n for n, s in g.strengths().items() if s == 0]
    if not g.edges:
        return Partition.singletons(g.nodes)
    fg = _FlowGraph(g)
    sweep = _accel.pick(_sweep_numba, _sweep_loops, use_numba)
    n = len(fg.nodes)
    candidates = [np.zeros(n, dtype=np.int64), np.arange(n, dtype=np.int64)]
    for trial in range(max(int(trials), 1)):
        rng = np.random.default_rng([int(seed), trial])
        module, _ = _search(fg, rng, sweep, check_descent)
        candidates.append(module)
    best_key = None
    best = None
    for module in candidates:
        L = fg.codelength(module)
        part = dict(zip(fg.nodes, module.tolist()))
        offset = len(fg.nodes)
        for i, node in enumerate(isolated):
            part[node] = offset + i
        part = Partition(part)
        key = (L, part.key())
        if best is None or L < best_key[0] - TIE_EPS or (L <= best_key[0] + TIE_EPS and part.key() < best_key[1]):
            best, best_key = part, key
    return best


# -- partition comparison ----------------------------------------------------

def _comb2(x):
    return x * (x - 1) // 2


def adjusted_rand_index(a, b):
    """Adjusted Rand Index of two partitions over the same node set."""
    a = getattr(a, "assignment", a)
    b = getattr(b, "assignment", b)
    if set(a) != set(b):
        raise DomainMismatch("partitions cover different node sets")
    n = len(a)
    if n < 2:
        return 1.0
    table = Counter((a[x], b[x]) for x in a)
    sum_ij = sum(_comb2(c) for c in table.values())
    sum_a = sum(_comb2(c) for c in Counter(a.values()).values())
    sum_b = sum(_comb2(c) for c in Counter(b.values()).values())
    total = _comb2(n)
    expected = sum_a * sum_b / total
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        return 1.0
    return (sum_ij - expected) / (max_index - expected)
