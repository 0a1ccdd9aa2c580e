"""Independent reference computations used as test oracles."""
import itertools
import math

import numpy as np

from uwbnet.netgraph import WeightedGraph


def entropy(probs):
    total = sum(probs)
    return -sum(x / total * math.log2(x / total) for x in probs if x > 0) if total > 0 else 0.0


def map_equation_entropy_form(nodes, edges, modules):
    """L = q H(Q) + sum_i p_i H(P^i), evaluated literally."""
    W = sum(edges.values())
    strength = dict.fromkeys(nodes, 0.0)
    for (a, b), w in edges.items():
        strength[a] += w
        strength[b] += w
    p = {n: strength[n] / (2 * W) for n in nodes}
    module_of = {n: i for i, mod in enumerate(modules) for n in mod}
    q = [0.0] * len(modules)
    for (a, b), w in edges.items():
        if module_of[a] != module_of[b]:
            q[module_of[a]] += w / (2 * W)
            q[module_of[b]] += w / (2 * W)
    q_total = sum(q)
    L = q_total * entropy(q) if q_total > 0 else 0.0
    for i, mod in enumerate(modules):
        parts = [q[i]] + [p[n] for n in mod]
        L += sum(parts) * entropy(parts)
    return L


def set_partitions(items):
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for sub in set_partitions(rest):
        yield [[first]] + sub
        for i in range(len(sub)):
            yield sub[:i] + [[first] + sub[i]] + sub[i + 1:]


def exhaustive_minimum(g):
    """(L*, modules*) over every partition of the non-isolated nodes."""
    active = sorted({n for e in g.edges for n in e})
    best = (math.inf, None)
    for modules in set_partitions(active):
        L = map_equation_entropy_form(active, g.edges, modules)
        if L < best[0]:
            best = (L, modules)
    return best


def random_connected_graph(rng, n_min=3, n_max=8):
    n = int(rng.integers(n_min, n_max + 1))
    nodes = [f"v{i}" for i in range(n)]
    edges = {}
    perm = rng.permutation(n)
    # random spanning tree, then extra edges
    for k in range(1, n):
        a, b = nodes[perm[k]], nodes[perm[rng.integers(0, k)]]
        edges[tuple(sorted((a, b)))] = int(rng.integers(1, 10))
    for a, b in itertools.combinations(nodes, 2):
        if (a, b) not in edges and rng.uniform() < 0.3:
            edges[(a, b)] = int(rng.integers(1, 10))
    return WeightedGraph(nodes, edges)


def two_cliques(k1, k2, bridge=1, weight=1, prefix=("a", "b")):
    left = [f"{prefix[0]}{i}" for i in range(k1)]
    right = [f"{prefix[1]}{i}" for i in range(k2)]
    edges = {e: weight for e in itertools.combinations(left, 2)}
    edges.update({e: weight for e in itertools.combinations(right, 2)})
    edges[tuple(sorted((left[0], right[0])))] = bridge
    return WeightedGraph(left + right, edges), [left, right]


def ari_from_counts(a, b):
    """ARI straight from the pair-counting definition over all node pairs."""
    nodes = sorted(a)
    same_a = np.array([a[x] == a[y] for x, y in itertools.combinations(nodes, 2)])
    same_b = np.array([b[x] == b[y] for x, y in itertools.combinations(nodes, 2)])
    n11 = int(np.sum(same_a & same_b))
    total = len(same_a)
    sa, sb = int(same_a.sum()), int(same_b.sum())
    expected = sa * sb / total
    maximum = (sa + sb) / 2
    if maximum == expected:
        return 1.0
    return (n11 - expected) / (maximum - expected)
