import io
import itertools
import xml.etree.ElementTree as ET

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uwbnet import netgraph
from uwbnet.community import Partition
from uwbnet.netgraph import WeightedGraph, build_network


def graph(edges, nodes=()):
    edges = list(edges)
    nodes = set(nodes) | {n for e in edges for n in e}
    return WeightedGraph(sorted(nodes), {tuple(e): 1 for e in edges})


def test_prune_boundaries():
    g = build_network({("A", "B"): 59, ("A", "C"): 60, ("B", "C"): 0, ("C", "D"): 3600}, ["A", "B", "C", "D", "E"])
    assert set(g.edges) == {("A", "C"), ("C", "D")}
    assert g.nodes == ["A", "B", "C", "D", "E"]
    assert g.edges[("A", "C")] == 60


def test_min_weight_zero_drops_zero_pairs():
    g = build_network({("A", "B"): 0, ("A", "C"): 1}, [], min_weight=0)
    assert list(g.edges) == [("A", "C")]


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(st.sampled_from(list(itertools.combinations("ABCDE", 2))), st.integers(0, 200)),
       st.integers(0, 200), st.integers(0, 200))
def test_min_weight_nesting(totals, m1, m2):
    lo, hi = sorted((m1, m2))
    assert set(build_network(totals, "ABCDE", hi).edges) <= set(build_network(totals, "ABCDE", lo).edges)


def test_graph_validation():
    with pytest.raises(ValueError):
        WeightedGraph(["A"], {("A", "B"): 1})
    with pytest.raises(ValueError):
        WeightedGraph(["A", "B"], {("A", "B"): 0})
    g = WeightedGraph(["B", "A"], {("B", "A"): 4})
    assert g.nodes == ["A", "B"] and g.edges == {("A", "B"): 4}


def test_k4():
    m = netgraph.metrics(graph(itertools.combinations("abcd", 2)))
    assert m.avg_clustering == 1.0 and m.avg_degree == 3.0 and m.avg_shortest_path == 1.0
    assert m.assortativity is None


def test_path3():
    m = netgraph.metrics(graph([("a", "b"), ("b", "c")]))
    assert m.avg_degree == pytest.approx(4 / 3)
    assert m.avg_clustering == 0.0
    assert m.avg_shortest_path == pytest.approx(4 / 3)


def test_star_assortativity():
    m = netgraph.metrics(graph([("h", "a"), ("h", "b"), ("h", "c")]))
    assert abs(m.assortativity - -1.0) <= 1e-12


def test_undefined_path_and_empty():
    m = netgraph.metrics(WeightedGraph(["a", "b"]))
    assert m.avg_shortest_path is None and m.assortativity is None and m.avg_degree == 0.0
    m = netgraph.metrics(WeightedGraph([]))
    assert m.avg_clustering == 0.0 and m.avg_degree == 0.0


def test_largest_component_tie_goes_to_smallest_node():
    g = graph([("c", "d"), ("a", "b")], nodes=["e"])
    assert netgraph.largest_component(g) == ["a", "b"]


# -- brute-force oracle ------------------------------------------------------

def brute_metrics(nodes, edges):
    n = len(nodes)
    idx = {v: i for i, v in enumerate(nodes)}
    A = np.zeros((n, n), dtype=int)
    for a, b in edges:
        A[idx[a], idx[b]] = A[idx[b], idx[a]] = 1
    deg = A.sum(axis=1)
    pairs = [(deg[i], deg[j]) for i in range(n) for j in range(n) if A[i, j]]
    if pairs and np.std([p[0] for p in pairs]) > 0:
        x = np.array(pairs, dtype=float)
        assort = float(np.corrcoef(x[:, 0], x[:, 1])[0, 1])
    else:
        assort = None
    cc = []
    for i in range(n):
        nb = np.flatnonzero(A[i])
        k = len(nb)
        if k < 2:
            cc.append(0.0)
            continue
        tri = sum(A[u, v] for u, v in itertools.combinations(nb, 2))
        cc.append(tri / (k * (k - 1) / 2))
    # Floyd-Warshall hop distances
    D = np.where(A == 1, 1.0, np.inf)
    np.fill_diagonal(D, 0.0)
    for k in range(n):
        D = np.minimum(D, D[:, [k]] + D[[k], :])
    comps = {}
    for i in range(n):
        key = tuple(np.flatnonzero(np.isfinite(D[i])))
        comps[key] = True
    best = max(comps, key=lambda c: (len(c), -c[0])) if comps else ()
    if len(best) < 2:
        path = None
    else:
        sub = D[np.ix_(best, best)]
        path = sub.sum() / (len(best) * (len(best) - 1))
    return assort, float(np.mean(cc)) if n else 0.0, 2 * len(edges) / n if n else 0.0, path


ATLAS = [g for g in nx.graph_atlas_g() if g.number_of_nodes() <= 6]


@pytest.mark.parametrize("chunk", range(8))
def test_metrics_match_bruteforce_atlas(chunk):
    for g in ATLAS[chunk::8]:
        nodes = [f"n{i}" for i in g.nodes]
        edges = [(f"n{a}", f"n{b}") for a, b in g.edges]
        wg = WeightedGraph(nodes, {e: 1 for e in edges})
        got = netgraph.metrics(wg)
        assort, cc, deg, path = brute_metrics(wg.nodes, edges)
        assert got.avg_degree == deg
        assert got.avg_clustering == pytest.approx(cc, abs=1e-12)
        if assort is None:
            assert got.assortativity is None
        else:
            assert got.assortativity == pytest.approx(assort, abs=1e-9)
            assert -1.0 - 1e-12 <= got.assortativity <= 1.0 + 1e-12
        assert (got.avg_shortest_path is None) == (path is None)
        if path is not None:
            assert got.avg_shortest_path == pytest.approx(path, abs=1e-12)


def test_atlas_size():
    # every non-isomorphic graph on 0..6 nodes: 1+1+2+4+11+34+156
    assert len(ATLAS) == 209


def test_metrics_table_roundtrip():
    rows = [(0.75, netgraph.GraphMetrics(None, 0.5, 2.0, None)), (1.0, netgraph.GraphMetrics(-1.0, 0.0, 1.5, 1.25))]
    buf = io.StringIO()
    netgraph.write_metrics_table(rows, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "threshold,assortativity,avg_clustering,avg_degree,avg_path"
    assert lines[1] == "0.75,,0.5,2.0,"
    assert netgraph.read_metrics_table(io.StringIO(buf.getvalue())) == rows


# -- export ------------------------------------------------------------------

def test_graphml_two_nodes():
    g = WeightedGraph(["P1", "P2"], {("P1", "P2"): 75})
    doc = netgraph.export_graph(g, format="graphml")
    root = ET.fromstring(doc)
    ns = {"g": netgraph.GRAPHML_NS}
    assert len(root.findall(".//g:node", ns)) == 2
    edges = root.findall(".//g:edge", ns)
    assert len(edges) == 1
    assert edges[0].find("g:data", ns).text == "75"
    parsed = nx.read_graphml(io.BytesIO(doc.encode()))
    assert parsed["P1"]["P2"]["weight"] == 75


def test_graphml_with_partition_roundtrip():
    g = WeightedGraph(["a", "b", "c"], {("a", "b"): 3, ("b", "c"): 9}, {"threshold": 1.0, "window": 2})
    part = Partition({"a": 0, "b": 0, "c": 1})
    doc = netgraph.to_graphml(g, part)
    parsed = nx.read_graphml(io.BytesIO(doc.encode()))
    assert all("community" in d for _, d in parsed.nodes(data=True))
    assert parsed.graph["threshold"] == "1.0"
    back, comm = netgraph.read_graphml(doc)
    assert back.nodes == g.nodes and back.edges == g.edges
    assert comm == {"a": 0, "b": 0, "c": 1}
    assert back.meta == {"threshold": "1.0", "window": "2"}


def test_dot_export():
    g = WeightedGraph(["a", "b", "c"], {("a", "b"): 3})
    doc = netgraph.to_dot(g, Partition({"a": 0, "b": 0, "c": 1}))
    lines = doc.splitlines()
    assert lines[0] == "graph contacts {" and lines[-1] == "}"
    assert '  "a" -- "b" [weight=3];' in lines
    assert '  "c" [community=1];' in lines
    assert doc.count("{") == doc.count("}") == 1


def test_edge_csv_roundtrip():
    g = WeightedGraph(["a", "b", "c", "d"], {("a", "b"): 3, ("c", "d"): 61})
    text = netgraph.export_graph(g, format="edge_csv")
    assert text.splitlines()[0] == "a,b,weight"
    back = netgraph.read_edge_csv(text, nodes=g.nodes, min_weight=0)
    assert back.edges == g.edges and back.nodes == g.nodes


def test_unknown_format():
    with pytest.raises(ValueError):
        netgraph.export_graph(WeightedGraph([]), format="gml")
