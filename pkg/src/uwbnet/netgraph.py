"""Weighted contact networks, the four network characteristics, and export."""
from __future__ import annotations

import csv
import io
import xml.etree.ElementTree as ET
from collections import deque
from dataclasses import dataclass, field

from .contact import pair_key

GRAPHML_NS = "http://graphml.graphdrawing.org/xmlns"


@dataclass
class WeightedGraph:
    """Undirected graph; ``edges`` maps canonical pairs to contact seconds."""

    nodes: list
    edges: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = sorted(set(self.nodes))
        known = set(self.nodes)
        clean = {}
        for (a, b), w in self.edges.items():
            if a not in known or b not in known:
                raise ValueError(f"edge {a}-{b} has an endpoint outside the node set")
            if not w > 0:
                raise ValueError(f"edge {a}-{b} has non-positive weight {w}")
            clean[pair_key(a, b)] = w
        self.edges = dict(sorted(clean.items()))

    def adjacency(self):
        adj = {n: {} for n in self.nodes}
        for (a, b), w in self.edges.items():
            adj[a][b] = w
            adj[b][a] = w
        return adj

    def degrees(self):
        deg = dict.fromkeys(self.nodes, 0)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    def strengths(self):
        s = dict.fromkeys(self.nodes, 0)
        for (a, b), w in self.edges.items():
            s[a] += w
            s[b] += w
        return s

    @property
    def total_weight(self):
        return sum(self.edges.values())


def build_network(pair_totals, nodes, min_weight=60):
    """Keep pairs with ``total >= min_weight`` (and ``total > 0``) as edges.

    Every node is retained, isolated or not.
    """
    if min_weight < 0:
        raise ValueError("min_weight must be >= 0")
    nodes = set(nodes)
    edges = {}
    for (a, b), total in pair_totals.items():
        if total > 0 and total >= min_weight:
            nodes.update((a, b))
            edges[pair_key(a, b)] = total
    return WeightedGraph(sorted(nodes), edges)


# -- metrics -----------------------------------------------------------------

@dataclass
class GraphMetrics:
    assortativity: float | None
    avg_clustering: float
    avg_degree: float
    avg_shortest_path: float | None


def degree_assortativity(g):
    """Pearson correlation of endpoint degrees over both edge orientations.

    Integer sums keep the star graph at exactly -1. None when undefined.
    """
    deg = g.degrees()
    xs = []
    for a, b in g.edges:
        xs.append((deg[a], deg[b]))
        xs.append((deg[b], deg[a]))
    m = len(xs)
    if m == 0:
        return None
    sx = sum(x for x, _ in xs)
    sxx = sum(x * x for x, _ in xs)
    sxy = sum(x * y for x, y in xs)
    var = m * sxx - sx * sx
    if var == 0:
        return None
    return (m * sxy - sx * sx) / var


def average_clustering(g):
    if not g.nodes:
        return 0.0
    adj = {n: set(nb) for n, nb in g.adjacency().items()}
    total = 0.0
    for n, nb in adj.items():
        k = len(nb)
        if k < 2:
            continue
        links = sum(len(adj[u] & nb) for u in nb) // 2
        total += 2.0 * links / (k * (k - 1))
    return total / len(g.nodes)


def components(g):
    adj = g.adjacency()
    seen = set()
    comps = []
    for start in g.nodes:
        if start in seen:
            continue
        comp = [start]
        seen.add(start)
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    comp.append(v)
                    queue.append(v)
        comps.append(sorted(comp))
    return comps


def largest_component(g):
    """Largest connected component; ties go to the one with the smallest node."""
    comps = components(g)
    if not comps:
        return []
    # components come out ordered by smallest member, and max keeps the first
    return max(comps, key=len)


def average_shortest_path(g):
    comp = largest_component(g)
    if len(comp) < 2:
        return None
    adj = g.adjacency()
    total = 0
    for src in comp:
        dist = {src: 0}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        total += sum(dist.values())
    n = len(comp)
    return total / (n * (n - 1))


def metrics(g):
    n = len(g.nodes)
    return GraphMetrics(
        assortativity=degree_assortativity(g),
        avg_clustering=average_clustering(g),
        avg_degree=2.0 * len(g.edges) / n if n else 0.0,
        avg_shortest_path=average_shortest_path(g),
    )


def write_metrics_table(rows, stream):
    """Rows of ``(threshold, GraphMetrics)`` as the threshold sweep CSV."""
    stream.write("threshold,assortativity,avg_clustering,avg_degree,avg_path\n")
    for th, m in rows:
        cells = [m.assortativity, m.avg_clustering, m.avg_degree, m.avg_shortest_path]
        stream.write(f"{th!r}," + ",".join("" if c is None else repr(float(c)) for c in cells) + "\n")


def read_metrics_table(stream):
    reader = csv.reader(stream)
    next(reader, None)
    out = []
    for r in reader:
        if not r:
            continue
        vals = [None if c == "" else float(c) for c in r[1:]]
        out.append((float(r[0]), GraphMetrics(*vals)))
    return out


# -- export ------------------------------------------------------------------

def _assignment(partition):
    if partition is None:
        return None
    return getattr(partition, "assignment", partition)


def _meta_text(v):
    return repr(v) if isinstance(v, float) else str(v)


def to_graphml(g, partition=None):
    assign = _assignment(partition)
    ET.register_namespace("", GRAPHML_NS)
    root = ET.Element("graphml", xmlns=GRAPHML_NS)
    ET.SubElement(root, "key", {"id": "weight", "for": "edge", "attr.name": "weight", "attr.type": "long"})
    if assign is not None:
        ET.SubElement(root, "key", {"id": "community", "for": "node", "attr.name": "community", "attr.type": "int"})
    for k in sorted(g.meta):
        ET.SubElement(root, "key", {"id": k, "for": "graph", "attr.name": k, "attr.type": "string"})
    graph = ET.SubElement(root, "graph", id="G", edgedefault="undirected")
    for k in sorted(g.meta):
        ET.SubElement(graph, "data", key=k).text = _meta_text(g.meta[k])
    for n in g.nodes:
        node = ET.SubElement(graph, "node", id=n)
        if assign is not None:
            ET.SubElement(node, "data", key="community").text = str(assign[n])
    for i, ((a, b), w) in enumerate(g.edges.items()):
        edge = ET.SubElement(graph, "edge", id=f"e{i}", source=a, target=b)
        ET.SubElement(edge, "data", key="weight").text = str(w)
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def _dot_id(s):
    return '"' + str(s).replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(g, partition=None):
    assign = _assignment(partition)
    lines = ["graph contacts {"]
    for k in sorted(g.meta):
        lines.append(f"  {k}={_dot_id(_meta_text(g.meta[k]))};")
    for n in g.nodes:
        attr = f" [community={assign[n]}]" if assign is not None else ""
        lines.append(f"  {_dot_id(n)}{attr};")
    for (a, b), w in g.edges.items():
        lines.append(f"  {_dot_id(a)} -- {_dot_id(b)} [weight={w}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_edge_csv(g, partition=None):
    buf = io.StringIO()
    buf.write("a,b,weight\n")
    for (a, b), w in g.edges.items():
        buf.write(f"{a},{b},{w}\n")
    return buf.getvalue()


def export_graph(g, partition=None, format="graphml"):
    writers = {"graphml": to_graphml, "dot": to_dot, "edge_csv": to_edge_csv}
    if format not in writers:
        raise ValueError(f"unknown graph format {format!r}")
    return writers[format](g, partition)


def read_edge_csv(text, nodes=(), min_weight=0):
    reader = csv.reader(io.StringIO(text))
    next(reader, None)
    totals = {pair_key(r[0], r[1]): int(r[2]) for r in reader if r}
    return build_network(totals, nodes, min_weight=min_weight)


def read_graphml(text):
    """Parse a document produced by :func:`to_graphml`.

    Returns ``(graph, communities or None)``; graph-level data lands in
    ``graph.meta`` as strings.
    """
    root = ET.fromstring(text)
    ns = {"g": GRAPHML_NS}
    keys = {k.get("id"): k.get("attr.name") for k in root.findall("g:key", ns)}
    graph = root.find("g:graph", ns)
    meta = {keys.get(d.get("key"), d.get("key")): d.text for d in graph.findall("g:data", ns)}
    nodes, communities = [], {}
    for node in graph.findall("g:node", ns):
        nid = node.get("id")
        nodes.append(nid)
        for d in node.findall("g:data", ns):
            if keys.get(d.get("key")) == "community":
                communities[nid] = int(d.text)
    edges = {}
    for edge in graph.findall("g:edge", ns):
        w = 1
        for d in edge.findall("g:data", ns):
            if keys.get(d.get("key")) == "weight":
                w = int(float(d.text))
        edges[pair_key(edge.get("source"), edge.get("target"))] = w
    return WeightedGraph(nodes, edges, meta), (communities or None)
