"""Weekly trading networks and the structural statistics computed on them.

A :class:`TradeNetwork` is a weighted directed graph stored as parallel edge
arrays. Distance-based statistics (betweenness, average path length) follow
the direction of the trades; triadic and degree-correlation statistics
(clustering, diameter, assortativity, modularity) use the undirected
projection, in which ``u - v`` exists when either direction was traded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterable, Mapping, NamedTuple
from xml.sax.saxutils import escape, quoteattr

import numpy as np
from scipy import sparse

from . import _kernels
from .errors import EmptyGraph
from .ingest import TradeKind, WeeklyBatch

CHARACTER = "character"
WAREHOUSE = "warehouse"


@dataclass(eq=False)
class TradeNetwork:
    """Directed trade graph. Node ids are kept sorted; edges are unique ``(src, dst)`` pairs."""

    nodes: list[str]
    roles: list[str]
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    money: np.ndarray
    week_index: int = 0

    def __post_init__(self):
        self.src = np.asarray(self.src, dtype=np.int64)
        self.dst = np.asarray(self.dst, dtype=np.int64)
        self.weight = np.asarray(self.weight, dtype=np.int64)
        self.money = np.asarray(self.money, dtype=np.int64)
        if len(self.nodes) != len(self.roles):
            raise ValueError("nodes and roles differ in length")
        if np.any(self.src == self.dst):
            raise ValueError("self-loops are not allowed")
        if np.any(self.weight < 1):
            raise ValueError("edge weights must be >= 1")
        if np.any(self.money < 0):
            raise ValueError("money volumes must be >= 0")

    @classmethod
    def from_edges(
        cls,
        edges: Iterable[tuple],
        roles: Mapping[str, str] | None = None,
        isolated: Iterable[str] = (),
        week_index: int = 0,
    ) -> "TradeNetwork":
        """Build from ``(src, dst[, weight[, money]])`` tuples; repeated pairs are summed."""
        acc: dict[tuple[str, str], list[int]] = {}
        for edge in edges:
            u, v = str(edge[0]), str(edge[1])
            w = int(edge[2]) if len(edge) > 2 else 1
            money = int(edge[3]) if len(edge) > 3 else 0
            slot = acc.setdefault((u, v), [0, 0])
            slot[0] += w
            slot[1] += money
        names = set(isolated)
        for u, v in acc:
            names.add(u)
            names.add(v)
        roles = roles or {}
        nodes = sorted(names)
        index = {name: i for i, name in enumerate(nodes)}
        keys = sorted(acc, key=lambda k: (index[k[0]], index[k[1]]))
        return cls(
            nodes=nodes,
            roles=[roles.get(name, CHARACTER) for name in nodes],
            src=np.array([index[u] for u, _ in keys], dtype=np.int64),
            dst=np.array([index[v] for _, v in keys], dtype=np.int64),
            weight=np.array([acc[k][0] for k in keys], dtype=np.int64),
            money=np.array([acc[k][1] for k in keys], dtype=np.int64),
            week_index=week_index,
        )

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    @cached_property
    def index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.nodes)}

    def edges(self) -> Iterable[tuple[str, str, int, int]]:
        for u, v, w, m in zip(self.src.tolist(), self.dst.tolist(), self.weight.tolist(), self.money.tolist()):
            yield self.nodes[u], self.nodes[v], w, m

    def edge(self, u: str, v: str) -> tuple[int, int] | None:
        """Return ``(weight, money)`` for the directed edge, or None."""
        i, j = self.index.get(u), self.index.get(v)
        if i is None or j is None:
            return None
        hit = np.flatnonzero((self.src == i) & (self.dst == j))
        if len(hit) == 0:
            return None
        return int(self.weight[hit[0]]), int(self.money[hit[0]])

    def subgraph(self, members: Iterable[str]) -> "TradeNetwork":
        keep = np.zeros(self.n_nodes, dtype=bool)
        for name in members:
            keep[self.index[name]] = True
        return self._induced(np.flatnonzero(keep))

    def _induced(self, idx: np.ndarray) -> "TradeNetwork":
        idx = np.sort(np.asarray(idx, dtype=np.int64))
        local = np.full(self.n_nodes, -1, dtype=np.int64)
        local[idx] = np.arange(len(idx))
        mask = (local[self.src] >= 0) & (local[self.dst] >= 0)
        return TradeNetwork(
            nodes=[self.nodes[i] for i in idx],
            roles=[self.roles[i] for i in idx],
            src=local[self.src[mask]],
            dst=local[self.dst[mask]],
            weight=self.weight[mask],
            money=self.money[mask],
            week_index=self.week_index,
        )

    # cached structural views ------------------------------------------------

    @cached_property
    def out_degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.n_nodes)

    @cached_property
    def in_degree(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.n_nodes)

    @cached_property
    def degree(self) -> np.ndarray:
        """In-degree plus out-degree, counting distinct neighbours per direction."""
        return self.out_degree + self.in_degree

    @cached_property
    def out_csr(self) -> tuple[np.ndarray, np.ndarray]:
        return _csr(self.n_nodes, self.src, self.dst)

    @cached_property
    def undirected_pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(lo, hi, w)`` with ``lo < hi``; ``w`` sums the weights of both directions."""
        return _undirected_pairs(self.n_nodes, self.src, self.dst, self.weight)

    @cached_property
    def undirected_csr(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi, _ = self.undirected_pairs
        return _csr(self.n_nodes, np.concatenate([lo, hi]), np.concatenate([hi, lo]))

    @cached_property
    def undirected_degree(self) -> np.ndarray:
        lo, hi, _ = self.undirected_pairs
        return np.bincount(np.concatenate([lo, hi]), minlength=self.n_nodes)


def _csr(n: int, src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((dst, src))
    indices = np.ascontiguousarray(dst[order], dtype=np.int64)
    counts = np.bincount(src, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, indices


def _undirected_pairs(n, src, dst, weight):
    if len(src) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0, dtype=np.float64)
    lo = np.minimum(src, dst)
    hi = np.maximum(src, dst)
    keys, inverse = np.unique(lo * n + hi, return_inverse=True)
    w = np.bincount(inverse, weights=weight.astype(np.float64))
    return keys // n, keys % n, w


def build_trading_network(batch: WeeklyBatch) -> TradeNetwork:
    """One edge per ordered pair; weight counts trades and money sums their value.

    Deposits become ``character -> warehouse`` edges and withdrawals become
    ``warehouse -> character`` edges, so goods routed through a warehouse
    show up as a two-hop path.
    """
    acc: dict[tuple[str, str], list[int]] = {}
    roles: dict[str, str] = {}
    for e in batch.events:
        if e.kind is TradeKind.WAREHOUSE_DEPOSIT:
            roles[e.target_id] = WAREHOUSE
        elif e.kind is TradeKind.WAREHOUSE_WITHDRAW:
            roles[e.source_id] = WAREHOUSE
        slot = acc.get((e.source_id, e.target_id))
        if slot is None:
            acc[(e.source_id, e.target_id)] = [1, e.money_value]
        else:
            slot[0] += 1
            slot[1] += e.money_value
    return TradeNetwork.from_edges(
        ((u, v, w, m) for (u, v), (w, m) in acc.items()),
        roles=roles,
        week_index=batch.week_index,
    )


# --------------------------------------------------------------------------- #
# statistics
# --------------------------------------------------------------------------- #


class Betweenness(NamedTuple):
    values: dict[str, float]
    mean: float
    std: float


@dataclass(frozen=True)
class NetworkSummary:
    node_count: int
    edge_count: int
    average_path_length: float
    global_clustering_coefficient: float
    degree_mean: float
    degree_std: float
    betweenness_mean: float
    betweenness_std: float
    undefined: frozenset = field(default_factory=frozenset)

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "undefined"}
        out["undefined"] = sorted(self.undefined)
        return out


def _require_nodes(net: TradeNetwork) -> None:
    if net.n_nodes == 0:
        raise EmptyGraph("the network has no nodes")


def degree_stats(net: TradeNetwork) -> tuple[float, float]:
    """Mean and population std of total (in + out) degree."""
    _require_nodes(net)
    d = net.degree.astype(np.float64)
    return float(d.mean()), float(d.std())


def betweenness_array(net: TradeNetwork) -> np.ndarray:
    indptr, indices = net.out_csr
    bc, _, _ = _kernels.brandes(indptr, indices, net.n_nodes)
    return bc


def betweenness(net: TradeNetwork) -> Betweenness:
    """Directed, unweighted, unnormalised betweenness of every node."""
    _require_nodes(net)
    bc = betweenness_array(net)
    return Betweenness(dict(zip(net.nodes, bc.tolist())), float(bc.mean()), float(bc.std()))


def average_path_length(net: TradeNetwork) -> float | None:
    """Mean directed distance over reachable ordered pairs; None when no pair is reachable."""
    if net.n_edges == 0:
        return None
    indptr, indices = net.out_csr
    total, pairs, _ = _kernels.bfs_distance_stats(indptr, indices, net.n_nodes)
    return total / pairs if pairs else None


def _triangle_stats(net: TradeNetwork) -> tuple[float, float]:
    """Return (6 x triangles, 2 x connected triplets) on the undirected projection."""
    lo, hi, _ = net.undirected_pairs
    if len(lo) == 0:
        return 0.0, 0.0
    n = net.n_nodes
    ones = np.ones(2 * len(lo))
    adj = sparse.csr_matrix((ones, (np.concatenate([lo, hi]), np.concatenate([hi, lo]))), shape=(n, n))
    closed = float((adj @ adj).multiply(adj).sum())
    k = net.undirected_degree.astype(np.float64)
    return closed, float((k * (k - 1)).sum())


def clustering_coefficient(net: TradeNetwork) -> float:
    """Global transitivity ``3 * triangles / connected triplets``; 0 without triplets."""
    _require_nodes(net)
    closed, triplets = _triangle_stats(net)
    return closed / triplets if triplets else 0.0


def diameter(net: TradeNetwork) -> int:
    """Longest shortest path in the undirected projection, maximised over components."""
    _require_nodes(net)
    indptr, indices = net.undirected_csr
    _, _, longest = _kernels.bfs_distance_stats(indptr, indices, net.n_nodes)
    return int(longest)


def degree_assortativity(net: TradeNetwork) -> float | None:
    """Pearson correlation of endpoint degrees over undirected edges (both orientations).

    Returns None when either margin has zero variance (e.g. a cycle).
    """
    lo, hi, _ = net.undirected_pairs
    if len(lo) == 0:
        return None
    k = net.undirected_degree.astype(np.float64)
    x = np.concatenate([k[lo], k[hi]])
    y = np.concatenate([k[hi], k[lo]])
    x = x - x.mean()
    y = y - y.mean()
    sxx = float(x @ x)
    syy = float(y @ y)
    if sxx <= 1e-12 * len(x) or syy <= 1e-12 * len(y):
        return None
    r = float(x @ y) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def modularity(
    net: TradeNetwork,
    assignment: Mapping[str, int],
    resolution: float = 1.0,
    weighted: bool = True,
) -> float:
    """Newman modularity of ``assignment`` on the undirected projection.

    ``Q = sum_c [ L_c / m - resolution * (d_c / 2m)^2 ]`` where ``L_c`` is the
    internal edge weight of community ``c``, ``d_c`` its total weighted degree
    and ``m`` the total edge weight. A graph without edges has Q = 0.
    """
    missing = [n for n in net.nodes if n not in assignment]
    if missing:
        raise ValueError(f"partition does not cover {len(missing)} node(s), e.g. {missing[0]!r}")
    lo, hi, w = net.undirected_pairs
    if not weighted:
        w = np.ones_like(w)
    m = float(w.sum())
    if m == 0:
        return 0.0
    labels = np.array([assignment[n] for n in net.nodes])
    _, comm = np.unique(labels, return_inverse=True)
    n_comm = int(comm.max()) + 1
    same = comm[lo] == comm[hi]
    internal = np.bincount(comm[lo][same], weights=w[same], minlength=n_comm)
    strength = np.bincount(lo, weights=w, minlength=net.n_nodes) + np.bincount(hi, weights=w, minlength=net.n_nodes)
    totals = np.bincount(comm, weights=strength, minlength=n_comm)
    return float(internal.sum() / m - resolution * ((totals / (2.0 * m)) ** 2).sum())


def summarize(net: TradeNetwork) -> NetworkSummary:
    """Network-level statistics in the layout of a trading-network summary table."""
    _require_nodes(net)
    indptr, indices = net.out_csr
    bc, total, pairs = _kernels.brandes(indptr, indices, net.n_nodes)
    undefined = set()
    if pairs:
        apl = total / pairs
    else:
        apl = 0.0
        undefined.add("average_path_length")
    d_mean, d_std = degree_stats(net)
    return NetworkSummary(
        node_count=net.n_nodes,
        edge_count=net.n_edges,
        average_path_length=float(apl),
        global_clustering_coefficient=clustering_coefficient(net),
        degree_mean=d_mean,
        degree_std=d_std,
        betweenness_mean=float(bc.mean()),
        betweenness_std=float(bc.std()),
        undefined=frozenset(undefined),
    )


# --------------------------------------------------------------------------- #
# export
# --------------------------------------------------------------------------- #


def _attr_type(value) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "long"
    if isinstance(value, float):
        return "double"
    return "string"


def write_graphml(
    net: TradeNetwork,
    stream: IO[str],
    node_attributes: Mapping[str, Mapping[str, object]] | None = None,
) -> None:
    """Write GraphML with ``weight``/``money`` edge data and optional node attributes."""
    node_attributes = node_attributes or {}
    keys: dict[str, str] = {"role": "string"}
    for attrs in node_attributes.values():
        for k, v in attrs.items():
            keys.setdefault(k, _attr_type(v))
    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           '<graphml xmlns="http://graphml.graphdrawing.org/xmlns">']
    for k in keys:
        out.append(f'  <key id="n_{escape(k)}" for="node" attr.name={quoteattr(k)} attr.type="{keys[k]}"/>')
    out.append('  <key id="e_weight" for="edge" attr.name="weight" attr.type="long"/>')
    out.append('  <key id="e_money" for="edge" attr.name="money" attr.type="long"/>')
    out.append(f'  <graph id="week_{net.week_index}" edgedefault="directed">')
    for name, role in zip(net.nodes, net.roles):
        out.append(f"    <node id={quoteattr(name)}>")
        attrs = {"role": role, **node_attributes.get(name, {})}
        for k, v in attrs.items():
            if isinstance(v, bool):
                v = "true" if v else "false"
            out.append(f'      <data key="n_{escape(k)}">{escape(str(v))}</data>')
        out.append("    </node>")
    for u, v, w, m in net.edges():
        out.append(f"    <edge source={quoteattr(u)} target={quoteattr(v)}>")
        out.append(f'      <data key="e_weight">{w}</data>')
        out.append(f'      <data key="e_money">{m}</data>')
        out.append("    </edge>")
    out.append("  </graph>")
    out.append("</graphml>")
    stream.write("\n".join(out) + "\n")


def _dot_id(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def write_dot(
    net: TradeNetwork,
    stream: IO[str],
    node_attributes: Mapping[str, Mapping[str, object]] | None = None,
) -> None:
    node_attributes = node_attributes or {}
    lines = [f"digraph week_{net.week_index} {{"]
    for name, role in zip(net.nodes, net.roles):
        attrs = {"role": role, **node_attributes.get(name, {})}
        body = ", ".join(f"{k}={_dot_id(str(v))}" for k, v in attrs.items())
        lines.append(f"  {_dot_id(name)} [{body}];")
    for u, v, w, m in net.edges():
        lines.append(f"  {_dot_id(u)} -> {_dot_id(v)} [weight={w}, money={m}];")
    lines.append("}")
    stream.write("\n".join(lines) + "\n")
