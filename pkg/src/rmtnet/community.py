"""Community detection on the undirected projection of a trading network.

Three modularity-oriented algorithms are provided: multilevel (Louvain),
fast greedy (Clauset-Newman-Moore) and asynchronous label propagation. Each
returns a :class:`CommunityPartition` whose ``modularity`` is recomputed with
:func:`rmtnet.graph.modularity`, and whose community ids are dense integers
ordered by decreasing size (ties broken by smallest member id).
"""

from __future__ import annotations

import heapq
import logging
import random
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .errors import EmptyGraph
from .graph import TradeNetwork, modularity

log = logging.getLogger(__name__)

_MIN_GAIN = 1e-9


@dataclass(frozen=True)
class CommunityPartition:
    assignment: dict[str, int]
    modularity: float
    algorithm: str
    seed: int | None = None

    @property
    def n_communities(self) -> int:
        return (max(self.assignment.values()) + 1) if self.assignment else 0

    def communities(self) -> list[list[str]]:
        groups: list[list[str]] = [[] for _ in range(self.n_communities)]
        for node, c in self.assignment.items():
            groups[c].append(node)
        for g in groups:
            g.sort()
        return groups


def _adjacency(net: TradeNetwork, weighted: bool) -> tuple[list[dict[int, float]], float]:
    lo, hi, w = net.undirected_pairs
    if not weighted:
        w = np.ones_like(w)
    adj: list[dict[int, float]] = [{} for _ in range(net.n_nodes)]
    for u, v, x in zip(lo.tolist(), hi.tolist(), w.tolist()):
        adj[u][v] = x
        adj[v][u] = x
    return adj, float(w.sum())


def _canonical(labels: Sequence[int]) -> list[int]:
    """Renumber labels by decreasing community size, then smallest member index."""
    first: dict[int, int] = {}
    size: dict[int, int] = {}
    for i, c in enumerate(labels):
        first.setdefault(c, i)
        size[c] = size.get(c, 0) + 1
    order = sorted(size, key=lambda c: (-size[c], first[c]))
    remap = {c: new for new, c in enumerate(order)}
    return [remap[c] for c in labels]


def _finish(net, labels, algorithm, seed, resolution, weighted) -> CommunityPartition:
    labels = _canonical(labels)
    assignment = dict(zip(net.nodes, labels))
    q = modularity(net, assignment, resolution=resolution, weighted=weighted)
    return CommunityPartition(assignment, q, algorithm, seed)


# --------------------------------------------------------------------------- #
# multilevel (Louvain)
# --------------------------------------------------------------------------- #


def _local_moving(adj, k, m, resolution, rng) -> list[int]:
    n = len(adj)
    comm = list(range(n))
    tot = list(k)
    m2 = 2.0 * m
    order = list(range(n))
    rng.shuffle(order)
    while True:
        improvement = 0.0
        for i in order:
            ci = comm[i]
            ki = k[i]
            links: dict[int, float] = {}
            for j, w in adj[i].items():
                if j != i:
                    cj = comm[j]
                    links[cj] = links.get(cj, 0.0) + w
            tot[ci] -= ki
            stay = links.get(ci, 0.0) - resolution * tot[ci] * ki / m2
            best, best_gain = ci, stay
            for c, w in links.items():
                gain = w - resolution * tot[c] * ki / m2
                if gain > best_gain:
                    best, best_gain = c, gain
            if best != ci and (best_gain - stay) / m <= 1e-15:
                best, best_gain = ci, stay
            tot[best] += ki
            if best != ci:
                comm[i] = best
                improvement += (best_gain - stay) / m
        if improvement <= _MIN_GAIN:
            return comm


def _split_disconnected(adj, comm) -> list[int]:
    """Give every connected piece of a community its own label.

    Splitting a disconnected community never lowers modularity: no internal
    edge is lost and the squared-degree penalty shrinks.
    """
    n = len(adj)
    out = [-1] * n
    next_label = 0
    for s in range(n):
        if out[s] >= 0:
            continue
        c = comm[s]
        out[s] = next_label
        stack = [s]
        while stack:
            v = stack.pop()
            for u in adj[v]:
                if out[u] < 0 and comm[u] == c:
                    out[u] = next_label
                    stack.append(u)
        next_label += 1
    return out


def _aggregate(adj, comm, n_comm) -> list[dict[int, float]]:
    new: list[dict[int, float]] = [{} for _ in range(n_comm)]
    for i, nbrs in enumerate(adj):
        ci = comm[i]
        for j, w in nbrs.items():
            if j < i:
                continue
            cj = comm[j]
            if j == i or ci == cj:
                new[ci][ci] = new[ci].get(ci, 0.0) + w
            else:
                new[ci][cj] = new[ci].get(cj, 0.0) + w
                new[cj][ci] = new[cj].get(ci, 0.0) + w
    return new


def detect_multilevel(
    net: TradeNetwork,
    seed: int = 0,
    resolution: float = 1.0,
    weighted: bool = True,
) -> CommunityPartition:
    """Louvain: local moving plus aggregation until modularity stops improving.

    Node visiting order is shuffled from ``seed``. After each local-moving
    phase disconnected communities are split into their connected pieces, so
    no community ever spans two components.
    """
    if net.n_edges == 0:
        raise EmptyGraph("multilevel detection needs at least one edge")
    rng = random.Random(seed)
    adj, m = _adjacency(net, weighted)
    membership = list(range(net.n_nodes))
    while True:
        k = [sum(w for j, w in nbrs.items()) + nbrs.get(i, 0.0) for i, nbrs in enumerate(adj)]
        comm = _local_moving(adj, k, m, resolution, rng)
        comm = _split_disconnected(adj, comm)
        n_comm = max(comm) + 1
        membership = [comm[c] for c in membership]
        if n_comm == len(adj):
            break
        adj = _aggregate(adj, comm, n_comm)
    return _finish(net, membership, "multilevel", seed, resolution, weighted)


# --------------------------------------------------------------------------- #
# fast greedy (Clauset-Newman-Moore)
# --------------------------------------------------------------------------- #


def detect_fastgreedy(net: TradeNetwork, resolution: float = 1.0, weighted: bool = True) -> CommunityPartition:
    """Greedy agglomeration by best modularity gain, cut at the maximum-Q dendrogram level.

    Equal gains are resolved in favour of the lexicographically smallest
    ``(community, community)`` id pair; the survivor keeps the smaller id.
    """
    if net.n_edges == 0:
        raise EmptyGraph("fast greedy detection needs at least one edge")
    adj, m = _adjacency(net, weighted)
    n = net.n_nodes
    m2 = 2.0 * m
    e = [{j: w / m2 for j, w in nbrs.items()} for nbrs in adj]
    a = [sum(nbrs.values()) / m2 for nbrs in adj]
    alive = [True] * n
    stamp = [0] * n
    heap = []
    for i in range(n):
        for j, eij in e[i].items():
            if i < j:
                heap.append((-2.0 * (eij - resolution * a[i] * a[j]), i, j, 0, 0))
    heapq.heapify(heap)

    q = -resolution * sum(x * x for x in a)
    best_q, best_step = q, 0
    merges: list[tuple[int, int]] = []
    while heap:
        neg_dq, i, j, si, sj = heapq.heappop(heap)
        if not (alive[i] and alive[j]) or stamp[i] != si or stamp[j] != sj:
            continue
        for kk, v in e[j].items():
            if kk == i:
                continue
            merged = e[i].get(kk, 0.0) + v
            e[i][kk] = merged
            e[kk][i] = merged
            del e[kk][j]
        e[i].pop(j, None)
        e[j] = {}
        alive[j] = False
        a[i] += a[j]
        stamp[i] += 1
        q -= neg_dq
        merges.append((i, j))
        if q > best_q + 1e-15:
            best_q, best_step = q, len(merges)
        for kk, v in e[i].items():
            lo, hi = (i, kk) if i < kk else (kk, i)
            heapq.heappush(heap, (-2.0 * (v - resolution * a[i] * a[kk]), lo, hi, stamp[lo], stamp[hi]))

    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in merges[:best_step]:
        parent[find(j)] = find(i)
    labels = [find(x) for x in range(n)]
    return _finish(net, labels, "fastgreedy", None, resolution, weighted)


# --------------------------------------------------------------------------- #
# label propagation
# --------------------------------------------------------------------------- #


def detect_label_propagation(
    net: TradeNetwork,
    seed: int = 0,
    weighted: bool = True,
    max_sweeps: int = 100,
) -> CommunityPartition:
    """Asynchronous label propagation with seeded update order and tie-breaks.

    A node keeps its label whenever that label is among the heaviest in its
    neighbourhood, which makes the no-change stopping rule reachable.
    """
    rng = random.Random(seed)
    adj, _ = _adjacency(net, weighted)
    labels = list(range(net.n_nodes))
    order = list(range(net.n_nodes))
    for _ in range(max_sweeps):
        rng.shuffle(order)
        changed = False
        for i in order:
            if not adj[i]:
                continue
            score: dict[int, float] = {}
            for j, w in adj[i].items():
                score[labels[j]] = score.get(labels[j], 0.0) + w
            top = max(score.values())
            best = sorted(lbl for lbl, s in score.items() if s == top)
            if labels[i] in best:
                continue
            labels[i] = best[0] if len(best) == 1 else rng.choice(best)
            changed = True
        if not changed:
            break
    else:
        log.info("label propagation stopped after %d sweeps without converging", max_sweeps)
    return _finish(net, labels, "label_propagation", seed, 1.0, weighted)


# --------------------------------------------------------------------------- #
# algorithm registry and comparison
# --------------------------------------------------------------------------- #

Detector = Callable[[TradeNetwork], CommunityPartition]


def _not_implemented(name: str) -> Detector:
    def detector(net: TradeNetwork) -> CommunityPartition:
        raise NotImplementedError(f"{name} is a plug-in slot; register an implementation first")

    return detector


ALGORITHMS: dict[str, Callable[..., CommunityPartition]] = {
    "multilevel": detect_multilevel,
    "fastgreedy": detect_fastgreedy,
    "label_propagation": detect_label_propagation,
    "walktrap": _not_implemented("walktrap"),
    "infomap": _not_implemented("infomap"),
}


def register_algorithm(name: str, detector: Callable[..., CommunityPartition]) -> None:
    ALGORITHMS[name] = detector


def get_detector(name: str, seed: int = 0, resolution: float = 1.0, weighted: bool = True) -> Detector:
    """Bind the common options of a registered algorithm into a one-argument callable."""
    if name not in ALGORITHMS:
        raise KeyError(f"unknown community detection algorithm {name!r}")
    fn = ALGORITHMS[name]
    if name == "multilevel":
        return lambda net: fn(net, seed=seed, resolution=resolution, weighted=weighted)
    if name == "fastgreedy":
        return lambda net: fn(net, resolution=resolution, weighted=weighted)
    if name == "label_propagation":
        return lambda net: fn(net, seed=seed, weighted=weighted)
    return fn


@dataclass(frozen=True)
class ComparisonRow:
    algorithm: str
    min_q: float
    mean_q: float
    max_q: float
    n_networks: int


def compare_algorithms(
    nets: Iterable[TradeNetwork],
    algos: Mapping[str, Detector] | Sequence[str],
    seed: int = 0,
) -> list[ComparisonRow]:
    """Run every algorithm on every network; rows sorted by mean modularity, best first."""
    if not isinstance(algos, Mapping):
        algos = {name: get_detector(name, seed=seed) for name in algos}
    nets = [net for net in nets if net.n_edges > 0]
    rows = []
    for name, detector in algos.items():
        qs = [detector(net).modularity for net in nets]
        if not qs:
            continue
        rows.append(ComparisonRow(name, float(min(qs)), float(np.mean(qs)), float(max(qs)), len(qs)))
    rows.sort(key=lambda r: (-r.mean_q, r.algorithm))
    return rows


# --------------------------------------------------------------------------- #
# estimator wrappers
# --------------------------------------------------------------------------- #


class _DetectorBase(ClusterMixin, BaseEstimator):
    def _detect(self, net: TradeNetwork) -> CommunityPartition:
        raise NotImplementedError

    def fit(self, X: TradeNetwork, y=None):
        self.partition_ = self._detect(X)
        self.labels_ = np.array([self.partition_.assignment[n] for n in X.nodes])
        self.modularity_ = self.partition_.modularity
        self.n_communities_ = self.partition_.n_communities
        return self


class MultilevelDetector(_DetectorBase):
    def __init__(self, seed: int = 0, resolution: float = 1.0, weighted: bool = True):
        self.seed = seed
        self.resolution = resolution
        self.weighted = weighted

    def _detect(self, net):
        return detect_multilevel(net, seed=self.seed, resolution=self.resolution, weighted=self.weighted)


class FastGreedyDetector(_DetectorBase):
    def __init__(self, resolution: float = 1.0, weighted: bool = True):
        self.resolution = resolution
        self.weighted = weighted

    def _detect(self, net):
        return detect_fastgreedy(net, resolution=self.resolution, weighted=self.weighted)


class LabelPropagationDetector(_DetectorBase):
    def __init__(self, seed: int = 0, weighted: bool = True, max_sweeps: int = 100):
        self.seed = seed
        self.weighted = weighted
        self.max_sweeps = max_sweeps

    def _detect(self, net):
        return detect_label_propagation(net, seed=self.seed, weighted=self.weighted, max_sweeps=self.max_sweeps)
