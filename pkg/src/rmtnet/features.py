"""Community structure features, user play-style features and k-means grouping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import _kernels
from ._validation import check_matrix
from .errors import KTooLarge, NoData
from .graph import TradeNetwork, degree_assortativity, _triangle_stats
from .ingest import PLAY_FEATURE_NAMES, PlayActivityRecord

COMMUNITY_FEATURE_NAMES = (
    "size",
    "degree_mean",
    "degree_std",
    "betweenness_mean",
    "betweenness_std",
    "assortativity",
    "clustering_coefficient",
    "radius",
)


@dataclass(frozen=True)
class CommunityFeatures:
    """Structural statistics of one community's induced subgraph.

    ``diameter`` is exported under the name ``radius`` to match the feature
    naming used in reports. Statistics that are mathematically undefined
    (assortativity with zero degree variance) are stored as 0 and listed in
    ``undefined``.
    """

    size: int
    degree_mean: float
    degree_std: float
    betweenness_mean: float
    betweenness_std: float
    assortativity: float
    clustering_coefficient: float
    diameter: int
    undefined: frozenset = field(default_factory=frozenset)

    def as_vector(self) -> np.ndarray:
        return np.array(
            [
                self.size,
                self.degree_mean,
                self.degree_std,
                self.betweenness_mean,
                self.betweenness_std,
                self.assortativity,
                self.clustering_coefficient,
                self.diameter,
            ],
            dtype=np.float64,
        )

    def as_dict(self) -> dict:
        out = dict(zip(COMMUNITY_FEATURE_NAMES, self.as_vector().tolist()))
        out["size"] = self.size
        out["radius"] = self.diameter
        out["undefined"] = sorted(self.undefined)
        return out


def _features_of(sub: TradeNetwork) -> CommunityFeatures:
    n = sub.n_nodes
    deg = sub.degree.astype(np.float64)
    indptr, indices = sub.out_csr
    bc, _, _ = _kernels.brandes(indptr, indices, n)
    uptr, uind = sub.undirected_csr
    _, _, longest = _kernels.bfs_distance_stats(uptr, uind, n)
    closed, triplets = _triangle_stats(sub) if sub.n_edges >= 3 else (0.0, 0.0)
    r = degree_assortativity(sub)
    return CommunityFeatures(
        size=n,
        degree_mean=float(deg.mean()),
        degree_std=float(deg.std()),
        betweenness_mean=float(bc.mean()),
        betweenness_std=float(bc.std()),
        assortativity=0.0 if r is None else r,
        clustering_coefficient=closed / triplets if triplets else 0.0,
        diameter=int(longest),
        undefined=frozenset() if r is not None else frozenset({"assortativity"}),
    )


def community_feature_vector(net: TradeNetwork, members: Iterable[str]) -> CommunityFeatures:
    members = list(members)
    if not members:
        raise ValueError("a community needs at least one member")
    unknown = [m for m in members if m not in net.index]
    if unknown:
        raise ValueError(f"{unknown[0]!r} is not a node of the network")
    return _features_of(net.subgraph(members))


def induced_subgraphs(net: TradeNetwork, assignment: Mapping[str, int]) -> list[TradeNetwork]:
    """Induced subgraph of every community, indexed by community id.

    Edges are bucketed once, which keeps this linear in the network size
    rather than quadratic in the number of communities.
    """
    labels = np.array([assignment[n] for n in net.nodes], dtype=np.int64)
    n_comm = int(labels.max()) + 1 if len(labels) else 0
    node_order = np.argsort(labels, kind="stable")
    node_bounds = np.searchsorted(labels[node_order], np.arange(n_comm + 1))
    local = np.empty(net.n_nodes, dtype=np.int64)
    for c in range(n_comm):
        idx = node_order[node_bounds[c]:node_bounds[c + 1]]
        local[idx] = np.arange(len(idx))
    intra = np.flatnonzero(labels[net.src] == labels[net.dst])
    edge_comm = labels[net.src[intra]]
    edge_order = intra[np.argsort(edge_comm, kind="stable")]
    edge_bounds = np.searchsorted(labels[net.src[edge_order]], np.arange(n_comm + 1))
    subs = []
    for c in range(n_comm):
        idx = node_order[node_bounds[c]:node_bounds[c + 1]]
        e = edge_order[edge_bounds[c]:edge_bounds[c + 1]]
        subs.append(
            TradeNetwork(
                nodes=[net.nodes[i] for i in idx],
                roles=[net.roles[i] for i in idx],
                src=local[net.src[e]],
                dst=local[net.dst[e]],
                weight=net.weight[e],
                money=net.money[e],
                week_index=net.week_index,
            )
        )
    return subs


def community_features(net: TradeNetwork, assignment: Mapping[str, int]) -> list[CommunityFeatures]:
    """Features of every community in a partition, in community-id order."""
    return [_features_of(sub) for sub in induced_subgraphs(net, assignment)]


# --------------------------------------------------------------------------- #
# user features
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class UserFeatures:
    user_id: str
    values: np.ndarray
    banned: bool = False

    def as_dict(self) -> dict:
        out = {"user": self.user_id}
        out.update(zip(PLAY_FEATURE_NAMES, self.values.tolist()))
        return out


def user_feature_vector(records: Sequence[PlayActivityRecord]) -> UserFeatures:
    """Element-wise sum of one user's weekly records."""
    if not records:
        raise NoData("no play records for this user")
    users = {r.user_id for r in records}
    if len(users) != 1:
        raise ValueError(f"records belong to {len(users)} different users")
    values = np.sum([r.features for r in records], axis=0, dtype=np.float64)
    return UserFeatures(records[0].user_id, values, any(r.banned for r in records))


def user_features(records: Iterable[PlayActivityRecord], weeks: Iterable[int] | None = None) -> list[UserFeatures]:
    """Group records by user (optionally restricted to ``weeks``) and sum them."""
    wanted = set(weeks) if weeks is not None else None
    grouped: dict[str, list[PlayActivityRecord]] = {}
    for r in records:
        if wanted is None or r.week_index in wanted:
            grouped.setdefault(r.user_id, []).append(r)
    return [user_feature_vector(grouped[u]) for u in sorted(grouped)]


# --------------------------------------------------------------------------- #
# standardisation
# --------------------------------------------------------------------------- #


def zscore_standardize(X) -> np.ndarray:
    """Per-column ``(x - mean) / std`` with population std; constant columns become 0."""
    return ZScoreScaler().fit_transform(X)


class ZScoreScaler(TransformerMixin, BaseEstimator):
    def fit(self, X, y=None):
        X = check_matrix(X)
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.constant_ = std <= 1e-12 * np.maximum(1.0, np.abs(self.mean_))
        self.scale_ = np.where(self.constant_, 1.0, std)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_matrix(X)
        Z = (X - self.mean_) / self.scale_
        Z[:, self.constant_] = 0.0
        return Z


# --------------------------------------------------------------------------- #
# k-means
# --------------------------------------------------------------------------- #


@dataclass
class ClusteringResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    k: int
    seed: int
    n_iter: int
    inertia_history: list[float] = field(default_factory=list)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


def _sq_dist(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _plusplus(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    chosen = [int(rng.integers(n))]
    closest = _sq_dist(X, X[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            # every point coincides with a centre already: take any unused index
            unused = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(unused))
        chosen.append(nxt)
        closest = np.minimum(closest, _sq_dist(X, X[[nxt]])[:, 0])
    return X[chosen].copy()


def _assign(X, C, previous=None):
    d = _sq_dist(X, C)
    labels = d.argmin(1)
    if previous is not None:
        # keep the old label on exact ties so degenerate data cannot oscillate
        keep = d[np.arange(len(X)), previous] <= d[np.arange(len(X)), labels]
        labels = np.where(keep, previous, labels)
    return labels, d[np.arange(len(X)), labels]


def _repair_empty(X, labels, dist, k):
    """Move the point farthest from its centroid into each empty cluster."""
    counts = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(counts == 0):
        movable = counts[labels] > 1
        candidates = np.flatnonzero(movable)
        far = candidates[np.argmax(dist[candidates])]
        counts[labels[far]] -= 1
        labels[far] = c
        dist[far] = 0.0
        counts[c] = 1
    return labels


def _centroids(X, labels, k):
    C = np.zeros((k, X.shape[1]))
    np.add.at(C, labels, X)
    return C / np.bincount(labels, minlength=k)[:, None]


def _inertia(X, labels, C) -> float:
    diff = X - C[labels]
    return float((diff * diff).sum())


def _lloyd(X, k, rng, max_iter, tol):
    C = _plusplus(X, k, rng)
    labels, dist = _assign(X, C)
    labels = _repair_empty(X, labels, dist, k)
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        C_new = _centroids(X, labels, k)
        history.append(_inertia(X, labels, C_new))
        shift = np.sqrt(((C_new - C) ** 2).sum(1)).max()
        C = C_new
        new_labels, dist = _assign(X, C, labels)
        new_labels = _repair_empty(X, new_labels, dist, k)
        if shift < tol and np.array_equal(new_labels, labels):
            break
        labels = new_labels
    C = _centroids(X, labels, k)
    return labels, C, history, n_iter


def _hartigan(X, labels, C, k, max_moves=100_000):
    """Single-point moves until none lowers the inertia.

    Moving ``x`` from ``a`` (size ``n_a > 1``) to ``b`` changes the inertia by
    ``n_b/(n_b+1) |x - c_b|^2 - n_a/(n_a-1) |x - c_a|^2``.
    """
    labels = labels.copy()
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    moves = 0
    while moves < max_moves:
        d = _sq_dist(X, C)
        idx = np.arange(len(X))
        own = counts[labels]
        with np.errstate(divide="ignore", invalid="ignore"):
            # singletons cannot leave: -inf makes their delta +inf
            leave = np.where(own > 1, own / (own - 1) * d[idx, labels], -np.inf)
        join = counts / (counts + 1) * d
        join[idx, labels] = np.inf
        delta = join - leave[:, None]
        flat = int(np.argmin(delta))
        i, b = divmod(flat, k)
        scale = max(1.0, float(leave[i]) if np.isfinite(leave[i]) else 1.0)
        if not delta[i, b] < -1e-10 * scale:
            break
        a = labels[i]
        C[a] = (C[a] * counts[a] - X[i]) / (counts[a] - 1)
        C[b] = (C[b] * counts[b] + X[i]) / (counts[b] + 1)
        counts[a] -= 1
        counts[b] += 1
        labels[i] = b
        moves += 1
    return labels, _centroids(X, labels, k)


def kmeans(X, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-6, n_init: int = 10) -> ClusteringResult:
    """k-means++ seeded Lloyd iterations, best of ``n_init`` restarts.

    The winning restart is polished with single-point moves so that the
    result is a local optimum in the strict sense: no point can change
    cluster and lower the inertia.
    """
    X = check_matrix(X)
    n = len(X)
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > n:
        raise KTooLarge(f"k={k} exceeds the number of items ({n})")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        labels, C, history, n_iter = _lloyd(X, k, rng, max_iter, tol)
        inertia = _inertia(X, labels, C)
        if best is None or inertia < best[0] - 1e-12 * max(1.0, inertia):
            best = (inertia, labels, C, history, n_iter)
    _, labels, C, history, n_iter = best
    labels, C = _hartigan(X, labels, C, k)
    inertia = _inertia(X, labels, C)
    if history and inertia < history[-1]:
        history = history + [inertia]
    return ClusteringResult(labels, C, inertia, k, seed, n_iter, history)


class KMeans(ClusterMixin, BaseEstimator):
    def __init__(self, n_clusters: int = 5, seed: int = 0, max_iter: int = 300, tol: float = 1e-6, n_init: int = 10):
        self.n_clusters = n_clusters
        self.seed = seed
        self.max_iter = max_iter
        self.tol = tol
        self.n_init = n_init

    def fit(self, X, y=None):
        result = kmeans(X, self.n_clusters, self.seed, self.max_iter, self.tol, self.n_init)
        self.result_ = result
        self.labels_ = result.assignments
        self.cluster_centers_ = result.centroids
        self.inertia_ = result.inertia
        self.n_iter_ = result.n_iter
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        return _sq_dist(check_matrix(X), self.cluster_centers_).argmin(1)


def _standardized_kmeans(rows, k, seed, n_init) -> ClusteringResult:
    X = check_matrix(rows)
    if k > len(X):
        raise KTooLarge(f"k={k} exceeds the number of items ({len(X)})")
    return kmeans(zscore_standardize(X), k, seed=seed, n_init=n_init)


def cluster_communities(features: Sequence[CommunityFeatures], k: int = 5, seed: int = 0, n_init: int = 10) -> ClusteringResult:
    """Standardise the eight structural features and group communities with k-means."""
    rows = [f.as_vector() for f in features]
    if not rows:
        raise NoData("no communities to cluster")
    return _standardized_kmeans(rows, k, seed, n_init)


def cluster_users(features: Sequence[UserFeatures], k: int = 7, seed: int = 0, n_init: int = 10) -> ClusteringResult:
    """Standardise the sixteen play features and group users with k-means."""
    rows = [u.values for u in features]
    if not rows:
        raise NoData("no users to cluster")
    return _standardized_kmeans(rows, k, seed, n_init)
