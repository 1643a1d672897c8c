"""Compiled breadth-first-search kernels over CSR adjacency arrays."""

import numpy as np
from numba import njit


@njit(cache=True)
def brandes(indptr, indices, n):
    """Unnormalised shortest-path betweenness for an unweighted graph.

    Also returns the sum of all finite pairwise distances and the number of
    reachable ordered pairs, which is what average path length needs.
    """
    bc = np.zeros(n)
    dist = np.full(n, -1, np.int64)
    sigma = np.zeros(n)
    delta = np.zeros(n)
    queue = np.empty(n, np.int64)
    dist_sum = 0
    pairs = 0
    for s in range(n):
        head = 0
        tail = 1
        queue[0] = s
        dist[s] = 0
        sigma[s] = 1.0
        while head < tail:
            v = queue[head]
            head += 1
            dv = dist[v]
            for p in range(indptr[v], indptr[v + 1]):
                w = indices[p]
                if dist[w] < 0:
                    dist[w] = dv + 1
                    queue[tail] = w
                    tail += 1
                if dist[w] == dv + 1:
                    sigma[w] += sigma[v]
        # reverse BFS order: every successor is final before its predecessors
        for i in range(tail - 1, -1, -1):
            v = queue[i]
            dv = dist[v]
            acc = 0.0
            for p in range(indptr[v], indptr[v + 1]):
                w = indices[p]
                if dist[w] == dv + 1:
                    acc += sigma[v] / sigma[w] * (1.0 + delta[w])
            delta[v] = acc
            if v != s:
                bc[v] += acc
            dist_sum += dv
        pairs += tail - 1
        for i in range(tail):
            v = queue[i]
            dist[v] = -1
            sigma[v] = 0.0
            delta[v] = 0.0
    return bc, dist_sum, pairs


@njit(cache=True)
def bfs_distance_stats(indptr, indices, n):
    """Return (sum of distances, reachable ordered pairs, max distance)."""
    dist = np.full(n, -1, np.int64)
    queue = np.empty(n, np.int64)
    total = 0
    pairs = 0
    longest = 0
    for s in range(n):
        head = 0
        tail = 1
        queue[0] = s
        dist[s] = 0
        while head < tail:
            v = queue[head]
            head += 1
            for p in range(indptr[v], indptr[v + 1]):
                w = indices[p]
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue[tail] = w
                    tail += 1
        for i in range(tail):
            d = dist[queue[i]]
            total += d
            if d > longest:
                longest = d
            dist[queue[i]] = -1
        pairs += tail - 1
    return total, pairs, longest
