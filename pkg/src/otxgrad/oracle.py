"""Exact optimal transport for small n.

Two routes: a primal transportation simplex (the workhorse, n up to the
caller's limit) and a brute-force enumeration of spanning-tree bases used to
validate it on tiny problems. No external LP dependency.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import NumericFailure, OTInstance, TransportPlan, transport_cost

REDUCED_COST_TOL = 1e-12


@dataclass(frozen=True)
class OracleResult:
    value: float
    plan: TransportPlan
    method: str  # "simplex" or "exhaustive"


def _solve_tree_flows(cells, r, c):
    """Flows on a spanning-tree basis of the bipartite transport graph.

    cells: list of (i, j) basic cells forming a tree over the 2n nodes
    (rows 0..n-1, columns n..2n-1). Returns flows aligned with cells, by
    repeated leaf elimination. Assumes the tree property was checked.
    """
    n = r.shape[0]
    need = np.concatenate([r, c])  # remaining flow each node must carry
    adj = {k: [] for k in range(2 * n)}
    for a, (i, j) in enumerate(cells):
        adj[i].append(a)
        adj[n + j].append(a)
    deg = {k: len(v) for k, v in adj.items()}
    alive = [True] * len(cells)
    flows = np.zeros(len(cells))
    order = [k for k in range(2 * n) if deg[k] == 1]
    head = 0
    while head < len(order):
        k = order[head]
        head += 1
        arc = next((a for a in adj[k] if alive[a]), None)
        if arc is None:
            continue
        i, j = cells[arc]
        other = n + j if k < n else i
        flows[arc] = need[k]
        need[other] -= need[k]
        need[k] = 0.0
        alive[arc] = False
        deg[other] -= 1
        if deg[other] == 1:
            order.append(other)
    return flows


def _is_spanning_tree(cells, n):
    # 2n-1 distinct edges over 2n nodes form a tree iff they connect everything
    parent = list(range(2 * n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in cells:
        ra, rb = find(i), find(n + j)
        if ra == rb:
            return False
        parent[ra] = rb
    return True


def brute_force_ot(instance: OTInstance, n_limit: int = 4) -> OracleResult:
    """Global optimum by enumerating every spanning-tree basis. Exponential;
    only meant to cross-validate the simplex route on n <= 4."""
    n = instance.n
    if n > n_limit:
        raise ValueError(f"n = {n} exceeds brute-force limit {n_limit}")
    best_cost = np.inf
    best_flows = None
    best_cells = None
    all_cells = list(itertools.product(range(n), range(n)))
    for cells in itertools.combinations(all_cells, 2 * n - 1):
        if not _is_spanning_tree(cells, n):
            continue
        flows = _solve_tree_flows(cells, instance.r, instance.c)
        if np.any(flows < -1e-12):
            continue
        cost = sum(instance.W[i, j] * f for (i, j), f in zip(cells, flows))
        if cost < best_cost:
            best_cost, best_flows, best_cells = cost, flows, cells
    P = np.zeros((n, n))
    for (i, j), f in zip(best_cells, best_flows):
        P[i, j] = max(f, 0.0)
    plan = TransportPlan.from_matrix(P, instance.r, instance.c)
    return OracleResult(value=transport_cost(instance, plan), plan=plan,
                        method="exhaustive")


def _northwest_corner(r, c):
    """Initial basis: staircase of exactly 2n-1 cells (some possibly zero)."""
    n = r.shape[0]
    a = r.copy()
    b = c.copy()
    cells = []
    flows = []
    i = j = 0
    while True:
        m = min(a[i], b[j])
        cells.append((i, j))
        flows.append(m)
        a[i] -= m
        b[j] -= m
        if i == n - 1 and j == n - 1:
            break
        if (a[i] <= b[j] and i < n - 1) or j == n - 1:
            i += 1
        else:
            j += 1
    return cells, np.array(flows)


class _Basis:
    """Spanning-tree basis: adjacency over the 2n bipartite nodes plus flows."""

    def __init__(self, n, cells, flows):
        self.n = n
        self.flow = {cell: f for cell, f in zip(cells, flows)}
        self.adj = [set() for _ in range(2 * n)]
        for i, j in cells:
            self.adj[i].add(n + j)
            self.adj[n + j].add(i)

    def duals(self, W):
        # u_i + v_j = W_ij on basic cells, rooted at u_0 = 0
        n = self.n
        pot = np.full(2 * n, np.nan)
        pot[0] = 0.0
        stack = [0]
        while stack:
            k = stack.pop()
            for m in self.adj[k]:
                if np.isnan(pot[m]):
                    i, j = (k, m - n) if k < n else (m, k - n)
                    pot[m] = W[i, j] - pot[k]
                    stack.append(m)
        return pot[:n], pot[n:]

    def path_to_root(self, k, root):
        # parent pointers via DFS from root
        n2 = 2 * self.n
        parent = [-1] * n2
        parent[root] = root
        stack = [root]
        while stack:
            a = stack.pop()
            for m in self.adj[a]:
                if parent[m] == -1:
                    parent[m] = a
                    stack.append(m)
        path = [k]
        while path[-1] != root:
            path.append(parent[path[-1]])
        return path

    def cycle_with(self, i, j):
        """Arcs of the unique cycle created by adding cell (i, j), as a list
        of (cell, sign) starting with the entering arc at +1."""
        n = self.n
        path = self.path_to_root(n + j, i)  # tree path from column j up to row i
        arcs = [((i, j), +1)]
        sign = -1
        for a, b in zip(path, path[1:]):
            cell = (a, b - n) if a < n else (b, a - n)
            arcs.append((cell, sign))
            sign = -sign
        return arcs

    def pivot(self, cycle, entering, leaving, theta):
        n = self.n
        for (cell, sign) in cycle:
            if cell != entering:
                self.flow[cell] += sign * theta
        self.flow[entering] = theta
        del self.flow[leaving]
        li, lj = leaving
        self.adj[li].discard(n + lj)
        self.adj[n + lj].discard(li)
        ei, ej = entering
        self.adj[ei].add(n + ej)
        self.adj[n + ej].add(ei)


def _simplex_ot(instance: OTInstance) -> np.ndarray:
    n = instance.n
    W = instance.W
    cells, flows = _northwest_corner(instance.r, instance.c)
    basis = _Basis(n, cells, flows)
    degenerate_run = 0
    bland = False
    max_pivots = 200 * n * n + 1000
    for _ in range(max_pivots):
        u, v = basis.duals(W)
        reduced = W - u[:, None] - v[None, :]
        for cell in basis.flow:
            reduced[cell] = 0.0  # kill float noise on basic cells
        if bland:
            neg = np.flatnonzero(reduced.ravel() < -REDUCED_COST_TOL)
            if neg.size == 0:
                break
            flat = int(neg[0])
        else:
            flat = int(np.argmin(reduced.ravel()))
            if reduced.ravel()[flat] >= -REDUCED_COST_TOL:
                break
        ei, ej = divmod(flat, n)
        cycle = basis.cycle_with(ei, ej)
        # leaving arc: smallest flow among the minus-signed arcs,
        # ties by smallest (i, j) for determinism / Bland
        minus = [(cell, basis.flow[cell]) for cell, sign in cycle if sign < 0]
        if not minus:
            raise NumericFailure("unbounded pivot in transportation simplex")
        theta = min(f for _, f in minus)
        leaving = min(cell for cell, f in minus if f <= theta + 1e-15)
        basis.pivot(cycle, (ei, ej), leaving, theta)
        if theta <= 1e-15:
            degenerate_run += 1
            if degenerate_run > 50:
                bland = True  # anti-cycling: Bland's rule until progress
        else:
            degenerate_run = 0
            bland = False
    else:
        raise NumericFailure("transportation simplex exceeded pivot budget")
    P = np.zeros((n, n))
    for (i, j), f in basis.flow.items():
        P[i, j] = max(f, 0.0)
    return P


def exact_ot(instance: OTInstance, n_limit: int = 64) -> OracleResult:
    """Exact optimum of the transport LP via the transportation simplex.

    Deterministic given the instance. Raises when n exceeds n_limit (the
    method is dense and meant for ground-truth at benchmark sizes).
    """
    if instance.n > n_limit:
        raise ValueError(f"n = {instance.n} exceeds oracle limit {n_limit}")
    P = _simplex_ot(instance)
    plan = TransportPlan.from_matrix(P, instance.r, instance.c)
    return OracleResult(value=transport_cost(instance, plan), plan=plan,
                        method="simplex")
