"""Gilbert-Steiner optimization: exact desk-scale oracle and local search.

The oracle enumerates full binary tree topologies over the terminal
atoms (at most six), with the classical edge-insertion recursion, so
(2k-5)!! trees for k terminals.  On a tree the edge flows are forced
by mass balance; positions of the auxiliary branch points are then a
convex problem, solved by damped Weiszfeld sweeps.  Degenerate optima
are reached through collisions (branch points landing on terminals or
each other are contracted at 1e-7) and through zero-flow edges, which
cost nothing and realize disconnected optima inside a tree topology,
so forests and atom splittings need no separate enumeration.  As a
safeguard the oracle also verifies that rerouting any single curve of
the result along its straight chord does not improve the cost.

alpha = 0 is accepted as the pure Steiner-tree mode: every edge with
nonzero flow gets unit weight, which is the Fermat-point regime.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import currents, decomposition as dcmp
from .currents import AtomicMeasure, TrafficPath

COLLISION_TOL = 1e-7
FLOW_TOL = 1e-12
ORACLE_MAX_ATOMS = 6


class OracleRangeError(ValueError):
    """Instance too large for exhaustive topology enumeration."""


class OptimizeError(RuntimeError):
    """Position descent failed to converge; carries the best iterate."""

    def __init__(self, message: str, best):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class Topology:
    """Tree over terminals (fixed, signed masses) and free branch points."""

    terminal_points: np.ndarray
    terminal_masses: np.ndarray
    steiner_points: np.ndarray
    edges: tuple  # of (a, b) indices into [terminals | steiner]

    @property
    def n_terminals(self) -> int:
        return len(self.terminal_masses)

    @property
    def dim(self) -> int:
        return self.terminal_points.shape[1]

    def positions(self) -> np.ndarray:
        if len(self.steiner_points):
            return np.vstack([self.terminal_points, self.steiner_points])
        return self.terminal_points.copy()

    def with_steiner(self, pts: np.ndarray) -> "Topology":
        return Topology(self.terminal_points, self.terminal_masses,
                        np.asarray(pts, dtype=float).reshape(-1, self.dim), self.edges)

    def flows(self) -> list[float]:
        """Signed flow per edge (positive in the a -> b direction), forced by balance."""
        n = self.n_terminals + len(self.steiner_points)
        ib = np.zeros(n)
        ib[: self.n_terminals] = self.terminal_masses
        deg = np.zeros(n, dtype=int)
        adj: dict[int, list[int]] = {}
        for e, (a, b) in enumerate(self.edges):
            deg[a] += 1
            deg[b] += 1
            adj.setdefault(a, []).append(e)
            adj.setdefault(b, []).append(e)
        flows = [0.0] * len(self.edges)
        removed_e = [False] * len(self.edges)
        removed_v = [False] * n
        queue = [v for v in range(n) if deg[v] == 1]
        while queue:
            v = queue.pop()
            if removed_v[v]:
                continue
            live = [e for e in adj.get(v, ()) if not removed_e[e]]
            if not live:
                removed_v[v] = True
                continue
            e = live[0]
            a, b = self.edges[e]
            u = b if a == v else a
            flows[e] = ib[v] if v == b else -ib[v]
            ib[u] += ib[v]
            removed_e[e] = True
            removed_v[v] = True
            deg[u] -= 1
            if deg[u] == 1:
                queue.append(u)
        return flows

    def cost(self, alpha: float) -> float:
        pos = self.positions()
        total = 0.0
        for (a, b), f in zip(self.edges, self.flows()):
            th = abs(f)
            if th <= FLOW_TOL:
                continue
            w = 1.0 if alpha == 0.0 else th ** alpha
            total += w * float(np.linalg.norm(pos[a] - pos[b]))
        return total

    def to_traffic_path(self) -> TrafficPath:
        pos = self.positions()
        segs = []
        for (a, b), f in zip(self.edges, self.flows()):
            if abs(f) <= FLOW_TOL:
                continue
            if f > 0:
                segs.append((pos[a], pos[b], f))
            else:
                segs.append((pos[b], pos[a], -f))
        return currents.overlay(segs, dim=self.dim) if segs else currents.empty_path(self.dim)


def enumerate_topologies(k: int) -> list[tuple]:
    """All full binary tree edge sets on terminals 0..k-1; branch points are k, k+1, ...

    Built by inserting terminals one at a time into every existing edge;
    yields (2k-5)!! trees for k >= 3, one bare edge for k = 2.
    """
    if k < 2:
        raise ValueError("need at least two terminals")
    if k == 2:
        return [((0, 1),)]
    trees = [[(0, 1)]]
    for t in range(2, k):
        nxt = []
        for tree in trees:
            s = k + (t - 2)  # next branch point index
            for e_idx, (a, b) in enumerate(tree):
                new_tree = tree[: e_idx] + tree[e_idx + 1:]
                new_tree = new_tree + [(a, s), (s, b), (s, t)]
                nxt.append(new_tree)
        trees = nxt
    return [tuple(tree) for tree in trees]


def _descend_graph(pos: np.ndarray, edges, weights, free_mask, tol: float,
                   max_iters: int) -> tuple[np.ndarray, float, bool]:
    """Damped Weiszfeld sweeps on the free vertices of a weighted graph.

    Each free vertex moves to the weighted geometric median of its
    neighbors, with step halving whenever the local objective would not
    decrease; returns (positions, objective, converged).
    """
    pos = pos.copy()
    nbrs: dict[int, list[tuple[int, float]]] = {}
    for (a, b), w in zip(edges, weights):
        if w <= 0:
            continue
        nbrs.setdefault(a, []).append((b, w))
        nbrs.setdefault(b, []).append((a, w))

    kept = [(a, b, w) for (a, b), w in zip(edges, weights) if w > 0]
    if not kept:
        return pos, 0.0, True
    ea = np.array([a for a, _, _ in kept], dtype=int)
    eb = np.array([b for _, b, _ in kept], dtype=int)
    ew = np.array([w for _, _, w in kept])

    def total() -> float:
        return float(ew @ np.linalg.norm(pos[ea] - pos[eb], axis=1))

    free = [v for v in range(len(pos)) if free_mask[v] and v in nbrs]
    if not free:
        return pos, total(), True
    nbr_idx = {v: np.array([u for u, _ in nbrs[v]], dtype=int) for v in free}
    nbr_w = {v: np.array([w for _, w in nbrs[v]]) for v in free}
    obj = total()
    for _ in range(max_iters):
        for v in free:
            x = pos[v]
            nbr_pos = pos[nbr_idx[v]]
            wv = nbr_w[v]
            diff = nbr_pos - x
            dist = np.linalg.norm(diff, axis=1)
            far = dist >= 1e-12
            coincident_w = float(wv[~far].sum())
            if not far.any():
                continue
            inv = wv[far] / dist[far]
            den = float(inv.sum())
            cand = (inv @ nbr_pos[far]) / den
            if coincident_w > 0.0:
                pull = inv @ diff[far]
                if float(np.linalg.norm(pull)) <= coincident_w + 1e-15:
                    continue  # stuck on a neighbor and the subgradient says stay
            before = float(wv[far] @ dist[far])
            step = cand - x
            for _ in range(40):
                trial = x + step
                if float(wv @ np.linalg.norm(nbr_pos - trial, axis=1)) <= before + 1e-15:
                    pos[v] = trial
                    break
                step *= 0.5
        new_obj = total()
        if abs(obj - new_obj) <= tol * max(1.0, abs(obj)):
            return pos, new_obj, True
        obj = new_obj
    return pos, obj, False


def optimize_positions(topology: Topology, alpha: float, tol: float = 1e-10,
                       max_iters: int = 10000) -> tuple[Topology, float]:
    """Convex position stage for a fixed topology: minimize the weighted length.

    Raises OptimizeError (with the best iterate attached) if the damped
    sweeps have not met the relative-change tolerance after max_iters.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    k = topology.n_terminals
    n = k + len(topology.steiner_points)
    pos = topology.positions()
    weights = []
    for f in topology.flows():
        th = abs(f)
        weights.append(0.0 if th <= FLOW_TOL else (1.0 if alpha == 0.0 else th ** alpha))
    free = [v >= k for v in range(n)]
    out, obj, converged = _descend_graph(pos, topology.edges, weights, free, tol, max_iters)
    result = topology.with_steiner(out[k:]) if n > k else topology
    if not converged:
        raise OptimizeError("position descent did not converge", result)
    return result, obj


def _merged_terminals(mu_minus: AtomicMeasure, mu_plus: AtomicMeasure):
    net = mu_plus - mu_minus
    if abs(net.total()) > 1e-9:
        raise ValueError("marginals must balance")
    return net


def _tree_key(edges) -> tuple:
    return tuple(sorted((min(a, b), max(a, b)) for a, b in edges))


def _contracted_path(topology: Topology) -> TrafficPath:
    """Traffic path of a topology with near-coincident vertices contracted."""
    pos = topology.positions()
    n = len(pos)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(n):
        for j in range(i + 1, n):
            if float(np.linalg.norm(pos[i] - pos[j])) <= COLLISION_TOL:
                parent[find(j)] = find(i)
    segs = []
    for (a, b), f in zip(topology.edges, topology.flows()):
        ra, rb = find(a), find(b)
        if ra == rb or abs(f) <= FLOW_TOL:
            continue
        if f > 0:
            segs.append((pos[ra], pos[rb], f))
        else:
            segs.append((pos[rb], pos[ra], -f))
    if not segs:
        return currents.empty_path(topology.dim)
    return currents.overlay(segs, dim=topology.dim)


def _reroute_pass(t: TrafficPath, alpha: float) -> TrafficPath:
    """Replace single curves by their straight chord while that helps."""
    if alpha == 0.0:
        return t
    for _ in range(20):
        improved = False
        base = currents.alpha_mass(t, alpha)
        pi = dcmp.good_decomposition(dcmp.remove_cycles(t))
        for c, w in sorted(pi.entries, key=lambda e: -e[1] * e[0].length()):
            chord = currents.from_segments([(c.start(), c.end(), w)], dim=t.dim)
            removed = currents.overlay(
                t.segments() + [(b, a, w) for a, b in c.segments()], dim=t.dim)
            cand = currents.add(removed, chord)
            if currents.alpha_mass(cand, alpha) < base - 1e-12:
                t = dcmp.remove_cycles(cand)
                improved = True
                break
        if not improved:
            return t
    return t


def brute_force_optimal(mu_minus: AtomicMeasure, mu_plus: AtomicMeasure, alpha: float,
                        tol: float = 1e-9) -> TrafficPath:
    """Exhaustive Gilbert-Steiner oracle for instances of at most six atoms."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    net = _merged_terminals(mu_minus, mu_plus)
    k = len(net.masses)
    if k == 0:
        dim = mu_minus.dim if mu_minus.points.size else mu_plus.dim
        return currents.empty_path(dim)
    if k > ORACLE_MAX_ATOMS:
        raise OracleRangeError("instance exceeds oracle bound of six atoms")
    if k == 1:
        raise ValueError("marginals must balance")
    dim = net.dim
    best = None
    for edges in enumerate_topologies(k):
        n_steiner = max((max(a, b) for a, b in edges), default=0) + 1 - k
        n_steiner = max(n_steiner, 0)
        init = np.mean(net.points, axis=0) + np.zeros((n_steiner, dim))
        if n_steiner:
            # spread the starting branch points to break coincidence
            rng = np.random.default_rng(7)
            init = init + 1e-3 * rng.standard_normal((n_steiner, dim))
        topo = Topology(net.points.copy(), net.masses.copy(), init, edges)
        try:
            topo, cost = optimize_positions(topo, alpha)
        except OptimizeError as err:
            topo = err.best
            cost = topo.cost(alpha)
        key = (cost, _tree_key(edges))
        if best is None or key < best[0]:
            best = (key, topo)
    path = _contracted_path(best[1])
    path = dcmp.remove_cycles(path)
    return _reroute_pass(path, alpha)


@dataclass(frozen=True)
class OptimalityReport:
    optimal: bool
    gap: float
    path_cost: float
    oracle_cost: float

    def __bool__(self) -> bool:
        return self.optimal


def is_optimal(t: TrafficPath, alpha: float, tol: float = 1e-6) -> OptimalityReport:
    """Compare a path against the oracle on its own boundary."""
    bnd = currents.boundary(t)
    opt = brute_force_optimal(bnd.negative_part(), bnd.positive_part(), alpha, tol)
    path_cost = currents.alpha_mass(t, alpha) if alpha > 0 else _steiner_cost(t)
    oracle_cost = currents.alpha_mass(opt, alpha) if alpha > 0 else _steiner_cost(opt)
    gap = path_cost - oracle_cost
    return OptimalityReport(gap <= tol, gap, path_cost, oracle_cost)


def _steiner_cost(t: TrafficPath) -> float:
    return sum(float(np.linalg.norm(b - a)) for a, b, _ in t.segments())


def _graph_descent_path(t: TrafficPath, bnd_points: list[np.ndarray], alpha: float
                        ) -> TrafficPath:
    """Weiszfeld descent on every non-boundary vertex of a path."""
    if t.is_empty():
        return t
    pos = t.vertices.copy()
    fixed = []
    for v in range(len(pos)):
        fixed.append(any(float(np.linalg.norm(pos[v] - p)) <= 1e-9 for p in bnd_points))
    edges = [(i, j) for i, j, _ in t.edges]
    weights = [(1.0 if alpha == 0.0 else th ** alpha) for _, _, th in t.edges]
    out, _, _ = _descend_graph(pos, edges, weights, [not f for f in fixed], 1e-10, 2000)
    segs = [(out[i], out[j], th) for i, j, th in t.edges]
    return currents.overlay(segs, dim=t.dim)


def _branch_insertion(t: TrafficPath, alpha: float, bnd_points) -> TrafficPath | None:
    """Try a Y-split at a vertex with two same-direction edges; best improver or None."""
    base = currents.alpha_mass(t, alpha)
    best = None
    for v in range(len(t.vertices)):
        out_e = [(i, j, th) for i, j, th in t.edges if i == v]
        in_e = [(i, j, th) for i, j, th in t.edges if j == v]
        for bundle, outgoing in ((out_e, True), (in_e, False)):
            for (e1, e2) in itertools.combinations(bundle, 2):
                other1 = e1[1] if outgoing else e1[0]
                other2 = e2[1] if outgoing else e2[0]
                mid = 0.5 * (t.vertices[other1] + t.vertices[other2])
                u = t.vertices[v] + 0.25 * (mid - t.vertices[v])
                segs = [(t.vertices[i], t.vertices[j], th) for i, j, th in t.edges
                        if (i, j, th) not in (e1, e2)]
                if outgoing:
                    segs.append((t.vertices[v], u, e1[2] + e2[2]))
                    segs.append((u, t.vertices[other1], e1[2]))
                    segs.append((u, t.vertices[other2], e2[2]))
                else:
                    segs.append((u, t.vertices[v], e1[2] + e2[2]))
                    segs.append((t.vertices[other1], u, e1[2]))
                    segs.append((t.vertices[other2], u, e2[2]))
                cand = currents.overlay(segs, dim=t.dim)
                cand = _graph_descent_path(cand, bnd_points, alpha)
                cost = currents.alpha_mass(cand, alpha)
                if cost < base - 1e-12 and (best is None or cost < best[0]):
                    best = (cost, cand)
    return best[1] if best else None


def _direct_init(mu_minus: AtomicMeasure, mu_plus: AtomicMeasure) -> TrafficPath:
    """Straight-line greedy matching of sources to sinks."""
    supplies = [(p, m) for p, m in mu_minus.atoms()]
    demands = [(p, m) for p, m in mu_plus.atoms()]
    segs = []
    di = 0
    remaining = demands[0][1] if demands else 0.0
    for p, m in supplies:
        left = m
        while left > FLOW_TOL and di < len(demands):
            take = min(left, remaining)
            if take > FLOW_TOL:
                segs.append((p, demands[di][0], take))
            left -= take
            remaining -= take
            if remaining <= FLOW_TOL:
                di += 1
                remaining = demands[di][1] if di < len(demands) else 0.0
    return currents.overlay(segs, dim=mu_minus.dim)


def local_search(mu_minus: AtomicMeasure, mu_plus: AtomicMeasure, alpha: float,
                 init: TrafficPath | None = None, budget: int = 60) -> TrafficPath:
    """Improvement loop: descent, branch insertion, chord reroutes, contraction.

    Each accepted move strictly lowers the cost; the boundary is preserved
    throughout.  No optimality promise, but on oracle-range instances the
    tests compare the final cost against the exhaustive optimum.
    """
    _merged_terminals(mu_minus, mu_plus)
    t = init if init is not None else _direct_init(mu_minus, mu_plus)
    t = dcmp.remove_cycles(t)
    bnd_points = [p for p, _ in currents.boundary(t).atoms()]
    t = _graph_descent_path(t, bnd_points, alpha)
    for _ in range(budget):
        cost = currents.alpha_mass(t, alpha)
        cand = _branch_insertion(t, alpha, bnd_points)
        if cand is not None and currents.alpha_mass(cand, alpha) < cost - 1e-12:
            t = dcmp.remove_cycles(cand)
            continue
        cand = _reroute_pass(t, alpha)
        if currents.alpha_mass(cand, alpha) < cost - 1e-12:
            t = _graph_descent_path(cand, bnd_points, alpha)
            continue
        break
    return t
