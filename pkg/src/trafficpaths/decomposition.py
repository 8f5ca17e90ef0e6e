"""Cycle removal, path decompositions and curve surgery.

A traffic path with balanced boundary decomposes into weighted simple
curves running from the negative boundary atoms to the positive ones,
with no mass cancellation: the path mass equals the weighted sum of
curve lengths and the boundary mass equals twice the total curve
weight.  The decomposition here extracts bottleneck walks on the
support digraph, which requires the input to be acyclic; remove_cycles
turns any path into an acyclic one with the same boundary and no more
mass.

Curve surgery: first_exit / last_entry locate the parameters where a
curve leaves a region for the first time or sits outside it for the
last time, restrict_curve clips to an arclength window, and cut_paths
applies those cuts to a whole decomposition against an ordered ball
cover, cell by cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import currents
from .geometry import Ball, BallRegion, as_point, segment_sphere_params

WEIGHT_TOL = 1e-12
BALANCE_TOL = 1e-9


@dataclass(frozen=True)
class Curve:
    """Polyline curve, parametrized by arclength from the first waypoint."""

    waypoints: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.waypoints, dtype=float)
        if w.ndim != 2 or w.shape[0] < 2:
            raise ValueError("curve needs at least two waypoints")
        steps = np.linalg.norm(np.diff(w, axis=0), axis=1)
        if np.any(steps <= WEIGHT_TOL):
            raise ValueError("curve has a zero-length step")
        object.__setattr__(self, "waypoints", w)
        object.__setattr__(self, "_cum", np.concatenate(([0.0], np.cumsum(steps))))

    @property
    def dim(self) -> int:
        return self.waypoints.shape[1]

    def length(self) -> float:
        return float(self._cum[-1])

    def start(self) -> np.ndarray:
        return self.waypoints[0]

    def end(self) -> np.ndarray:
        return self.waypoints[-1]

    def point_at(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.length())
        k = int(np.searchsorted(self._cum, s, side="right") - 1)
        k = min(k, len(self.waypoints) - 2)
        seg = self._cum[k + 1] - self._cum[k]
        t = (s - self._cum[k]) / seg
        return self.waypoints[k] + t * (self.waypoints[k + 1] - self.waypoints[k])

    def segments(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(self.waypoints[k], self.waypoints[k + 1])
                for k in range(len(self.waypoints) - 1)]


@dataclass(frozen=True)
class PathMeasure:
    """Finitely many weighted curves; weights strictly positive."""

    entries: tuple  # of (Curve, weight)

    def __post_init__(self):
        for _, w in self.entries:
            if not w > 0:
                raise ValueError("curve weights must be positive")

    def total_weight(self) -> float:
        return sum(w for _, w in self.entries)

    def start_measure(self) -> currents.AtomicMeasure:
        dim = self.entries[0][0].dim if self.entries else 2
        return currents.AtomicMeasure.from_atoms(
            [(c.start(), w) for c, w in self.entries], dim=dim)

    def end_measure(self) -> currents.AtomicMeasure:
        dim = self.entries[0][0].dim if self.entries else 2
        return currents.AtomicMeasure.from_atoms(
            [(c.end(), w) for c, w in self.entries], dim=dim)

    def scale(self, factor: float) -> "PathMeasure":
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return PathMeasure(tuple((c, w * factor) for c, w in self.entries))


def _find_cycle(n_vertices: int, adjacency: dict[int, list[int]]) -> list[int] | None:
    """A directed cycle as a vertex list, or None.  Iterative DFS."""
    color = {}
    parent = {}
    for root in adjacency:
        if color.get(root):
            continue
        stack = [(root, iter(adjacency.get(root, ())))]
        color[root] = 1
        while stack:
            v, it = stack[-1]
            advanced = False
            for w in it:
                if color.get(w, 0) == 0:
                    color[w] = 1
                    parent[w] = v
                    stack.append((w, iter(adjacency.get(w, ()))))
                    advanced = True
                    break
                if color.get(w) == 1:
                    cycle = [w, v]
                    u = v
                    while u != w:
                        u = parent[u]
                        cycle.append(u)
                    cycle.reverse()
                    return cycle[:-1]
            if not advanced:
                color[v] = 2
                stack.pop()
    return None


def remove_cycles(t: currents.TrafficPath) -> currents.TrafficPath:
    """Cancel directed cycles by subtracting their bottleneck multiplicity.

    Preserves the boundary exactly (cycles are boundaryless) and never
    increases mass; each pass deletes at least one edge, so it terminates.
    """
    flows = {(i, j): th for i, j, th in t.edges}
    while True:
        adj: dict[int, list[int]] = {}
        for (i, j), th in flows.items():
            if th > WEIGHT_TOL:
                adj.setdefault(i, []).append(j)
        cycle = _find_cycle(len(t.vertices), adj)
        if cycle is None:
            break
        edges = [(cycle[k], cycle[(k + 1) % len(cycle)]) for k in range(len(cycle))]
        bottleneck = min(flows[e] for e in edges)
        for e in edges:
            flows[e] -= bottleneck
            if flows[e] <= WEIGHT_TOL:
                del flows[e]
    segs = [(t.vertices[i], t.vertices[j], th) for (i, j), th in flows.items()]
    return currents.from_segments(segs, dim=t.dim)


def is_acyclic(t: currents.TrafficPath) -> bool:
    adj: dict[int, list[int]] = {}
    for i, j, _ in t.edges:
        adj.setdefault(i, []).append(j)
    return _find_cycle(len(t.vertices), adj) is None


def good_decomposition(t: currents.TrafficPath) -> PathMeasure:
    """Decompose an acyclic balanced path into weighted source-to-sink curves.

    Postconditions (pinned by tests): the weighted curve lengths add up to
    mass(t); the boundary splits as end-point measure minus start-point
    measure with total weight equal to half the boundary mass; each edge
    multiplicity is exactly the weight of curves through it.
    """
    if t.is_empty():
        return PathMeasure(())
    if not is_acyclic(t):
        raise ValueError("not acyclic")
    bnd = currents.boundary(t)
    if abs(bnd.total()) > BALANCE_TOL:
        raise ValueError("unbalanced boundary")

    net: dict[int, float] = {}
    for i, j, th in t.edges:
        net[j] = net.get(j, 0.0) + th
        net[i] = net.get(i, 0.0) - th
    deficit = {v: -m for v, m in net.items() if m < -WEIGHT_TOL}
    surplus = {v: m for v, m in net.items() if m > WEIGHT_TOL}
    flows = {(i, j): th for i, j, th in t.edges}
    out_adj: dict[int, list[int]] = {}
    for i, j, _ in t.edges:
        out_adj.setdefault(i, []).append(j)
    for v in out_adj:
        out_adj[v].sort(key=lambda j: tuple(t.vertices[j]))

    def next_hop(v: int) -> int | None:
        for j in out_adj.get(v, ()):
            if flows.get((v, j), 0.0) > WEIGHT_TOL:
                return j
        return None

    entries = []
    source_order = sorted(deficit, key=lambda v: tuple(t.vertices[v]))
    for s in source_order:
        while deficit.get(s, 0.0) > WEIGHT_TOL:
            walk = [s]
            v = s
            while True:
                j = next_hop(v)
                if j is None:
                    break
                walk.append(j)
                v = j
            if len(walk) < 2 or surplus.get(v, 0.0) <= WEIGHT_TOL:
                raise ValueError("flow conservation violated during extraction")
            w = min(deficit[s], surplus[v],
                    min(flows[(walk[k], walk[k + 1])] for k in range(len(walk) - 1)))
            for k in range(len(walk) - 1):
                flows[(walk[k], walk[k + 1])] -= w
            deficit[s] -= w
            surplus[v] -= w
            entries.append((Curve(t.vertices[list(walk)]), w))
    if any(d > BALANCE_TOL for d in deficit.values()):
        raise ValueError("decomposition failed to exhaust sources")
    if any(f > BALANCE_TOL for f in flows.values()):
        raise ValueError("decomposition left residual flow")
    return PathMeasure(tuple(entries))


def reconstruct(pi: PathMeasure, dim: int = 2) -> currents.TrafficPath:
    """Overlay of the weighted curves as a traffic path."""
    segs = []
    for c, w in pi.entries:
        for a, b in c.segments():
            segs.append((a, b, w))
    return currents.overlay(segs, dim=pi.entries[0][0].dim if pi.entries else dim)


def weight_through(pi: PathMeasure, point, tol: float = BALANCE_TOL) -> float:
    """Total weight of curves whose trace passes within tol of the point."""
    p = as_point(point)
    total = 0.0
    for c, w in pi.entries:
        hit = False
        for a, b in c.segments():
            u = b - a
            s = float(np.clip(((p - a) @ u) / float(u @ u), 0.0, 1.0))
            if float(np.linalg.norm(a + s * u - p)) <= tol:
                hit = True
                break
        if hit:
            total += w
    return total


def sub_decomposition(pi: PathMeasure, keep: Callable) -> tuple[PathMeasure, currents.TrafficPath]:
    """Filter entries by a predicate keep(curve, weight); also rebuild the path."""
    kept = tuple((c, w) for c, w in pi.entries if keep(c, w))
    sub = PathMeasure(kept)
    dim = pi.entries[0][0].dim if pi.entries else 2
    return sub, reconstruct(sub, dim=dim)


def _segment_params(c: Curve, region: BallRegion, k: int) -> list[float]:
    a, b = c.waypoints[k], c.waypoints[k + 1]
    out = set()
    for ball in region.spheres():
        out.update(segment_sphere_params(a, b, ball))
    return sorted(out)


def first_exit(c: Curve, region: BallRegion) -> float:
    """inf of arclengths where the curve sits outside the region; inf if never."""
    for k in range(len(c.waypoints) - 1):
        a, b = c.waypoints[k], c.waypoints[k + 1]
        base = float(c._cum[k])
        seg = float(c._cum[k + 1] - c._cum[k])
        locs = [0.0] + _segment_params(c, region, k) + [1.0]
        for lo, hi in zip(locs[:-1], locs[1:]):
            p_lo = a + lo * (b - a)
            if not region.contains(p_lo):
                return base + lo * seg
            mid = a + 0.5 * (lo + hi) * (b - a)
            if not region.contains(mid):
                # the open part just past lo is outside, so the infimum is lo
                return base + lo * seg
    if not region.contains(c.end()):
        return c.length()
    return math.inf


def last_entry(c: Curve, region: BallRegion) -> float:
    """sup of arclengths where the curve sits outside the region; 0 if always inside."""
    for k in range(len(c.waypoints) - 2, -1, -1):
        a, b = c.waypoints[k], c.waypoints[k + 1]
        base = float(c._cum[k])
        seg = float(c._cum[k + 1] - c._cum[k])
        locs = [0.0] + _segment_params(c, region, k) + [1.0]
        for lo, hi in zip(reversed(locs[:-1]), reversed(locs[1:])):
            p_hi = a + hi * (b - a)
            if not region.contains(p_hi):
                return base + hi * seg
            mid = a + 0.5 * (lo + hi) * (b - a)
            if not region.contains(mid):
                return base + hi * seg
    return 0.0


def restrict_curve(c: Curve, a: float, b: float) -> Curve | None:
    """Clip to the arclength window [a, b]; None when the window is empty."""
    if a > b + WEIGHT_TOL:
        raise ValueError("window start exceeds window end")
    a = max(a, 0.0)
    b = min(b, c.length())
    if b - a <= WEIGHT_TOL:
        return None
    pts = [c.point_at(a)]
    for k in range(len(c.waypoints)):
        s = float(c._cum[k])
        if a + WEIGHT_TOL < s < b - WEIGHT_TOL:
            pts.append(c.waypoints[k])
    pts.append(c.point_at(b))
    dedup = [pts[0]]
    for p in pts[1:]:
        if float(np.linalg.norm(p - dedup[-1])) > WEIGHT_TOL:
            dedup.append(p)
    if len(dedup) < 2:
        return None
    return Curve(np.array(dedup))


@dataclass(frozen=True)
class CellSpec:
    """One cell of an ordered ball cover together with its parent ball."""

    cell: BallRegion
    ball: Ball


def cells_of_cover(balls: Sequence[Ball]) -> list[CellSpec]:
    return [CellSpec(BallRegion.cell(i, list(balls)), balls[i]) for i in range(len(balls))]


def cut_curves(pi: PathMeasure, cells: Sequence[CellSpec], mode: str
               ) -> list[tuple[Curve, float, int]]:
    """Cut each curve against the ball of the cell its endpoint lands in.

    mode "from-start" keeps the piece from the start to the first exit of
    the open parent ball; "from-end" keeps the piece from the last entry
    into the open parent ball to the end.  Returns (curve, weight, cell
    index) triples; curves that degenerate to a point are dropped.
    """
    if mode not in ("from-start", "from-end"):
        raise ValueError("mode must be 'from-start' or 'from-end'")
    out = []
    for c, w in pi.entries:
        anchor = c.start() if mode == "from-start" else c.end()
        idx = -1
        for k, spec in enumerate(cells):
            if spec.cell.contains(anchor):
                idx = k
                break
        if idx < 0:
            raise ValueError("curve endpoint not in any cell")
        ball_region = BallRegion.union_of([cells[idx].ball.open_copy()])
        if mode == "from-start":
            cut = first_exit(c, ball_region)
            piece = restrict_curve(c, 0.0, cut if math.isfinite(cut) else c.length())
        else:
            cut = last_entry(c, ball_region)
            piece = restrict_curve(c, cut, c.length())
        if piece is not None:
            out.append((piece, w, idx))
    return out


def cut_paths(pi: PathMeasure, cells: Sequence[CellSpec], mode: str) -> currents.TrafficPath:
    """Traffic path assembled from the cut decomposition.

    Requires the start-point and end-point measures of the cut collection
    to have disjoint supports, which is what keeps the cut collection a
    good decomposition of its path.
    """
    triples = cut_curves(pi, cells, mode)
    pieces = PathMeasure(tuple((c, w) for c, w, _ in triples))
    starts = pieces.start_measure()
    ends = pieces.end_measure()
    for p, _ in starts.atoms():
        for q, _ in ends.atoms():
            if float(np.linalg.norm(p - q)) <= BALANCE_TOL:
                raise ValueError("mutually singular endpoints required")
    dim = pi.entries[0][0].dim if pi.entries else 2
    return reconstruct(pieces, dim=dim)
