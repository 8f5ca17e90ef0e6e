"""Flat norms: exact for atomic 0-currents, grid-relaxed for 1-currents.

The flat norm of a signed atomic measure is the cheapest way to write
it as (remainder) + (boundary of a 1-current): moving a unit of mass
over distance L costs L, leaving it in the remainder costs 1.  That is
a small transshipment problem and is solved exactly as a linear
program on the bipartite atom graph augmented with destroy arcs.

For 1-currents in the plane the flat distance is relaxed onto a square
grid complex: both paths are rasterized to 1-chains (snapped staircase
walks), and the norm min M(t - d s) + M(s) over 2-chains s is an LP in
the face variables.  The rasterization error is reported alongside the
value: each segment of multiplicity theta contributes at most
theta * (2h * length + sqrt(2) * h).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from . import currents
from .currents import AtomicMeasure, TrafficPath


def flat_norm_0(measure: AtomicMeasure) -> float:
    """Flat norm of a signed atomic measure (move at cost distance, destroy at cost 1)."""
    pos = measure.positive_part()
    neg = measure.negative_part()
    n, m = len(pos.masses), len(neg.masses)
    if n == 0 and m == 0:
        return 0.0
    if n == 0:
        return neg.tv()
    if m == 0:
        return pos.tv()
    # balanced transport with one dummy node per side; dummy-dummy is free
    supply = np.concatenate([pos.masses, [neg.tv()]])
    demand = np.concatenate([neg.masses, [pos.tv()]])
    cost = np.ones((n + 1, m + 1))
    for i in range(n):
        for j in range(m):
            cost[i, j] = float(np.linalg.norm(pos.points[i] - neg.points[j]))
    cost[n, m] = 0.0
    nv = (n + 1) * (m + 1)
    rows, cols, vals = [], [], []
    for i in range(n + 1):
        for j in range(m + 1):
            k = i * (m + 1) + j
            rows.append(i)
            cols.append(k)
            vals.append(1.0)
            rows.append(n + 1 + j)
            cols.append(k)
            vals.append(1.0)
    a_eq = sparse.coo_matrix((vals, (rows, cols)), shape=(n + m + 2, nv))
    b_eq = np.concatenate([supply, demand])
    res = linprog(cost.ravel(), A_eq=a_eq.tocsr(), b_eq=b_eq,
                  bounds=[(0, None)] * nv, method="highs")
    if not res.success:
        raise RuntimeError("transshipment LP failed: " + str(res.message))
    return float(res.fun)


def weak_star_gap(mu_n: AtomicMeasure, mu: AtomicMeasure) -> float:
    """Flat-norm gap between two measures; metrizes weak-* convergence at bounded mass."""
    return flat_norm_0(mu_n - mu)


@dataclass(frozen=True)
class GridComplex:
    """Regular square grid complex on a box, d = 2 only.

    Vertices v(i,j) at (x0 + i h, y0 + j h); horizontal edges run +x,
    vertical edges run +y; face (i,j) has boundary bottom + right - top
    - left, so the boundary of a boundary vanishes identically.
    """

    x0: float
    y0: float
    nx: int
    ny: int
    h: float

    @staticmethod
    def from_box(xmin: float, ymin: float, xmax: float, ymax: float, h: float) -> "GridComplex":
        if not h > 0:
            raise ValueError("grid spacing must be positive")
        nx = max(1, int(math.ceil((xmax - xmin) / h - 1e-9)))
        ny = max(1, int(math.ceil((ymax - ymin) / h - 1e-9)))
        return GridComplex(float(xmin), float(ymin), nx, ny, float(h))

    @property
    def n_hedges(self) -> int:
        return self.nx * (self.ny + 1)

    @property
    def n_vedges(self) -> int:
        return (self.nx + 1) * self.ny

    @property
    def n_edges(self) -> int:
        return self.n_hedges + self.n_vedges

    @property
    def n_faces(self) -> int:
        return self.nx * self.ny

    def hedge(self, i: int, j: int) -> int:
        return j * self.nx + i

    def vedge(self, i: int, j: int) -> int:
        return self.n_hedges + j * (self.nx + 1) + i

    def vertex_point(self, i: int, j: int) -> np.ndarray:
        return np.array([self.x0 + i * self.h, self.y0 + j * self.h])

    def snap(self, p) -> tuple[int, int]:
        i = int(round((float(p[0]) - self.x0) / self.h))
        j = int(round((float(p[1]) - self.y0) / self.h))
        return min(max(i, 0), self.nx), min(max(j, 0), self.ny)

    def contains(self, p, slack: float = 1e-9) -> bool:
        return (self.x0 - slack <= float(p[0]) <= self.x0 + self.nx * self.h + slack
                and self.y0 - slack <= float(p[1]) <= self.y0 + self.ny * self.h + slack)

    def boundary_matrix(self) -> sparse.csr_matrix:
        """Edge x face incidence of the 2-chain boundary operator."""
        rows, cols, vals = [], [], []
        for j in range(self.ny):
            for i in range(self.nx):
                f = j * self.nx + i
                rows.extend([self.hedge(i, j), self.vedge(i + 1, j),
                             self.hedge(i, j + 1), self.vedge(i, j)])
                cols.extend([f, f, f, f])
                vals.extend([1.0, 1.0, -1.0, -1.0])
        return sparse.coo_matrix((vals, (rows, cols)),
                                 shape=(self.n_edges, self.n_faces)).tocsr()

    def edge_boundary_matrix(self) -> sparse.csr_matrix:
        """Vertex x edge incidence (head +1, tail -1); used to check d d = 0."""
        nvert = (self.nx + 1) * (self.ny + 1)

        def vid(i, j):
            return j * (self.nx + 1) + i

        rows, cols, vals = [], [], []
        for j in range(self.ny + 1):
            for i in range(self.nx):
                e = self.hedge(i, j)
                rows.extend([vid(i + 1, j), vid(i, j)])
                cols.extend([e, e])
                vals.extend([1.0, -1.0])
        for j in range(self.ny):
            for i in range(self.nx + 1):
                e = self.vedge(i, j)
                rows.extend([vid(i, j + 1), vid(i, j)])
                cols.extend([e, e])
                vals.extend([1.0, -1.0])
        return sparse.coo_matrix((vals, (rows, cols)),
                                 shape=(nvert, self.n_edges)).tocsr()


def _rasterize_segment(grid: GridComplex, chain: np.ndarray, a, b, theta: float) -> None:
    i, j = grid.snap(a)
    ti, tj = grid.snap(b)
    av, bv = np.asarray(a, float), np.asarray(b, float)
    direction = bv - av
    norm = float(np.linalg.norm(direction))

    def line_dist(p: np.ndarray) -> float:
        if norm < 1e-15:
            return float(np.linalg.norm(p - av))
        rel = p - av
        return abs(direction[0] * rel[1] - direction[1] * rel[0]) / norm

    while (i, j) != (ti, tj):
        step_x = (1 if ti > i else -1) if i != ti else 0
        step_y = (1 if tj > j else -1) if j != tj else 0
        take_x = step_x != 0
        if step_x != 0 and step_y != 0:
            dx = line_dist(grid.vertex_point(i + step_x, j))
            dy = line_dist(grid.vertex_point(i, j + step_y))
            take_x = dx <= dy
        if take_x:
            e = grid.hedge(min(i, i + step_x), j)
            chain[e] += theta * step_x
            i += step_x
        else:
            e = grid.vedge(i, min(j, j + step_y))
            chain[e] += theta * step_y
            j += step_y


def rasterize(grid: GridComplex, t: TrafficPath) -> tuple[np.ndarray, float]:
    """1-chain of a planar path on the grid, plus its flat error bound."""
    if t.dim != 2:
        raise ValueError("grid rasterization is planar only")
    chain = np.zeros(grid.n_edges)
    err = 0.0
    for a, b, th in t.segments():
        if not (grid.contains(a) and grid.contains(b)):
            raise ValueError("path exits grid box")
        _rasterize_segment(grid, chain, a, b, th)
        err += abs(th) * (2.0 * grid.h * float(np.linalg.norm(np.asarray(b) - np.asarray(a)))
                          + math.sqrt(2.0) * grid.h)
    return chain, err


def flat_chain_norm(grid: GridComplex, t_chain: np.ndarray) -> float:
    """min over 2-chains s of M(t - d s) + M(s) on the grid complex (an LP)."""
    ne, nf = grid.n_edges, grid.n_faces
    B = grid.boundary_matrix()
    # variables: u+ u- (edge residual split), v+ v- (face split), all >= 0
    c = np.concatenate([np.full(ne, grid.h), np.full(ne, grid.h),
                        np.full(nf, grid.h ** 2), np.full(nf, grid.h ** 2)])
    eye = sparse.identity(ne, format="csr")
    a_eq = sparse.hstack([eye, -eye, B, -B], format="csr")
    res = linprog(c, A_eq=a_eq, b_eq=t_chain, bounds=[(0, None)] * (2 * ne + 2 * nf),
                  method="highs")
    if not res.success:
        raise RuntimeError("flat norm LP failed: " + str(res.message))
    return float(res.fun)


def flat_distance_1(t1: TrafficPath, t2: TrafficPath, grid: GridComplex
                    ) -> tuple[float, float]:
    """Grid flat distance between two planar paths and its rasterization error bound."""
    chain1, err1 = rasterize(grid, t1)
    chain2, err2 = rasterize(grid, t2)
    return flat_chain_norm(grid, chain1 - chain2), err1 + err2
