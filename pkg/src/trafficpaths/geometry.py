"""Points, balls, ball regions and covering constructions.

Points are plain numpy arrays of length 2 or 3.  A Ball is a euclidean
ball with a closure flag; a BallRegion is a finite boolean combination
of balls restricted to the shapes the rest of the toolkit actually
needs: unions, set-difference chains (the last ball minus the open
preceding ones) and complements of either.

Covering constructions: a greedy Vitali-style cover of a finite compact
set by balls of radius below a third of the mesh, and a cover of a
finite null set by balls whose radii sum below a budget, whose spheres
avoid a prescribed atom list and which cut only a small amount of the
energy of two given paths.  Radii are nudged by multiplicative factors
in (1, 1 + 1e-6] when a sphere would hit an atom exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

ON_SPHERE_TOL = 1e-9
PARAM_TOL = 1e-12


def as_point(p) -> np.ndarray:
    q = np.asarray(p, dtype=float)
    if q.ndim != 1 or q.shape[0] not in (2, 3):
        raise ValueError("points must be 1-d arrays of length 2 or 3")
    return q


@dataclass(frozen=True)
class Ball:
    """Euclidean ball; ``closed`` selects closure or interior."""

    center: np.ndarray
    radius: float
    closed: bool = True

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    def contains(self, p) -> bool:
        d = float(np.linalg.norm(as_point(p) - self.center))
        return d <= self.radius if self.closed else d < self.radius

    def on_sphere(self, p, tol: float = ON_SPHERE_TOL) -> bool:
        d = float(np.linalg.norm(as_point(p) - self.center))
        return abs(d - self.radius) <= tol

    def open_copy(self) -> "Ball":
        return replace(self, closed=False)

    def closed_copy(self) -> "Ball":
        return replace(self, closed=True)


@dataclass(frozen=True)
class BallRegion:
    """Union of balls, or a difference-chain cell, optionally complemented.

    kind "union": membership in any term.  kind "cell": membership in the
    last term minus the open interiors of all earlier terms, which is the
    shape of the cells carved out of an ordered ball cover.
    """

    terms: tuple
    kind: str = "union"
    complement: bool = False

    def __post_init__(self):
        if self.kind not in ("union", "cell"):
            raise ValueError("region kind must be 'union' or 'cell'")
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ValueError("region needs at least one ball")

    @staticmethod
    def union_of(balls: Iterable[Ball], complement: bool = False) -> "BallRegion":
        return BallRegion(tuple(balls), "union", complement)

    @staticmethod
    def cell(index: int, balls: Sequence[Ball], complement: bool = False) -> "BallRegion":
        """Cell number ``index`` of an ordered cover: B_i minus earlier open balls."""
        if not 0 <= index < len(balls):
            raise ValueError("cell index out of range")
        chain = tuple(balls[:index]) + (balls[index],)
        return BallRegion(chain, "cell", complement)

    def complemented(self) -> "BallRegion":
        return replace(self, complement=not self.complement)

    def contains(self, p) -> bool:
        q = as_point(p)
        if self.kind == "union":
            inside = any(b.contains(q) for b in self.terms)
        else:
            # difference chains always subtract the open interiors
            inside = self.terms[-1].contains(q) and not any(
                b.open_copy().contains(q) for b in self.terms[:-1]
            )
        return inside != self.complement

    def spheres(self) -> list[Ball]:
        return list(self.terms)


def segment_sphere_params(a, b, ball: Ball) -> list[float]:
    """Parameters t in (0,1) where a + t(b-a) crosses the sphere of ``ball``.

    Tangential touches (discriminant below 1e-30) are dropped; they do not
    change membership on either side.
    """
    a = as_point(a)
    b = as_point(b)
    u = b - a
    w = a - ball.center
    A = float(u @ u)
    if A <= PARAM_TOL ** 2:
        return []
    B = 2.0 * float(u @ w)
    C = float(w @ w) - ball.radius ** 2
    disc = B * B - 4.0 * A * C
    if disc <= 1e-30:
        return []
    sq = np.sqrt(disc)
    # stable pairing of roots: avoid cancellation between -B and the root
    q = -0.5 * (B + np.copysign(sq, B if B != 0 else 1.0))
    roots = []
    if abs(q) > 0:
        roots = [q / A, C / q]
    else:
        roots = [-B / (2 * A)]
    out = sorted(t for t in roots if PARAM_TOL < t < 1.0 - PARAM_TOL)
    dedup: list[float] = []
    for t in out:
        if not dedup or t - dedup[-1] > PARAM_TOL:
            dedup.append(float(t))
    return dedup


def project_to_ball(p, ball: Ball) -> np.ndarray:
    """Nearest-point projection onto the closed ball.  1-Lipschitz, identity inside."""
    q = as_point(p)
    v = q - ball.center
    d = float(np.linalg.norm(v))
    if d <= ball.radius:
        return q.copy()
    return ball.center + v * (ball.radius / d)


def cover_compact(points: Sequence, r: float, ambient_radius: float) -> list[Ball]:
    """Greedy ball cover of a finite point set at mesh ``r``.

    Centers are taken from the set itself in lexicographic order and each
    ball gets radius 0.3*r, strictly below r/3.  Uncovered points found
    later become new centers, so accepted centers are pairwise more than
    0.3*r apart; packing disjoint r/20-balls at those centers shows the
    count never exceeds packing_bound(ambient_radius, r, d).
    """
    if not r > 0:
        raise ValueError("cover mesh r must be positive")
    pts = [as_point(p) for p in points]
    if not pts:
        return []
    for p in pts:
        if np.linalg.norm(p) > ambient_radius + ON_SPHERE_TOL:
            raise ValueError("point outside ambient ball")
    order = sorted(range(len(pts)), key=lambda i: tuple(pts[i]))
    rho = 0.3 * r
    balls: list[Ball] = []
    for i in order:
        p = pts[i]
        if any(np.linalg.norm(p - b.center) <= b.radius for b in balls):
            continue
        balls.append(Ball(p, rho, closed=True))
    return balls


def packing_bound(ambient_radius: float, r: float, dim: int) -> int:
    """Greedy count of disjoint open r/20-balls with centers within r of the ambient ball.

    Centers are scanned over a square grid of spacing r/10; two balls of
    radius r/20 are disjoint exactly when their centers are at least r/10
    apart, so grid points themselves form a valid packing and the count is
    the number of grid points inside the enlarged ambient ball.
    """
    if dim not in (2, 3):
        raise ValueError("dimension must be 2 or 3")
    R = ambient_radius + r
    step = r / 10.0
    n = int(np.floor(R / step))
    count = 0
    rng = range(-n, n + 1)
    if dim == 2:
        for i in rng:
            for j in rng:
                if (i * i + j * j) * step * step <= R * R:
                    count += 1
    else:
        for i in rng:
            for j in rng:
                for k in rng:
                    if (i * i + j * j + k * k) * step * step <= R * R:
                        count += 1
    return count


def _perturbed_radius(base: float, forbidden: Sequence[np.ndarray], center: np.ndarray,
                      rng: np.random.Generator, retries: int = 64) -> float:
    """Radius in (base, base*(1+1e-6)] whose sphere avoids all forbidden atoms."""
    for _ in range(retries):
        rad = base * (1.0 + float(rng.uniform(0.0, 1.0)) * 1e-6)
        ball = Ball(center, rad)
        if not any(ball.on_sphere(p) for p in forbidden):
            return rad
    raise RuntimeError("covering infeasible at tolerance: sphere keeps hitting atoms")


def cover_null_set(points: Sequence, path, opt_path, boundary_atoms: Sequence,
                   eps: float, alpha: float) -> list[Ball]:
    """Cover a finite set by balls with small radii sum and small cut energy.

    Guarantees on success: radii sum strictly below eps, the alpha-mass of
    both given paths restricted to the closed union is below eps, and no
    atom from ``boundary_atoms`` lies on any sphere (radii are perturbed
    multiplicatively, at most 64 retries per ball).  Base radii are halved
    up to 60 times to meet the energy budget before giving up.
    """
    from . import currents  # local import: geometry stays import-light

    pts = [as_point(p) for p in points]
    if not pts:
        return []
    if not eps > 0:
        raise ValueError("eps must be positive")
    atoms = [as_point(p) for p in boundary_atoms]
    rng = np.random.default_rng(20260816)
    base = 0.45 * eps / len(pts)
    for _ in range(60):
        try:
            balls = [Ball(p, _perturbed_radius(base, atoms, p, rng)) for p in pts]
        except RuntimeError:
            base *= 0.5
            continue
        if sum(b.radius for b in balls) >= eps:
            base *= 0.5
            continue
        region = BallRegion.union_of(balls)
        ok = True
        for t in (path, opt_path):
            if t is not None and currents.alpha_mass(currents.restrict(t, region), alpha) >= eps:
                ok = False
                break
        if ok:
            return balls
        base *= 0.5
    raise RuntimeError("covering infeasible at tolerance")
