"""Stability laboratory: converging marginals, competitor surgery, lemma checks.

Three layers live here.  `quantize` and `run_stability_trial` produce
sequences of atomic marginals converging to a target, solve every
instance with the exhaustive optimizer, and report whether the costs
stay bounded, the boundary gaps shrink monotonically and the limit
instance is solved optimally.  `build_competitor` performs the cut,
connect, scale and return surgery that assembles a strictly cheaper
admissible path from a deliberately suboptimal one, with a full energy
ledger of every budget it has to respect.  `check_quasi_additivity`
and `check_high_multiplicity_lsc` probe the two auxiliary inequalities
(near-additivity of the cost for multiplicities of different scale,
and thresholded lower semicontinuity) on concrete inputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import constructors, currents, metrics, optimizer
from . import decomposition as dcmp
from .currents import AtomicMeasure, Config, TrafficPath
from .decomposition import Curve, PathMeasure
from .geometry import Ball, BallRegion

GOLDEN = 0.6180339887498949
BOUNDARY_TOL = 1e-9


# ---------------------------------------------------------------------------
# quantization of target measures


@dataclass(frozen=True)
class TargetSpec:
    """Family of atomic approximations of a target measure.

    kind "points": fixed atoms, optionally shifted by perturbation/n along
    a fixed per-atom unit direction (so the gap decreases exactly like 1/n).
    kind "cantor": middle-thirds mass at refinement level n, 2^n atoms on a
    segment of the given length starting at origin.
    """

    kind: str = "points"
    atoms: tuple = ()
    perturbation: float = 0.0
    origin: tuple = (0.0, 0.0)
    length: float = 1.0
    mass: float = 1.0
    axis: tuple | None = None
    seed: int = 0

    def dim(self) -> int:
        if self.kind == "points":
            if not self.atoms:
                raise ValueError("points target needs at least one atom")
            return len(self.atoms[0][0])
        return len(self.origin)


def _shift_direction(k: int, seed: int, dim: int) -> np.ndarray:
    t = math.fmod((k + 1) * GOLDEN + (seed % 9973) * GOLDEN * GOLDEN, 1.0)
    if dim == 2:
        ang = 2.0 * math.pi * t
        return np.array([math.cos(ang), math.sin(ang)])
    z = 1.0 - 2.0 * t
    r = math.sqrt(max(0.0, 1.0 - z * z))
    ang = 2.0 * math.pi * math.fmod((k + 1) * GOLDEN * GOLDEN + (seed % 9973) * GOLDEN, 1.0)
    return np.array([r * math.cos(ang), r * math.sin(ang), z])


def quantize(spec: TargetSpec, n: int) -> AtomicMeasure:
    """Level-n atomic approximation; total mass is preserved exactly."""
    if n < 0:
        raise ValueError("refinement level must be nonnegative")
    if spec.kind == "points":
        d = spec.dim()
        out = []
        for k, (p, m) in enumerate(spec.atoms):
            q = np.asarray(p, dtype=float)
            if n > 0 and spec.perturbation != 0.0:
                q = q + (spec.perturbation / n) * _shift_direction(k, spec.seed, d)
            out.append((q, float(m)))
        return AtomicMeasure.from_atoms(out, dim=d)
    if spec.kind == "cantor":
        d = spec.dim()
        origin = np.asarray(spec.origin, dtype=float)
        axis = np.zeros(d)
        axis[0] = 1.0
        if spec.axis is not None:
            axis = np.asarray(spec.axis, dtype=float)
            axis = axis / np.linalg.norm(axis)
        starts = [0.0]
        ln = 1.0
        for _ in range(n):
            starts = [s for s0 in starts for s in (s0, s0 + 2.0 * ln / 3.0)]
            ln /= 3.0
        w = spec.mass / len(starts)
        out = [(origin + spec.length * (s + ln / 2.0) * axis, w) for s in starts]
        return AtomicMeasure.from_atoms(out, dim=d)
    raise ValueError(f"unknown target kind: {spec.kind}")


def target_from_dict(d: dict, seed: int = 0) -> TargetSpec:
    if not isinstance(d, dict):
        raise ValueError("target spec must be an object")
    kind = d.get("kind", "points")
    if kind == "points":
        raw = d.get("atoms")
        if not isinstance(raw, list) or not raw:
            raise ValueError("target spec field 'atoms' must be a nonempty list")
        atoms = []
        for a in raw:
            if "point" not in a or "mass" not in a:
                raise ValueError("atom entries need 'point' and 'mass' fields")
            atoms.append((tuple(float(x) for x in a["point"]), float(a["mass"])))
        return TargetSpec(kind="points", atoms=tuple(atoms),
                          perturbation=float(d.get("perturbation", 0.0)), seed=seed)
    if kind == "cantor":
        return TargetSpec(kind="cantor", origin=tuple(d.get("origin", (0.0, 0.0))),
                          length=float(d.get("length", 1.0)),
                          mass=float(d.get("mass", 1.0)),
                          axis=tuple(d["axis"]) if "axis" in d else None, seed=seed)
    raise ValueError(f"unknown target kind: {kind}")


# ---------------------------------------------------------------------------
# experiment configuration


@dataclass(frozen=True)
class ExperimentConfig:
    config: Config
    minus: TargetSpec
    plus: TargetSpec
    schedule: tuple
    seed: int = 0
    optimality_tol: float = 1e-4
    convergence_tol: float = 5e-2
    grid_step: float = 0.25

    def __post_init__(self):
        if not self.config.sphere_reduction_ok():
            raise ValueError("alpha below the stability threshold for this dimension")
        if not self.schedule:
            raise ValueError("schedule must be nonempty")
        supp_m = quantize(self.minus, 0)
        supp_p = quantize(self.plus, 0)
        gap = min(float(np.linalg.norm(p - q))
                  for p, _ in supp_m.atoms() for q, _ in supp_p.atoms())
        if gap <= 1e-9:
            raise ValueError("source and sink targets must have disjoint supports")


def experiment_from_dict(d: dict) -> ExperimentConfig:
    for key in ("alpha", "dimension", "mu_minus", "mu_plus", "schedule"):
        if key not in d:
            raise ValueError(f"missing field: {key}")
    cfg = Config(alpha=float(d["alpha"]), dimension=int(d["dimension"]),
                 ambient_radius=float(d.get("ambient_radius", 4.0)))
    seed = int(d.get("seed", 0))
    schedule = tuple(int(n) for n in d["schedule"])
    if any(n < 0 for n in schedule):
        raise ValueError("field 'schedule' must contain nonnegative integers")
    return ExperimentConfig(
        config=cfg,
        minus=target_from_dict(d["mu_minus"], seed=seed),
        plus=target_from_dict(d["mu_plus"], seed=seed + 1),
        schedule=schedule,
        seed=seed,
        optimality_tol=float(d.get("optimality_tol", 1e-4)),
        convergence_tol=float(d.get("convergence_tol", 5e-2)),
        grid_step=float(d.get("grid_step", 0.25)),
    )


def load_experiment(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return experiment_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# stability trials


@dataclass(frozen=True)
class TrialRow:
    n: int
    cost: float
    gap_minus: float
    gap_plus: float
    flat_gap: float
    atoms_minus: int
    atoms_plus: int


@dataclass(frozen=True)
class TrialReport:
    alpha: float
    dimension: int
    rows: tuple
    limit_cost: float
    limit_path: TrafficPath
    optimal_gap: float
    flat_gap_kind: str
    truncation_error: float
    verdicts: dict
    notes: tuple


def _limit_level(spec: TargetSpec, schedule) -> int:
    # countable-support targets are truncated to the deepest scheduled level
    return max(schedule) if spec.kind == "cantor" else 0


def run_stability_trial(cfg: ExperimentConfig) -> TrialReport:
    """Solve every scheduled instance and compare against the limit instance."""
    alpha = cfg.config.alpha
    d = cfg.config.dimension
    notes = []

    lvl_m = _limit_level(cfg.minus, cfg.schedule)
    lvl_p = _limit_level(cfg.plus, cfg.schedule)
    truncation = 0.0
    if cfg.minus.kind == "cantor":
        truncation += cfg.minus.mass * 3.0 ** (-lvl_m)
    if cfg.plus.kind == "cantor":
        truncation += cfg.plus.mass * 3.0 ** (-lvl_p)
    if truncation:
        notes.append("limit measures truncated; tolerance widened by the "
                     "quantization error %.3g" % truncation)

    limit_minus = quantize(cfg.minus, lvl_m)
    limit_plus = quantize(cfg.plus, lvl_p)

    def solve(mm: AtomicMeasure, mp: AtomicMeasure, n) -> TrafficPath:
        if len(mm.masses) + len(mp.masses) > optimizer.ORACLE_MAX_ATOMS:
            raise optimizer.OracleRangeError(f"oracle range exceeded at n={n}")
        return optimizer.brute_force_optimal(mm, mp, alpha)

    t_limit = solve(limit_minus, limit_plus, max(lvl_m, lvl_p))
    limit_cost = currents.alpha_mass(t_limit, alpha)

    grid = None
    if d == 2:
        r = cfg.config.ambient_radius
        grid = metrics.GridComplex.from_box(-r, -r, r, r, cfg.grid_step)
        flat_kind = "grid-flat-upper"
    else:
        flat_kind = "mass-surrogate"
        notes.append("dimension 3: path convergence witnessed only by the "
                     "mass surrogate, not a true flat distance")

    rows = []
    for n in cfg.schedule:
        mm = quantize(cfg.minus, n)
        mp = quantize(cfg.plus, n)
        t_n = solve(mm, mp, n)
        cost_n = currents.alpha_mass(t_n, alpha)
        gm = metrics.weak_star_gap(mm, limit_minus)
        gp = metrics.weak_star_gap(mp, limit_plus)
        if grid is not None:
            value, err = metrics.flat_distance_1(t_n, t_limit, grid)
            fg = value + err
        else:
            fg = currents.mass(currents.subtract(t_n, t_limit))
        rows.append(TrialRow(n=n, cost=cost_n, gap_minus=gm, gap_plus=gp,
                             flat_gap=fg, atoms_minus=len(mm.masses),
                             atoms_plus=len(mp.masses)))

    costs = [r.cost for r in rows]
    costs_bounded = max(costs) <= 2.0 * (limit_cost + 1.0)
    tail = [r for r in rows if r.n >= 8]
    gaps_monotone = all(
        b.gap_minus <= a.gap_minus + 1e-12 and b.gap_plus <= a.gap_plus + 1e-12
        for a, b in zip(tail, tail[1:]))
    opt = optimizer.is_optimal(t_limit, alpha, tol=cfg.optimality_tol + truncation)
    tol = cfg.convergence_tol + truncation
    liminf_ok = min(costs[-2:]) >= limit_cost - tol
    converged = abs(costs[-1] - limit_cost) <= tol
    verdicts = {
        "costs_bounded": bool(costs_bounded),
        "gaps_monotone": bool(gaps_monotone),
        "limit_optimal": bool(opt.optimal),
        "liminf_ok": bool(liminf_ok),
        "converged": bool(converged),
    }
    verdicts["optimal"] = all(verdicts.values())
    return TrialReport(alpha=alpha, dimension=d, rows=tuple(rows),
                       limit_cost=limit_cost, limit_path=t_limit,
                       optimal_gap=opt.gap, flat_gap_kind=flat_kind,
                       truncation_error=truncation, verdicts=verdicts,
                       notes=tuple(notes))


CSV_COLUMNS = ("n", "cost_n", "boundary_gap_minus", "boundary_gap_plus",
               "flat_gap_T", "costs_bounded", "gaps_monotone", "limit_optimal",
               "liminf_ok", "converged")


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return "%.12g" % x
    return str(x)


def report_csv(report: TrialReport) -> str:
    lines = [",".join(CSV_COLUMNS)]
    v = report.verdicts
    flags = [v["costs_bounded"], v["gaps_monotone"], v["limit_optimal"],
             v["liminf_ok"], v["converged"]]
    for r in report.rows:
        cells = [r.n, r.cost, r.gap_minus, r.gap_plus, r.flat_gap] + flags
        lines.append(",".join(_fmt(c) for c in cells))
    return "\n".join(lines) + "\n"


def report_json_dict(report: TrialReport) -> dict:
    return {
        "alpha": report.alpha,
        "dimension": report.dimension,
        "rows": [{"n": r.n, "cost_n": r.cost, "boundary_gap_minus": r.gap_minus,
                  "boundary_gap_plus": r.gap_plus, "flat_gap_T": r.flat_gap,
                  "atoms_minus": r.atoms_minus, "atoms_plus": r.atoms_plus}
                 for r in report.rows],
        "limit_cost": report.limit_cost,
        "optimal_gap": report.optimal_gap,
        "flat_gap_kind": report.flat_gap_kind,
        "truncation_error": report.truncation_error,
        "verdicts": report.verdicts,
        "notes": list(report.notes),
    }


# ---------------------------------------------------------------------------
# competitor construction


@dataclass(frozen=True)
class CompetitorConfig:
    """Surgery budget: energy gap, smallness parameters, cover truncation."""

    Delta: float
    eps1: float
    eps2: float
    delta: float
    N_minus: int
    N_plus: int

    def __post_init__(self):
        for name in ("Delta", "eps1", "eps2", "delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.N_minus < 1 or self.N_plus < 1:
            raise ValueError("cover truncation counts must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> "CompetitorConfig":
        for key in ("Delta", "eps1", "eps2", "delta", "N_minus", "N_plus"):
            if key not in d:
                raise ValueError(f"missing field: {key}")
        return cls(Delta=float(d["Delta"]), eps1=float(d["eps1"]),
                   eps2=float(d["eps2"]), delta=float(d["delta"]),
                   N_minus=int(d["N_minus"]), N_plus=int(d["N_plus"]))


@dataclass(frozen=True)
class CompetitorReport:
    competitor: TrafficPath
    tilde_sel: TrafficPath
    boundary_error_sel: float
    boundary_error_full: float
    alpha_ratios_minus: tuple
    alpha_ratios_plus: tuple
    ledger: dict
    checks: dict
    ok: bool


def _sign_covers(covers) -> tuple:
    if isinstance(covers, dict):
        try:
            return list(covers["minus"]), list(covers["plus"])
        except KeyError as exc:
            raise ValueError("covers must provide 'minus' and 'plus' ball lists") from exc
    if hasattr(covers, "minus") and hasattr(covers, "plus"):
        return list(covers.minus), list(covers.plus)
    pair = tuple(covers)
    if len(pair) != 2:
        raise ValueError("covers must provide 'minus' and 'plus' ball lists")
    return list(pair[0]), list(pair[1])


def _cell_of(point, cells, limit) -> int | None:
    for i in range(min(limit, len(cells))):
        if cells[i].cell.contains(point):
            return i
    return None


def _cell_mass(measure: AtomicMeasure, cell) -> float:
    return sum(m for p, m in measure.atoms() if cell.contains(p))


def _open_region(ball: Ball) -> BallRegion:
    return BallRegion.union_of([ball.open_copy()])


def build_competitor(t_n: TrafficPath, pi_n: PathMeasure, t_opt: TrafficPath,
                     pi_opt: PathMeasure, covers, cc: CompetitorConfig,
                     alpha: float) -> CompetitorReport:
    """Assemble the cut-connect-scale-return competitor and audit its budgets.

    The curves of t_n that start and end inside the truncated covers are
    kept only up to the first exit from the start ball and from the last
    entry into the end ball; a scaled copy of the optimal path bridges
    the middle; transports along each cover sphere hand the cut mass to
    that copy; the scaled copy's excess boundary is returned by a cheap
    sub-transport running backwards along it.  The report carries the
    assembled paths, both boundary identity errors, the per-budget
    energy ledger and all precondition checks.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    d = t_n.dim
    c_meas = constructors.SPHERE_CONSTANT[d]
    balls_minus, balls_plus = _sign_covers(covers)
    if cc.N_minus > len(balls_minus) or cc.N_plus > len(balls_plus):
        raise ValueError("cover truncation count exceeds the cover size")
    nm, np_ = cc.N_minus, cc.N_plus
    one2 = 1.0 + cc.eps2

    mass_tn = currents.alpha_mass(t_n, alpha)
    mass_topt = currents.alpha_mass(t_opt, alpha)
    c_energy = max(mass_tn, mass_topt)

    # smallness budget: every violated constraint is reported at once
    viol = []
    if not cc.eps2 <= cc.delta / 2.0:
        viol.append("eps2 <= delta/2")
    if not c_energy * cc.eps1 ** (1.0 - alpha) <= cc.delta / 2.0:
        viol.append("C*eps1^(1-alpha) <= delta/2")
    if not cc.eps1 <= cc.delta / 4.0:
        viol.append("eps1 <= delta/4")
    if not 16.0 * cc.eps1 ** alpha * c_energy <= cc.delta ** alpha * cc.Delta:
        viol.append("16*eps1^alpha*C <= delta^alpha*Delta")
    if viol:
        raise ValueError("smallness constraints violated: " + ", ".join(viol))

    bnd_opt = currents.boundary(t_opt)
    mu_minus, mu_plus = bnd_opt.negative_part(), bnd_opt.positive_part()
    bnd_n = currents.boundary(t_n)
    mun_minus, mun_plus = bnd_n.negative_part(), bnd_n.positive_part()

    # cover geometry preconditions
    all_balls = balls_minus + balls_plus
    for a in range(len(all_balls)):
        for b in range(a + 1, len(all_balls)):
            ba, bb = all_balls[a], all_balls[b]
            if float(np.linalg.norm(ba.center - bb.center)) <= ba.radius + bb.radius:
                raise ValueError("cover closures are not pairwise disjoint")
    sum_r_minus = sum(b.radius for b in balls_minus)
    sum_r_plus = sum(b.radius for b in balls_plus)
    r_budget = cc.Delta / (128.0 * c_meas)
    if sum_r_minus >= r_budget or sum_r_plus >= r_budget:
        raise ValueError("cover radii too large for the energy gap")
    for measure in (mu_minus, mu_plus, mun_minus, mun_plus):
        for p, _ in measure.atoms():
            for b in balls_minus + balls_plus:
                if abs(float(np.linalg.norm(p - b.center)) - b.radius) <= 1e-9:
                    raise ValueError("marginal atom sits on a cover sphere")

    u_minus = BallRegion.union_of(balls_minus[:nm])
    u_plus = BallRegion.union_of(balls_plus[:np_])
    u_all = BallRegion.union_of(balls_minus[:nm] + balls_plus[:np_])
    energy_in_cover = {
        "n_minus": currents.alpha_mass(currents.restrict(t_n, u_minus), alpha),
        "n_plus": currents.alpha_mass(currents.restrict(t_n, u_plus), alpha),
        "opt_minus": currents.alpha_mass(currents.restrict(t_opt, u_minus), alpha),
        "opt_plus": currents.alpha_mass(currents.restrict(t_opt, u_plus), alpha),
    }
    if max(energy_in_cover.values()) > cc.Delta / 128.0:
        raise ValueError("cover captures too much energy for the gap budget")

    # truncation captures nearly all source/sink mass
    if _cell_mass(mu_minus, u_minus) <= mu_minus.total() - cc.eps1 / 4.0:
        raise ValueError("cover truncation misses source mass")
    if _cell_mass(mu_plus, u_plus) <= mu_plus.total() - cc.eps1 / 4.0:
        raise ValueError("cover truncation misses sink mass")

    # approximating boundary close to the target boundary
    prox_minus = metrics.weak_star_gap(mun_minus, mu_minus)
    prox_plus = metrics.weak_star_gap(mun_plus, mu_plus)
    if max(prox_minus, prox_plus) > cc.eps2 + 1e-12:
        raise ValueError("approximating boundary too far from the target boundary")

    cells_minus = dcmp.cells_of_cover([b.open_copy() for b in balls_minus])
    cells_plus = dcmp.cells_of_cover([b.open_copy() for b in balls_plus])

    # cell mass growth check (recorded; ratio range errors surface it too)
    growth_ok = True
    for i in range(nm):
        if _cell_mass(mun_minus, cells_minus[i].cell) > \
                one2 * _cell_mass(mu_minus, cells_minus[i].cell) + 1e-12:
            growth_ok = False
    for j in range(np_):
        if _cell_mass(mun_plus, cells_plus[j].cell) > \
                one2 * _cell_mass(mu_plus, cells_plus[j].cell) + 1e-12:
            growth_ok = False

    # mass of the approximation outside the truncated cells
    out_minus = mun_minus.total() - sum(
        _cell_mass(mun_minus, cells_minus[i].cell) for i in range(nm))
    out_plus = mun_plus.total() - sum(
        _cell_mass(mun_plus, cells_plus[j].cell) for j in range(np_))
    if max(out_minus, out_plus) > cc.eps1 / 2.0 + 1e-12:
        raise ValueError("too much approximating mass outside the truncated cells")

    # selection: curves starting and ending inside the truncated covers
    sel, rest = [], []
    for c, w in pi_n.entries:
        i = _cell_of(c.start(), cells_minus, nm)
        j = _cell_of(c.end(), cells_plus, np_)
        if i is None or j is None:
            rest.append((c, w))
        else:
            sel.append((c, w, i, j))

    sel_minus_segs, sel_plus_segs, sel_full_segs = [], [], []
    exit_atoms: dict[int, list] = {}
    entry_atoms: dict[int, list] = {}
    for c, w, i, j in sel:
        for a, b in c.segments():
            sel_full_segs.append((a, b, w))
        s_exit = dcmp.first_exit(c, _open_region(balls_minus[i]))
        if not math.isfinite(s_exit):
            raise ValueError("selected curve never leaves its start ball")
        head = dcmp.restrict_curve(c, 0.0, s_exit)
        if head is None:
            raise ValueError("selected curve collapsed at its start ball")
        for a, b in head.segments():
            sel_minus_segs.append((a, b, w))
        exit_atoms.setdefault(i, []).append((head.end(), w))
        e_entry = dcmp.last_entry(c, _open_region(balls_plus[j]))
        tail = dcmp.restrict_curve(c, e_entry, c.length())
        if tail is None:
            raise ValueError("selected curve collapsed at its end ball")
        for a, b in tail.segments():
            sel_plus_segs.append((a, b, w))
        entry_atoms.setdefault(j, []).append((tail.start(), w))

    # optimal path: restriction strictly between the two covers
    restr_pieces = []
    opt_exit: dict[int, list] = {}
    opt_entry: dict[int, list] = {}
    for c, w in pi_opt.entries:
        i = _cell_of(c.start(), cells_minus, len(cells_minus))
        j = _cell_of(c.end(), cells_plus, len(cells_plus))
        if i is None or j is None:
            raise ValueError("optimal decomposition endpoint not covered")
        a = dcmp.first_exit(c, _open_region(balls_minus[i]))
        b = dcmp.last_entry(c, _open_region(balls_plus[j]))
        if not math.isfinite(a) or a >= b - 1e-12:
            raise ValueError("optimal curve window degenerate")
        piece = dcmp.restrict_curve(c, a, b)
        if piece is None:
            raise ValueError("optimal curve window degenerate")
        restr_pieces.append((piece, w))
        opt_exit.setdefault(i, []).append((piece.start(), w))
        opt_entry.setdefault(j, []).append((piece.end(), w))

    # hand-off ratios and sphere transports
    def connectors(side: str):
        if side == "minus":
            balls, cut_groups, opt_groups, limit = balls_minus, exit_atoms, opt_exit, nm
        else:
            balls, cut_groups, opt_groups, limit = balls_plus, entry_atoms, opt_entry, np_
        ratios, paths, per_costs, per_bounds = [], [], [], []
        for k in range(len(balls)):
            w_cut = sum(w for _, w in cut_groups.get(k, []))
            m_opt = sum(w for _, w in opt_groups.get(k, []))
            if m_opt <= 1e-12:
                if w_cut > 1e-12:
                    raise ValueError(
                        f"sphere ratio undefined on {side} ball {k}: "
                        "no optimal mass crosses it")
                ratios.append(0.0)
                continue
            rk = w_cut / (one2 * m_opt)
            if rk > 1.0 + 1e-9:
                raise ValueError(
                    f"sphere ratio out of [0,1] on {side} ball {k}: "
                    "cell mass growth precondition failed")
            rk = min(max(rk, 0.0), 1.0)
            ratios.append(rk)
            if k >= limit or w_cut <= 1e-12:
                continue
            cut_m = AtomicMeasure.from_atoms(cut_groups[k], dim=d)
            scaled = AtomicMeasure.from_atoms(
                [(p, rk * one2 * w) for p, w in opt_groups[k]], dim=d)
            if side == "minus":
                conn = constructors.sphere_transport(cut_m, scaled, balls[k], alpha)
            else:
                conn = constructors.sphere_transport(scaled, cut_m, balls[k], alpha)
            paths.append(conn)
            per_costs.append(currents.alpha_mass(conn, alpha))
            per_bounds.append(c_meas * w_cut ** alpha * balls[k].radius)
        return ratios, paths, per_costs, per_bounds

    ratios_minus, conns_minus, costs_minus, bounds_minus = connectors("minus")
    ratios_plus, conns_plus, costs_plus, bounds_plus = connectors("plus")

    # excess boundary of the scaled optimal middle, to be walked back
    nu_excess_minus, nu_excess_plus = [], []
    for k, group in opt_exit.items():
        leftover = one2 * (1.0 - (ratios_minus[k] if k < len(ratios_minus) else 0.0))
        for p, w in group:
            if leftover * w > 1e-15:
                nu_excess_minus.append((p, leftover * w))
    for k, group in opt_entry.items():
        leftover = one2 * (1.0 - (ratios_plus[k] if k < len(ratios_plus) else 0.0))
        for p, w in group:
            if leftover * w > 1e-15:
                nu_excess_plus.append((p, leftover * w))
    nu_back_sink = AtomicMeasure.from_atoms(nu_excess_minus, dim=d)
    nu_back_source = AtomicMeasure.from_atoms(nu_excess_plus, dim=d)

    scaled_restr_segs = [(a, b, one2 * w) for piece, w in restr_pieces
                         for a, b in piece.segments()]
    scaled_restr = currents.overlay(scaled_restr_segs, dim=d)
    excess_total = nu_back_sink.total()
    if abs(excess_total - nu_back_source.total()) > BOUNDARY_TOL:
        raise ValueError("excess boundary masses do not balance")
    if excess_total > 1e-12:
        scaled_pi = PathMeasure(tuple((piece, one2 * w) for piece, w in restr_pieces))
        forward = constructors.cheap_subtransport(
            scaled_restr, scaled_pi, nu_back_sink, nu_back_source,
            eps=max(cc.eps1 + cc.eps2, excess_total * (1.0 + 1e-9)), alpha=alpha)
        t_back = currents.reverse(forward)
    else:
        t_back = currents.empty_path(d)
    back_cost = currents.alpha_mass(t_back, alpha)

    # assembly
    tilde_segs = list(sel_minus_segs)
    for conn in conns_minus:
        tilde_segs.extend(conn.segments())
    tilde_segs.extend(scaled_restr.segments())
    tilde_segs.extend(t_back.segments())
    for conn in conns_plus:
        tilde_segs.extend(conn.segments())
    tilde_segs.extend(sel_plus_segs)
    t_tilde = currents.overlay(tilde_segs, dim=d)

    t_sel = currents.overlay(sel_full_segs, dim=d) if sel_full_segs \
        else currents.empty_path(d)
    err_sel = (currents.boundary(t_tilde) - currents.boundary(t_sel)).tv()

    rest_segs = [(a, b, w) for c, w in rest for a, b in c.segments()]
    t_bar = currents.overlay(tilde_segs + rest_segs, dim=d)
    err_full = (currents.boundary(t_bar) - bnd_n).tv()

    # energy ledger
    u_c = BallRegion.union_of(balls_minus[:nm] + balls_plus[:np_], complement=True)
    outside_cost = currents.alpha_mass(currents.restrict(t_tilde, u_c), alpha)
    sel_minus_path = currents.overlay(sel_minus_segs, dim=d) if sel_minus_segs \
        else currents.empty_path(d)
    sel_plus_path = currents.overlay(sel_plus_segs, dim=d) if sel_plus_segs \
        else currents.empty_path(d)
    inside_minus = currents.alpha_mass(currents.restrict(
        currents.subtract(t_tilde, sel_minus_path), u_minus), alpha)
    inside_plus = currents.alpha_mass(currents.restrict(
        currents.subtract(t_tilde, sel_plus_path), u_plus), alpha)
    competitor_cost = currents.alpha_mass(t_bar, alpha)

    conn_cost_minus = sum(costs_minus)
    conn_cost_plus = sum(costs_plus)
    ledger = {
        "cost_t_n": mass_tn,
        "cost_t_opt": mass_topt,
        "Delta": cc.Delta,
        "energy_gap": mass_tn - mass_topt,
        "cover_radius_sum_minus": sum_r_minus,
        "cover_radius_sum_plus": sum_r_plus,
        "cover_radius_budget": r_budget,
        "cover_energy_n_minus": energy_in_cover["n_minus"],
        "cover_energy_n_plus": energy_in_cover["n_plus"],
        "cover_energy_opt_minus": energy_in_cover["opt_minus"],
        "cover_energy_opt_plus": energy_in_cover["opt_plus"],
        "connector_cost_minus": conn_cost_minus,
        "connector_cost_plus": conn_cost_plus,
        "back_transport_cost": back_cost,
        "excess_mass": excess_total,
        "outside_cost": outside_cost,
        "outside_budget": mass_topt + cc.Delta / 4.0,
        "inside_minus_cost": inside_minus,
        "inside_plus_cost": inside_plus,
        "inside_budget": cc.Delta / 32.0,
        "competitor_cost": competitor_cost,
        "conclusion_budget": mass_tn - cc.Delta / 8.0,
        "selected_weight": sum(w for _, w, _, _ in sel),
        "unselected_weight": sum(w for _, w in rest),
    }
    checks = {
        "cell_mass_growth": growth_ok,
        "boundary_sel_exact": err_sel <= BOUNDARY_TOL,
        "boundary_full_exact": err_full <= BOUNDARY_TOL,
        "connector_bounds": all(c <= b + 1e-9 for c, b in
                                zip(costs_minus + costs_plus,
                                    bounds_minus + bounds_plus)),
        "connector_budget_minus": conn_cost_minus <= cc.Delta / 128.0 + 1e-12,
        "connector_budget_plus": conn_cost_plus <= cc.Delta / 128.0 + 1e-12,
        "back_budget": back_cost <= cc.Delta / 128.0 + 1e-12,
        "outside_budget": outside_cost <= mass_topt + cc.Delta / 4.0 + 1e-12,
        "inside_budget_minus": inside_minus <= cc.Delta / 32.0 + 1e-12,
        "inside_budget_plus": inside_plus <= cc.Delta / 32.0 + 1e-12,
    }
    ledger["gap_hypothesis"] = ledger["energy_gap"] >= cc.Delta
    ledger["improves"] = competitor_cost < mass_tn
    ledger["conclusion"] = competitor_cost <= ledger["conclusion_budget"]
    return CompetitorReport(
        competitor=t_bar, tilde_sel=t_tilde, boundary_error_sel=err_sel,
        boundary_error_full=err_full,
        alpha_ratios_minus=tuple(ratios_minus), alpha_ratios_plus=tuple(ratios_plus),
        ledger=ledger, checks=checks, ok=all(checks.values()))


def competitor_json_dict(report: CompetitorReport) -> dict:
    return {
        "boundary_error_sel": report.boundary_error_sel,
        "boundary_error_full": report.boundary_error_full,
        "alpha_ratios_minus": list(report.alpha_ratios_minus),
        "alpha_ratios_plus": list(report.alpha_ratios_plus),
        "ledger": {k: v for k, v in report.ledger.items()},
        "checks": {k: bool(v) for k, v in report.checks.items()},
        "ok": report.ok,
    }


# ---------------------------------------------------------------------------
# lemma checks


def _line_params(a: np.ndarray, b: np.ndarray):
    u, p0 = currents._canonical_line(a, b)
    return u, p0, float((a - p0) @ u), float((b - p0) @ u)


def _shared_pieces(t1: TrafficPath, t2: TrafficPath):
    """Collinear overlap pieces of two paths: (theta1, theta2, length)."""
    out = []
    segs2 = []
    for a, b, th in t2.segments():
        segs2.append((_line_params(a, b), abs(th)))
    for a, b, th1 in t1.segments():
        (u1, p01, s1a, s1b) = _line_params(a, b)
        lo1, hi1 = min(s1a, s1b), max(s1a, s1b)
        for (u2, p02, s2a, s2b), th2 in segs2:
            if float(np.linalg.norm(u1 - u2)) > 1e-9:
                continue
            if float(np.linalg.norm(p01 - p02)) > 1e-9:
                continue
            lo = max(lo1, min(s2a, s2b))
            hi = min(hi1, max(s2a, s2b))
            if hi - lo > 1e-12:
                out.append((abs(th1), th2, hi - lo))
    return out


def check_quasi_additivity(t1: TrafficPath, t2: TrafficPath, eps: float,
                           alpha: float) -> bool:
    """Near-additivity of the cost when t1 is everywhere much thinner than t2.

    Requires eps in (0, 1/4) and multiplicity of t1 below eps times the
    multiplicity of t2 on every shared piece; under that hypothesis the
    returned inequality must hold, so a False return is a bug upstream.
    """
    if not 0.0 < eps < 0.25:
        raise ValueError("eps must lie in (0, 1/4)")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    for th1, th2, _ in _shared_pieces(t1, t2):
        if not th1 < eps * th2:
            raise ValueError("multiplicity hypothesis violated on a shared piece")
    lhs = (1.0 + 4.0 * eps ** alpha) * currents.alpha_mass(currents.add(t1, t2), alpha)
    rhs = currents.alpha_mass(t1, alpha) + currents.alpha_mass(t2, alpha)
    return lhs >= rhs - 1e-9


@dataclass(frozen=True)
class LscReport:
    delta_empirical: float
    delta_constructive: float
    delta0: float
    margin: float
    holds: bool
    energy_bound: float


def _thresholded(t: TrafficPath, delta: float) -> TrafficPath:
    segs = [(a, b, th) for a, b, th in t.segments() if th > delta]
    return currents.overlay(segs, dim=t.dim) if segs else currents.empty_path(t.dim)


def check_high_multiplicity_lsc(t: TrafficPath, t_seq, region: BallRegion,
                                eps: float) -> LscReport:
    """Thresholded semicontinuity: high-multiplicity parts carry the energy.

    Measures the plain semicontinuity margin delta0 on the sequence (with
    the conservative mass surrogate for the flat gap), solves
    delta + C*delta^(1-alpha) <= delta0 by bisection for the constructive
    threshold, and verifies the thresholded inequality at both the
    constructive and the largest empirically passing threshold.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    alpha_probe = 0.5  # the energy bound C only scales the excluded mass
    # C must dominate every alpha-mass in play; use mass as alpha=1 proxy
    c_bound = max([currents.mass(t)] + [currents.mass(s) for s in t_seq] + [1.0])
    v_ref = currents.alpha_mass(currents.restrict(t, region), alpha_probe)

    gaps = [currents.mass(currents.subtract(s, t)) for s in t_seq]
    values = [currents.alpha_mass(currents.restrict(s, region), alpha_probe)
              for s in t_seq]

    # plain-semicontinuity margin: the largest gap radius within which every
    # member still carries at least v_ref - eps/2 of restricted energy
    candidates = sorted(set(gaps)) + [max(gaps, default=0.0) + 1.0]
    delta0 = 0.0
    for cand in candidates:
        if all(v >= v_ref - eps / 2.0 - 1e-12
               for g, v in zip(gaps, values) if g <= cand):
            delta0 = cand

    def constraint(x: float) -> float:
        return x + c_bound * x ** (1.0 - alpha_probe)

    lo, hi = 0.0, max(delta0, 1e-12)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if constraint(mid) <= delta0:
            lo = mid
        else:
            hi = mid
    delta_star = lo

    def thresholded_ok(delta: float) -> tuple:
        worst = math.inf
        ok = True
        for s, g in zip(t_seq, gaps):
            if g > delta:
                continue
            val = currents.alpha_mass(
                currents.restrict(_thresholded(s, delta), region), alpha_probe)
            worst = min(worst, val - (v_ref - eps))
            if val < v_ref - eps - 1e-12:
                ok = False
        return ok, (0.0 if worst is math.inf else worst)

    holds, margin = thresholded_ok(delta_star)

    # largest empirically passing threshold over a candidate scan
    thetas = sorted({th for s in t_seq for _, _, th in s.segments()})
    scan = sorted(set(gaps) | set(thetas) | {delta_star})
    delta_emp = 0.0
    for cand in scan:
        if thresholded_ok(cand)[0]:
            delta_emp = max(delta_emp, cand)
    return LscReport(delta_empirical=delta_emp, delta_constructive=delta_star,
                     delta0=delta0, margin=margin, holds=holds,
                     energy_bound=c_bound)
