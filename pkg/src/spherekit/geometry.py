"""Estimators and exact checkers for the geometric hypotheses: doubling,
dimension condition at the base point, uniform perfectness, annular
connectedness, Ahlfors regularity, the sub-Whitney covering, and an
empirical probe for the Poincaré constant.

Sampling conventions shared by the estimators:

* Every sample draws its randomness from a stream split off (seed, name,
  sample index), so estimates aggregated by max/min are order-free and a
  longer run extends a shorter one (same seed prefix).
* On a sphericalized space, ball measures use quasimetric balls (plus the
  exact closed form at ∞).  Quasimetric balls sandwich the chain-metric
  balls within a factor 4 in radius, and the chain-metric measures of the
  two agree up to the doubling constant, so bounded/unbounded verdicts and
  stability-across-truncation claims are unchanged while each ball costs
  one shortest-path row instead of a dense relay Dijkstra.  The exact
  chain-metric ball remains available on the sphericalization itself.
* "For all radii" claims of the continuum model become stability claims
  across a ladder of truncations, with factor-2 slack by default.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from ._util import dyadic_ladder, split_rng
from .space import INFINITY, Space, subspace_by_remoteness
from .sphere import SphericalizedSpace, sphericalize

__all__ = [
    "Estimate",
    "doubling_constant",
    "DimensionFit",
    "dimension_exponents",
    "PerfectnessResult",
    "uniform_perfectness",
    "AnnularResult",
    "annular_connectedness",
    "AhlforsEstimate",
    "ahlfors_regularity",
    "WhitneyCover",
    "whitney_cover",
    "PoincareEstimate",
    "poincare_probe",
    "make_test_battery",
    "NecessityReport",
    "necessity_experiment",
    "GeometryProfile",
]

SpaceLike = Union[Space, SphericalizedSpace]


# ---------------------------------------------------------------------------
# ball measures, shared by the sampled estimators
# ---------------------------------------------------------------------------

def _measure_tools(obj: SpaceLike):
    """(center ids, measure(center, r), scale of radii) for either space kind."""
    if isinstance(obj, SphericalizedSpace):
        ids = obj.base.ids

        def measure(center: str, r: float) -> float:
            return obj.quasi_ball_measure(center, r)

        return ids, measure, 1.0
    ids = obj.ids

    def measure(center: str, r: float) -> float:
        mask = obj.ball_mask(obj._idx(center), r)
        return float(obj.masses[mask].sum())

    return ids, measure, obj.truncation_radius()


def _sample_center_radius(obj: SpaceLike, rng, r_min, r_max, include_infinity):
    ids, _, _ = _measure_tools(obj)
    if isinstance(obj, SphericalizedSpace) and include_infinity and rng.random() < 0.15:
        center = INFINITY
        h = r_min
    else:
        i = int(rng.integers(0, len(ids)))
        center = ids[i]
        h = obj.hat_h[i] if isinstance(obj, SphericalizedSpace) else None
    if isinstance(obj, SphericalizedSpace) and h is not None and rng.random() < 0.5:
        # center-relative radius: straddles the scale where the ball tips
        # from a local patch into the far annulus
        r = float(h * np.exp(rng.uniform(np.log(0.25), np.log(4.0))))
        r = min(max(r, r_min), r_max)
    else:
        r = float(np.exp(rng.uniform(np.log(r_min), np.log(r_max))))
    return center, r


@dataclass
class Estimate:
    """A sampled constant with the evidence behind it."""

    name: str
    value: float
    seed: int
    samples: int
    radius_range: Tuple[float, float]
    argmax: Optional[dict] = None
    rows: List[dict] = field(default_factory=list)


def doubling_constant(
    obj: SpaceLike,
    radius_range: Tuple[float, float],
    samples: int,
    seed: int,
    include_infinity: bool = True,
    keep_rows: int = 64,
) -> Estimate:
    """max over sampled (x, r) of measure(B(x, 2r)) / measure(B(x, r)).

    Deterministic given the seed; a longer run refines (never lowers) a
    shorter run with the same seed.
    """
    r_min, r_max = radius_range
    if not (0 < r_min < r_max):
        raise ValueError("need 0 < r_min < r_max")
    if samples < 1:
        raise ValueError("empty sample set")
    _, measure, _ = _measure_tools(obj)
    best, arg = -np.inf, None
    rows: List[dict] = []
    for k in range(samples):
        rng = split_rng(seed, "doubling", k)
        center, r = _sample_center_radius(obj, rng, r_min, r_max, include_infinity)
        m1 = measure(center, r)
        m2 = measure(center, 2.0 * r)
        if m1 <= 0:
            continue
        ratio = m2 / m1
        row = {"center": center, "radius": r, "ratio": ratio}
        if len(rows) < keep_rows:
            rows.append(row)
        if ratio > best:
            best, arg = ratio, row
    if arg is None:
        raise ValueError("no sample produced a ball of positive measure")
    return Estimate("doubling", float(best), seed, samples, (r_min, r_max), arg, rows)


# ---------------------------------------------------------------------------
# dimension condition at the base point
# ---------------------------------------------------------------------------

@dataclass
class DimensionFit:
    s: float
    C_s: float
    q_bar_infinity: float
    radii: np.ndarray
    masses: np.ndarray
    violations_below: List[dict] = field(default_factory=list)


def dimension_exponents(
    space: Space,
    r_min: float = 1.0,
    r_max: Optional[float] = None,
    resolution: float = 0.05,
) -> DimensionFit:
    """Smallest exponent s (on a grid of step `resolution`) such that
    mass(B(a,r))/mass(B(a,R)) >= C_s (r/R)^s holds with C_s >= 1 on every
    dyadic pair r <= R of the ladder.

    That smallest s is exactly the maximal pairwise log-slope of the mass
    ladder, rounded up to the grid; it doubles as the infimum exponent
    governing admissible sphericalization parameters.  Pairs violating the
    next grid value below are recorded.
    """
    if r_min < 1:
        raise ValueError("r_min must be >= 1")
    if r_max is None:
        r_max = space.truncation_radius() / 2.0
    radii = dyadic_ladder(r_min, r_max)
    if len(radii) < 3:
        raise ValueError("radius ladder has fewer than 3 rungs")
    rem = space.remoteness_all()
    masses = np.array([space.masses[rem < r].sum() for r in radii])
    if np.any(masses <= 0):
        raise ValueError("a ladder ball has zero mass")
    # max over pairs of log(mass ratio) / log(radius ratio)
    s_star = 0.0
    for i in range(len(radii)):
        for j in range(i + 1, len(radii)):
            slope = math.log(masses[j] / masses[i]) / math.log(radii[j] / radii[i])
            s_star = max(s_star, slope)
    s_grid = max(resolution, math.ceil(s_star / resolution - 1e-9) * resolution)

    def c_of(s):
        best = np.inf
        for i in range(len(radii)):
            for j in range(i + 1, len(radii)):
                best = min(best, (masses[i] / masses[j]) / (radii[i] / radii[j]) ** s)
        return best

    violations = []
    s_below = s_grid - resolution
    if s_below > 0:
        for i in range(len(radii)):
            for j in range(i + 1, len(radii)):
                lhs = masses[i] / masses[j]
                rhs = (radii[i] / radii[j]) ** s_below
                if lhs < rhs:
                    violations.append(
                        {"r": float(radii[i]), "R": float(radii[j]), "ratio": lhs, "bound": rhs}
                    )
    return DimensionFit(s_grid, float(c_of(s_grid)), s_grid, radii, masses, violations)


# ---------------------------------------------------------------------------
# uniform perfectness at the base point
# ---------------------------------------------------------------------------

@dataclass
class PerfectnessResult:
    kappa: Optional[float]
    tested_up_to: float
    witness_radius: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.kappa is not None


def uniform_perfectness(
    space: Space,
    r_min: float = 1.0,
    kappa_cap: float = 16.0,
    step: float = 1.1,
) -> PerfectnessResult:
    """Smallest kappa (grid of factor `step`) with B(a, kappa r) \\ B(a, r)
    nonempty for every tested r in [r_min, R/kappa].

    Radii are tested on a fine grid including every remoteness value in
    range; the truncation cutoff R/kappa is part of the result.  Returns a
    failure witness (an empty annulus) when no kappa below the cap works.
    """
    rem = np.sort(np.unique(space.remoteness_all()))
    R = rem.max()
    kappa = step
    witness = None
    while kappa <= kappa_cap * (1 + 1e-9):
        hi = R / kappa
        # test radii: every occupied remoteness level and midpoints
        cand = rem[(rem >= r_min) & (rem <= hi)]
        test_r = np.unique(np.concatenate([[r_min], cand, cand * 1.0000001]))
        test_r = test_r[test_r <= hi]
        ok = True
        for r in test_r:
            # annulus {r <= |x| < kappa r}
            if not np.any((rem >= r) & (rem < kappa * r)):
                ok = False
                witness = float(r)
                break
        if ok:
            return PerfectnessResult(float(kappa), float(hi))
        kappa *= step
    return PerfectnessResult(None, float(R / kappa_cap), witness)


# ---------------------------------------------------------------------------
# annular connectedness for large radii
# ---------------------------------------------------------------------------

@dataclass
class AnnularResult:
    A: Optional[float]
    R_A: Optional[float]
    witness: Optional[dict] = None
    levels: List[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.A is not None


def _annulus_connected(space: Space, level_idx: np.ndarray, lo: float, hi: float) -> bool:
    """All vertices of level_idx lie in one component of the open annulus
    lo < |x| < hi (edge-path connectivity inside the annulus)."""
    rem = space.remoteness_all()
    inside = (rem > lo) & (rem < hi)
    if not np.all(inside[level_idx]):
        return False
    keep = np.flatnonzero(inside)
    lookup = -np.ones(space.n_points, dtype=np.int64)
    lookup[keep] = np.arange(keep.size)
    emask = inside[space.edges[:, 0]] & inside[space.edges[:, 1]]
    sub = sp.csr_matrix(
        (np.ones(int(emask.sum())), (lookup[space.edges[emask, 0]], lookup[space.edges[emask, 1]])),
        shape=(keep.size, keep.size),
    )
    _, labels = connected_components(sub, directed=False)
    lv = labels[lookup[level_idx]]
    return bool(np.all(lv == lv[0]))


def annular_connectedness(
    space: Space,
    candidate_A_ladder: Sequence[float] = (1.5, 2.0, 3.0, 4.0, 6.0, 8.0),
    level_bin: float = 1.0,
) -> AnnularResult:
    """Least ladder A (and least onset radius R_A) such that all points at
    each tested remoteness level can be joined inside the open annulus
    between |x|/A and A|x|.

    Levels are dyadic; points are binned to a level within one edge length.
    """
    rem = space.remoteness_all()
    R = rem.max()
    if R < 2:
        return AnnularResult(None, None, {"reason": "space too small"})
    levels = dyadic_ladder(2.0, R / 2.0) if R >= 4 else np.asarray([2.0])
    rows = []
    ladder = sorted(candidate_A_ladder)
    per_level_A: List[Optional[float]] = []
    for rho in levels:
        idx = np.flatnonzero(np.abs(rem - rho) <= level_bin)
        if idx.size <= 1:
            per_level_A.append(ladder[0])
            rows.append({"level": float(rho), "points": int(idx.size), "A": ladder[0]})
            continue
        found = None
        for A in ladder:
            if _annulus_connected(space, idx, rho / A, A * rho):
                found = A
                break
        per_level_A.append(found)
        rows.append({"level": float(rho), "points": int(idx.size), "A": found})
    # least A making all levels from some onset pass, preferring small A
    for A in ladder:
        ok_from = None
        for k in range(len(levels) - 1, -1, -1):
            if per_level_A[k] is None or per_level_A[k] > A:
                break
            ok_from = k
        if ok_from is not None and ok_from == 0:
            return AnnularResult(float(A), float(levels[0]), None, rows)
        if ok_from is not None and all(
            per_level_A[k] is not None and per_level_A[k] <= A for k in range(ok_from, len(levels))
        ):
            return AnnularResult(float(A), float(levels[ok_from]), None, rows)
    bad = next((k for k, a in enumerate(per_level_A) if a is None), None)
    witness = None if bad is None else {"level": float(levels[bad])}
    return AnnularResult(None, None, witness, rows)


# ---------------------------------------------------------------------------
# Ahlfors regularity
# ---------------------------------------------------------------------------

@dataclass
class AhlforsEstimate:
    Q: float
    c_low: float
    c_high: float
    seed: int
    samples: int
    radius_range: Tuple[float, float]
    rows: List[dict] = field(default_factory=list)

    @property
    def spread(self) -> float:
        return self.c_high / self.c_low


def ahlfors_regularity(
    obj: SpaceLike,
    Q: float,
    radius_range: Tuple[float, float],
    samples: int = 200,
    seed: int = 0,
    include_infinity: bool = True,
    keep_rows: int = 64,
) -> AhlforsEstimate:
    """Two-sided constants min/max of measure(B(x, r)) / r^Q over samples."""
    r_min, r_max = radius_range
    if not (0 < r_min < r_max):
        raise ValueError("need 0 < r_min < r_max")
    _, measure, _ = _measure_tools(obj)
    c_low, c_high = np.inf, -np.inf
    rows = []
    for k in range(samples):
        rng = split_rng(seed, "ahlfors", k)
        center, r = _sample_center_radius(obj, rng, r_min, r_max, include_infinity)
        m = measure(center, r)
        if m <= 0:
            continue
        ratio = m / r**Q
        if len(rows) < keep_rows:
            rows.append({"center": center, "radius": r, "ratio": ratio})
        c_low, c_high = min(c_low, ratio), max(c_high, ratio)
    if not np.isfinite(c_low):
        raise ValueError("no sample produced a ball of positive measure")
    return AhlforsEstimate(Q, float(c_low), float(c_high), seed, samples, (r_min, r_max), rows)


# ---------------------------------------------------------------------------
# sub-Whitney covering tailored to a ball at ∞
# ---------------------------------------------------------------------------

@dataclass
class WhitneyCover:
    """Greedy five-times covering of X by chain-metric balls whose radii
    track the distance to ∞ level by level."""

    r: float
    c0: float
    balls: List[Tuple[str, int, float]]  # (center, level, radius)
    per_level_count: Dict[int, int]
    M: int
    max_overlap: int
    covered: bool


def whitney_cover(
    sph: SphericalizedSpace,
    r: float,
    lambda_hint: float = 1.0,
    R_A: float = 1.0,
) -> WhitneyCover:
    """Select balls B̂(z, r_z), r_z = c0 2^{-l_z} r with c0 = 1/(120 λ),
    where the level l_z pins 2^{-l_z} r <= d̂(z, ∞) < 2^{1-l_z} r.

    Candidates are scanned by radius descending (ties by identifier); a
    ball joins the cover iff its fifth-scale ball is disjoint from every
    previously selected fifth-scale ball.  The selected full balls are then
    verified to cover X; per-level counts and the maximal pointwise overlap
    are measured.
    """
    if not lambda_hint > 0:
        raise ValueError("lambda_hint must be > 0")
    if not 0 < r <= 1.0 / (8.0 * R_A):
        raise ValueError(f"radius must lie in (0, 1/(8 R_A)] = (0, {1.0/(8.0*R_A)}]")
    c0 = 1.0 / (120.0 * lambda_hint)
    base = sph.base
    n = base.n_points
    h = sph.hat_h
    # unique integer level with 2^{-l} r <= h < 2^{1-l} r
    lev = -np.floor(np.log2(h / r)).astype(np.int64)
    bad = ~((2.0 ** (-lev.astype(float)) * r <= h) & (h < 2.0 ** (1.0 - lev) * r))
    for i in np.flatnonzero(bad):  # float log edge cases
        while 2.0 ** (-float(lev[i])) * r > h[i]:
            lev[i] += 1
        while h[i] >= 2.0 ** (1.0 - float(lev[i])) * r:
            lev[i] -= 1
    radii = c0 * 2.0 ** (-lev.astype(float)) * r

    order = sorted(range(n), key=lambda i: (lev[i], base.ids[i]))
    fifth_union = np.zeros(n + 1, dtype=bool)
    cover_count = np.zeros(n, dtype=np.int64)
    selected: List[Tuple[str, int, float]] = []
    per_level: Dict[int, int] = {}
    for i in order:
        row = sph._hat_row_idx(i)
        fifth = row < radii[i] / 5.0
        if np.any(fifth & fifth_union):
            continue
        fifth_union |= fifth
        selected.append((base.ids[i], int(lev[i]), float(radii[i])))
        per_level[int(lev[i])] = per_level.get(int(lev[i]), 0) + 1
        cover_count += row[:n] < radii[i]
    covered = bool(np.all(cover_count > 0))
    M = max(per_level.values()) if per_level else 0
    return WhitneyCover(
        r, c0, selected, per_level, M, int(cover_count.max(initial=0)), covered
    )


# ---------------------------------------------------------------------------
# Poincaré constant probing
# ---------------------------------------------------------------------------

def _vertex_gradient(space: Space, values: np.ndarray, edge_scale: np.ndarray) -> np.ndarray:
    """Smallest vertex field dominating every incident edge slope."""
    du = np.abs(values[space.edges[:, 0]] - values[space.edges[:, 1]]) / edge_scale
    g = np.zeros(space.n_points)
    np.maximum.at(g, space.edges[:, 0], du)
    np.maximum.at(g, space.edges[:, 1], du)
    return g


def make_test_battery(
    obj: SpaceLike,
    seed: int,
    n_distance: int = 3,
    n_random: int = 2,
    smoothing_sweeps: int = 4,
    include_coordinates: bool = True,
) -> List[Tuple[str, np.ndarray]]:
    """Named test functions with computable edge gradients.

    For a base space: coordinates (when present), distances to random
    centers, and random fields smoothed by mass-weighted neighbor
    averaging.  For a sphericalized space the battery lives on X̂ (value at
    ∞ last): the height 1/(1+|x|), quasimetric distances to random
    centers, and smoothed random fields whose value at ∞ is the far-ring
    mean.
    """
    sph = obj if isinstance(obj, SphericalizedSpace) else None
    space = sph.base if sph else obj
    n = space.n_points
    out: List[Tuple[str, np.ndarray]] = []

    def _extend(name, vals_base, v_inf):
        if sph is None:
            out.append((name, vals_base))
        else:
            out.append((name, np.concatenate([vals_base, [v_inf]])))

    if sph is not None:
        _extend("height-at-infinity", sph.hat_h.copy(), 0.0)
    if include_coordinates and space.coords is not None and sph is None:
        for k in range(space.coords.shape[1]):
            out.append((f"coordinate-{k}", space.coords[:, k].astype(float)))
    for j in range(n_distance):
        rng = split_rng(seed, "battery-distance", j)
        i = int(rng.integers(0, n))
        if sph is None:
            out.append((f"distance-to-{space.ids[i]}", space.dist_row(i).copy()))
        else:
            row = sph.da_row(space.ids[i])
            _extend(f"quasi-distance-to-{space.ids[i]}", row[:n], row[n])
    # random low-frequency fields: noise then a few averaging sweeps
    deg = np.zeros(n)
    np.add.at(deg, space.edges[:, 0], space.masses[space.edges[:, 1]])
    np.add.at(deg, space.edges[:, 1], space.masses[space.edges[:, 0]])
    for j in range(n_random):
        rng = split_rng(seed, "battery-random", j)
        v = rng.normal(size=n)
        for _ in range(smoothing_sweeps):
            acc = np.zeros(n)
            np.add.at(acc, space.edges[:, 0], space.masses[space.edges[:, 1]] * v[space.edges[:, 1]])
            np.add.at(acc, space.edges[:, 1], space.masses[space.edges[:, 0]] * v[space.edges[:, 0]])
            v = np.where(deg > 0, 0.5 * v + 0.5 * acc / np.maximum(deg, 1e-300), v)
        if sph is None:
            out.append((f"random-smooth-{j}", v))
        else:
            far = sph.hat_h <= np.quantile(sph.hat_h, 0.05)
            _extend(f"random-smooth-{j}", v, float(v[far].mean()))
    return out


@dataclass
class PoincareEstimate:
    """Lower bound for the Poincaré constant from a battery of test
    functions (the true constant is at least this large)."""

    p: float
    dilation: float
    value: float
    argmax: Optional[dict]
    rows: List[dict] = field(default_factory=list)
    skipped: List[dict] = field(default_factory=list)
    sphericalized_dilation_hint: Optional[float] = None


def poincare_probe(
    obj: SpaceLike,
    p: float,
    dilation: float,
    ball_samples: int,
    battery: Sequence[Tuple[str, np.ndarray]],
    seed: int,
    radius_range: Optional[Tuple[float, float]] = None,
    include_infinity: bool = True,
    refine_p2: bool = False,
) -> PoincareEstimate:
    """max over sampled balls and battery members of
        (mean over B of |u - u_B|) / (r_B (mean over λB of g_u^p)^{1/p}),
    with g_u the max incident edge slope and all means mass-weighted.

    Members constant on a sampled λB are skipped and logged.  With
    refine_p2, the p = 2 ratio on the maximizing ball is sharpened by a
    Rayleigh-quotient iteration whose optimizer joins the battery.
    """
    if not battery:
        raise ValueError("battery is empty")
    if not p >= 1:
        raise ValueError("p must be >= 1")
    sph = obj if isinstance(obj, SphericalizedSpace) else None
    space = sph.base if sph else obj
    n = space.n_points
    if radius_range is None:
        radius_range = (0.05, 0.5) if sph else (2.0, space.truncation_radius() / 2.0)
    edge_scale = space.lengths * (sph.edge_factors() if sph else 1.0)
    masses = np.concatenate([sph.hat_masses, [0.0]]) if sph else space.masses
    grads = {name: _vertex_gradient(space, vals[:n], edge_scale) for name, vals in battery}

    def ball_mask(center, r):
        if sph:
            return sph.quasi_ball_mask(center, r)
        return space.ball_mask(space._idx(center), r)

    best, arg = -np.inf, None
    rows, skipped = [], []
    best_ball = None
    for k in range(ball_samples):
        rng = split_rng(seed, "poincare", k)
        center, r = _sample_center_radius(obj, rng, radius_range[0], radius_range[1], include_infinity)
        bmask = ball_mask(center, r)
        lmask = ball_mask(center, dilation * r) if dilation != 1.0 else bmask
        mb = masses[bmask] if sph else masses[bmask]
        if mb.sum() <= 0:
            continue
        for name, vals in battery:
            ub = vals[bmask]
            mean = float((mb * ub).sum() / mb.sum())
            lhs = float((mb * np.abs(ub - mean)).sum() / mb.sum())
            g = grads[name][lmask[:n]] if sph else grads[name][lmask]
            ml = masses[lmask][: g.size] if sph else masses[lmask]
            gp = float((ml * g**p).sum() / ml.sum()) if ml.sum() > 0 else 0.0
            if gp <= 0:
                skipped.append({"center": center, "radius": r, "function": name})
                continue
            ratio = lhs / (r * gp ** (1.0 / p))
            row = {"center": center, "radius": r, "function": name, "ratio": ratio}
            if len(rows) < 256:
                rows.append(row)
            if ratio > best:
                best, arg, best_ball = ratio, row, (center, r, bmask, lmask)
    if arg is None:
        raise ValueError("every sampled (ball, function) pair was degenerate")
    if refine_p2 and p == 2.0 and best_ball is not None:
        extra = _p2_rayleigh_function(space, sph, masses, edge_scale, best_ball)
        if extra is not None:
            name, vals = extra
            g = _vertex_gradient(space, vals[:n], edge_scale)
            center, r, bmask, lmask = best_ball
            mb = masses[bmask]
            ub = vals[bmask]
            mean = float((mb * ub).sum() / mb.sum())
            lhs = float((mb * np.abs(ub - mean)).sum() / mb.sum())
            gv = g[lmask[:n]] if sph else g[lmask]
            ml = masses[lmask][: gv.size] if sph else masses[lmask]
            gp = float((ml * gv**2).sum() / ml.sum())
            if gp > 0:
                ratio = lhs / (r * gp**0.5)
                if ratio > best:
                    best, arg = ratio, {"center": center, "radius": r, "function": name, "ratio": ratio}
    return PoincareEstimate(p, dilation, float(best), arg, rows, skipped)


def _p2_rayleigh_function(space, sph, masses, edge_scale, ball):
    """Optimizer of the L2 ball-oscillation Rayleigh quotient on the
    maximizing ball; used as one more test function (dense, small balls)."""
    center, r, bmask, lmask = ball
    n = space.n_points
    sel = np.flatnonzero(lmask[:n] if sph else lmask)
    if sel.size < 3 or sel.size > 1500:
        return None
    lookup = -np.ones(n, dtype=np.int64)
    lookup[sel] = np.arange(sel.size)
    emask = (lookup[space.edges[:, 0]] >= 0) & (lookup[space.edges[:, 1]] >= 0)
    e = lookup[space.edges[emask]]
    w = 1.0 / edge_scale[emask] ** 2
    L = np.zeros((sel.size, sel.size))
    for (i, j), wij in zip(e, w):
        L[i, i] += wij
        L[j, j] += wij
        L[i, j] -= wij
        L[j, i] -= wij
    mloc = masses[:n][sel] if sph else masses[sel]
    inb = (bmask[:n] if sph else bmask)[sel]
    mb = np.where(inb, mloc, 0.0)
    if mb.sum() <= 0:
        return None
    # M = centered ball-mass quadratic form
    Mq = np.diag(mb) - np.outer(mb, mb) / mb.sum()
    try:
        from scipy.linalg import eigh

        vals, vecs = eigh(Mq, L + 1e-12 * np.eye(sel.size))
    except Exception:
        return None
    v = vecs[:, -1]
    out = np.zeros(n + (1 if sph else 0))
    out[sel] = v
    return "rayleigh-optimizer", out


# ---------------------------------------------------------------------------
# necessity of the exponent gap for doubling stability
# ---------------------------------------------------------------------------

@dataclass
class NecessityReport:
    verdict: str  # DOUBLING-STABLE | DIVERGES
    q: float
    rungs: List[dict]
    growth: float
    s_measured: float


def necessity_experiment(
    space: Space,
    q: float,
    truncation_ladder: Sequence[float],
    samples: int = 160,
    seed: int = 0,
    radius_range: Tuple[float, float] = (1.0 / 64.0, 0.5),
    stability_factor: float = 2.0,
) -> NecessityReport:
    """Doubling estimates of the sphericalization across truncations of the
    same space, next to the base dimension exponent.

    DOUBLING-STABLE when the estimates stay within `stability_factor` of
    each other and the measured exponent satisfies s < q; DIVERGES
    otherwise (with the growth trend across the ladder).
    """
    ladder = sorted(set(float(R) for R in truncation_ladder))
    if len(ladder) < 3:
        raise ValueError("need at least 3 truncation radii")
    rungs = []
    estimates = []
    for R in ladder:
        sub = subspace_by_remoteness(space, R)
        est = doubling_constant(sphericalize(sub, q), radius_range, samples, seed)
        fit = dimension_exponents(sub, 1.0, max(2.0, R / 2.0))
        rungs.append(
            {"truncation": R, "doubling": est.value, "s": fit.s, "C_s": fit.C_s,
             "argmax": est.argmax}
        )
        estimates.append(est.value)
    growth = max(estimates) / min(estimates)
    s_meas = rungs[-1]["s"]
    stable = growth <= stability_factor and s_meas < q
    return NecessityReport("DOUBLING-STABLE" if stable else "DIVERGES", q, rungs, growth, s_meas)


# ---------------------------------------------------------------------------
# profile assembly
# ---------------------------------------------------------------------------

@dataclass
class GeometryProfile:
    """Estimated constants with the sampling evidence behind each one."""

    doubling: Estimate
    dimension: DimensionFit
    perfectness: PerfectnessResult
    annular: AnnularResult
    ahlfors: Optional[AhlforsEstimate] = None
    poincare: Optional[PoincareEstimate] = None

    def summary(self) -> dict:
        out = {
            "C_mu": self.doubling.value,
            "s": self.dimension.s,
            "C_s": self.dimension.C_s,
            "q_bar_infinity": self.dimension.q_bar_infinity,
            "kappa": self.perfectness.kappa,
            "A": self.annular.A,
            "R_A": self.annular.R_A,
        }
        if self.ahlfors:
            out["ahlfors_Q"] = self.ahlfors.Q
            out["ahlfors_spread"] = self.ahlfors.spread
        if self.poincare:
            out["C_PI_lower"] = self.poincare.value
            out["lambda"] = self.poincare.dilation
        return out
