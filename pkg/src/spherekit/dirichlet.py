"""Dirichlet problems on the sphericalized space with ∞ on the boundary:
solving, invariance between the two energy geometries, regularity probing
at ∞, barriers, and capacity-perturbation experiments.

On a finite model the upper and lower envelope solutions of a boundary
value problem coincide with the unique energy minimizer, so no envelopes
are constructed; the solver output *is* the solution, and all statements
about behaviour "at ∞" become trends along a ladder of truncations of the
same model.  ∞ enters the graph as a boundary vertex joined to the
outermost shell (see extended_spherical_graph); its connection radius is a
discretization dial whose sensitivity is always reported.

Ring trends are measured on truncation shells; whether such trends
characterize the limit along every approach to ∞ for highly irregular
domains is not something a finite model can certify, so reports carry a
`ring_sampling_caveat` flag.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

from ._util import split_rng
from .space import INFINITY, Space, subspace_by_remoteness
from .sphere import SphericalizedSpace, sphericalize
from .potential import (
    EnergyForm,
    FunctionField,
    SolveInfo,
    condenser_capacity,
    extended_spherical_graph,
    minimize_edge_energy,
    solve_p_harmonic,
)

__all__ = [
    "DirichletProblem",
    "PerronResult",
    "perron_solve",
    "invariance_under_sphericalization",
    "InvarianceReport",
    "regularity_probe",
    "RegularityReport",
    "barrier_check",
    "BarrierReport",
    "resolutive_perturbation_test",
    "PerturbationReport",
    "exterior_domain",
]


# ---------------------------------------------------------------------------
# Problems
# ---------------------------------------------------------------------------

@dataclass
class DirichletProblem:
    """Domain inside X, boundary data on the finite neighbors plus
    (when the domain reaches the truncation shell) at ∞."""

    sph: SphericalizedSpace
    domain: Set[str]
    data: FunctionField
    p: float
    connection_radius: Optional[float] = None

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("Dirichlet problems need p > 1")
        self.domain = set(self.domain)
        if not self.domain:
            raise ValueError("empty domain")
        if INFINITY in self.domain:
            raise ValueError("∞ is a boundary point, not a domain point")
        overlap = self.domain & set(self.data)
        if overlap:
            raise ValueError(f"domain and boundary data overlap at {sorted(overlap)[0]!r}")

    def is_unbounded(self) -> bool:
        """Does the domain reach the shell that ∞ attaches to?"""
        base = self.sph.base
        ext = extended_spherical_graph(self.sph, self.p, self.sph.q, self.connection_radius)
        dom = {base._idx(p) for p in self.domain}
        return any(int(i) in dom for i in ext.ring)


@dataclass
class PerronResult:
    solution: FunctionField
    residual: float
    connection_radius: float
    connection_sensitivity: Optional[float]
    outer_ring_mean: float
    outer_ring_osc: float
    ladder_rows: List[dict] = field(default_factory=list)
    ring_sampling_caveat: bool = True

    def value_bounds_ok(self, data: FunctionField, tol: float = 1e-9) -> bool:
        lo, hi = min(data.values()), max(data.values())
        vals = np.asarray(list(self.solution.values()))
        return bool(vals.min() >= lo - tol and vals.max() <= hi + tol)


def _solve_extended(
    sph: SphericalizedSpace,
    domain: Set[str],
    data: FunctionField,
    p: float,
    connection_radius: Optional[float],
    tol: float = 1e-10,
    x0: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, SolveInfo, float, np.ndarray]:
    """Solve on the ∞-extended graph; returns full values over X̂ (∞ last),
    info, the connection radius used, and the free mask."""
    base = sph.base
    n = base.n_points
    ext = extended_spherical_graph(sph, p, sph.q, connection_radius)
    free = np.zeros(n + 1, dtype=bool)
    for pt in domain:
        free[base._idx(pt)] = True
    # boundary: every non-free vertex incident to a free one
    touch = free[ext.edges[:, 0]] | free[ext.edges[:, 1]]
    flat = ext.edges[touch].ravel()
    bnd_idx = np.unique(flat[~free[flat]])
    vals = np.zeros(n + 1)
    for i in bnd_idx:
        pid = INFINITY if i == n else base.ids[i]
        if pid not in data:
            raise ValueError(f"boundary data missing at point {pid!r}")
        vals[i] = data[pid]
    fixed_idx = np.flatnonzero(~free)
    # vertices neither free nor on the boundary are pinned at a harmless 0;
    # they are separated from the domain, so they do not affect it
    u, info = minimize_edge_energy(
        n + 1, ext.edges, ext.weights, p, fixed_idx, vals[fixed_idx],
        tol=tol, x0=x0,
    )
    return u, info, ext.connection_radius, free


def perron_solve(
    problem: DirichletProblem,
    truncation_ladder: Optional[Sequence[float]] = None,
    problem_builder: Optional[Callable[[Space], Tuple[Set[str], FunctionField]]] = None,
    tol: float = 1e-10,
) -> PerronResult:
    """Solve the boundary value problem with ∞ as an ordinary boundary
    vertex, and report how sensitive the solution is to the radius that
    defines ∞'s neighborhood (one dyadic step) plus, when a ladder and a
    problem builder are given, the per-truncation trends."""
    sph = problem.sph
    base = sph.base
    u, info, conn, free = _solve_extended(
        sph, problem.domain, problem.data, problem.p, problem.connection_radius, tol=tol
    )
    # sensitivity: double the connection radius (one dyadic step)
    sens = None
    try:
        u2, _, _, _ = _solve_extended(
            sph, problem.domain, problem.data, problem.p, conn * 2.0, tol=tol, x0=u
        )
        sens = float(np.abs(u2[free] - u[free]).max()) if free.any() else 0.0
    except ValueError:
        pass
    rem = sph.remoteness
    dom_idx = np.flatnonzero(free[: base.n_points])
    ring_lo = rem[dom_idx].max() * (1 - 1e-9)
    ring = dom_idx[rem[dom_idx] >= ring_lo]
    ring_vals = u[ring]
    rows = []
    if truncation_ladder is not None and problem_builder is not None:
        prev_vals: Optional[Dict[str, float]] = None
        for R in sorted(truncation_ladder):
            sub = subspace_by_remoteness(base, R)
            ssph = sphericalize(sub, sph.q)
            dom_R, data_R = problem_builder(sub)
            uR, _, _, freeR = _solve_extended(ssph, dom_R, data_R, problem.p, None, tol=tol)
            remR = ssph.remoteness
            idxR = np.flatnonzero(freeR[: sub.n_points])
            ringR = idxR[remR[idxR] >= remR[idxR].max() * (1 - 1e-9)]
            cur_vals = {sub.ids[i]: float(uR[i]) for i in idxR}
            row = {
                "truncation": R,
                "outer_ring_mean": float(uR[ringR].mean()),
                "outer_ring_osc": float(uR[ringR].max() - uR[ringR].min()),
            }
            if prev_vals is not None:
                common = [pt for pt in prev_vals if pt in cur_vals]
                if common:
                    row["core_supdiff"] = float(
                        max(abs(prev_vals[pt] - cur_vals[pt]) for pt in common)
                    )
            prev_vals = cur_vals
            rows.append(row)
    sol = FunctionField(
        {base.ids[i]: float(u[i]) for i in np.flatnonzero(free[: base.n_points])}
    )
    bnd = {k: problem.data[k] for k in problem.data}
    sol.update(bnd)
    return PerronResult(
        sol,
        info.residual,
        conn,
        sens,
        float(ring_vals.mean()) if ring.size else float("nan"),
        float(ring_vals.max() - ring_vals.min()) if ring.size else float("nan"),
        rows,
    )


def exterior_domain(space: Space, inner_radius: float) -> Tuple[Set[str], Set[str]]:
    """(domain, inner boundary) of the exterior problem {|x| > inner_radius}.

    The inner boundary is every non-domain vertex adjacent to the domain.
    """
    rem = space.remoteness_all()
    dom_mask = rem > inner_radius
    dom = {space.ids[i] for i in np.flatnonzero(dom_mask)}
    cross = dom_mask[space.edges[:, 0]] ^ dom_mask[space.edges[:, 1]]
    bnd = set()
    for a, b in space.edges[cross]:
        bnd.add(space.ids[a] if not dom_mask[a] else space.ids[b])
    return dom, bnd


# ---------------------------------------------------------------------------
# invariance between the two energy geometries
# ---------------------------------------------------------------------------

@dataclass
class InvarianceReport:
    sup_diff: float
    tol: float
    passed: bool
    base_info: SolveInfo
    spherical_info: SolveInfo


def invariance_under_sphericalization(
    space: Space,
    domain: Set[str],
    boundary_data: Union[FunctionField, Mapping[str, float]],
    p: float,
    tol: float,
    seed: int = 0,
) -> InvarianceReport:
    """Solve the same bounded problem in the base geometry and in the
    sphericalized geometry with mass exponent 2p, independently initialized,
    and compare the solutions."""
    data = boundary_data if isinstance(boundary_data, FunctionField) else FunctionField(boundary_data)
    u_base, info_b = solve_p_harmonic(
        EnergyForm(p, "base"), space, domain, data,
        tol=1e-12, seed=seed, return_info=True,
    )
    sph = sphericalize(space, 2.0 * p)
    u_sph, info_s = solve_p_harmonic(
        EnergyForm(p, "spherical"), sph, domain, data,
        tol=1e-12, seed=seed + 1, return_info=True,
    )
    sup = max(abs(u_base[pt] - u_sph[pt]) for pt in domain)
    return InvarianceReport(float(sup), tol, bool(sup <= tol), info_b, info_s)


# ---------------------------------------------------------------------------
# regularity probing at ∞
# ---------------------------------------------------------------------------

@dataclass
class RegularityReport:
    classification: str  # REGULAR | LIMIT-EXISTS | SEQUENCE-ATTAINS | UNRESOLVED
    rows: List[dict]
    pair_rows: List[dict]
    attains_all: bool
    limit_exists_all: bool
    sequence_attains_all: bool
    ring_sampling_caveat: bool = True


def regularity_probe(
    space: Space,
    inner_radius: float,
    p: float,
    q: float,
    f_battery: Sequence[Tuple[str, Callable[[Space], FunctionField]]],
    truncation_ladder: Sequence[float],
    attain_tol: float = 0.1,
    converge_tol: float = 0.05,
) -> RegularityReport:
    """Solve the exterior problem for each boundary datum across the
    truncation ladder and classify the behaviour at ∞ from the outer-ring
    trends.

    Classification: REGULAR when every datum's trend converges to its own
    value at ∞; LIMIT-EXISTS when every trend converges (not necessarily to
    the right value) and data differing only at ∞ produce merging
    solutions; SEQUENCE-ATTAINS when each datum's value at ∞ is attained
    somewhere in the far half of the model.  The labels are trends on ring
    samples, reported as exhibits rather than certificates, and more than
    one can hold at once.
    """
    ladder = sorted(truncation_ladder)
    if len(ladder) < 2:
        raise ValueError("truncation ladder needs at least 2 rungs")
    rows: List[dict] = []
    ring_hist: Dict[str, List[float]] = {name: [] for name, _ in f_battery}
    f_inf: Dict[str, float] = {}
    sols_top: Dict[str, FunctionField] = {}
    for R in ladder:
        sub = subspace_by_remoteness(space, R)
        ssph = sphericalize(sub, q)
        dom, bnd = exterior_domain(sub, inner_radius)
        for name, make in f_battery:
            data = make(sub)
            if INFINITY not in data:
                raise ValueError(f"datum {name!r} must set a value at ∞")
            f_inf[name] = data[INFINITY]
            missing = [b for b in bnd if b not in data]
            if missing:
                raise ValueError(f"datum {name!r} missing at {missing[0]!r}")
            prob = DirichletProblem(ssph, dom, data, p)
            res = perron_solve(prob)
            ring_hist[name].append(res.outer_ring_mean)
            rows.append(
                {"truncation": R, "datum": name, "ring_mean": res.outer_ring_mean,
                 "ring_osc": res.outer_ring_osc}
            )
            if R == ladder[-1]:
                sols_top[name] = res.solution
    attains, converges, seq_attains = [], [], []
    for name, _ in f_battery:
        hist = ring_hist[name]
        converges.append(abs(hist[-1] - hist[-2]) <= converge_tol)
        attains.append(abs(hist[-1] - f_inf[name]) <= attain_tol)
        sol = sols_top[name]
        rem_top = {pid: space.remoteness(pid) for pid in sol if pid in space.index}
        far_cut = ladder[-1] / 2.0
        seq_attains.append(
            any(
                abs(sol[pid] - f_inf[name]) <= attain_tol
                for pid, rm in rem_top.items()
                if rm >= far_cut
            )
        )
    pair_rows = []
    names = [name for name, _ in f_battery]
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            a, b = sols_top[names[i]], sols_top[names[j]]
            common = [pt for pt in a if pt in b]
            pair_rows.append(
                {"pair": (names[i], names[j]),
                 "sup_diff_top": float(max(abs(a[pt] - b[pt]) for pt in common))}
            )
    attains_all = all(attains)
    limit_all = all(converges)
    seq_all = all(seq_attains)
    if attains_all and limit_all:
        cls = "REGULAR"
    elif limit_all:
        cls = "LIMIT-EXISTS"
    elif seq_all:
        cls = "SEQUENCE-ATTAINS"
    else:
        cls = "UNRESOLVED"
    return RegularityReport(cls, rows, pair_rows, attains_all, limit_all, seq_all)


# ---------------------------------------------------------------------------
# barriers at ∞
# ---------------------------------------------------------------------------

@dataclass
class BarrierReport:
    passed: bool
    failures: List[dict]
    superharmonic_slack: float
    decay_ratio: float
    boundary_margin: float


def _one_vertex_update(space: Space, weights: np.ndarray, p: float, u: np.ndarray, v: int) -> float:
    """Value at v minimizing the star energy with neighbors held fixed."""
    inc = space.incident_edges()[v]
    if inc.size == 0:
        return float(u[v])
    e = space.edges[inc]
    nb = np.where(e[:, 0] == v, e[:, 1], e[:, 0])
    w = weights[inc]
    x = u[nb]
    if p == 2.0:
        return float((w * x).sum() / w.sum())
    lo, hi = float(x.min()), float(x.max())
    for _ in range(80):  # bisection on the monotone derivative
        mid = 0.5 * (lo + hi)
        d = (w * np.abs(mid - x) ** (p - 1.0) * np.sign(mid - x)).sum()
        if d > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def barrier_check(
    sph: SphericalizedSpace,
    domain: Set[str],
    u: FunctionField,
    p: float = 2.0,
    tol: float = 0.05,
    ladder_values: Optional[Sequence[float]] = None,
    decay_factor: float = 0.9,
) -> BarrierReport:
    """Check the three barrier properties of a candidate field on a domain
    reaching the truncation shell.

    (1) one-vertex replacement by the p-harmonic star update never raises
        the value by more than tol (discrete comparison form of
        superharmonicity; with mass exponent 2p the base-geometry update is
        also the sphericalized one);
    (2) decay toward ∞: the outer-shell maximum is at most `decay_factor`
        times the mid-shell maximum, and, when per-truncation values are
        supplied, they decrease along the ladder within the tol band;
    (3) positive margin on the finite boundary side: the minimum over
        domain vertices adjacent to the finite boundary is at least
        tol * max|u|.
    """
    base = sph.base
    n = base.n_points
    dom_idx = np.asarray(sorted(base._idx(pt) for pt in domain), dtype=np.int64)
    dmask = np.zeros(n, dtype=bool)
    dmask[dom_idx] = True
    vals = np.full(n, np.nan)
    for pt, val in u.items():
        if pt != INFINITY and pt in base.index:
            vals[base._idx(pt)] = val
    needed = dmask.copy()
    cross = dmask[base.edges[:, 0]] ^ dmask[base.edges[:, 1]]
    needed[base.edges[cross].ravel()] = True
    if np.any(np.isnan(vals[needed])):
        missing = np.flatnonzero(needed & np.isnan(vals))[0]
        raise ValueError(f"barrier field missing at point {base.ids[missing]!r}")
    scale = float(np.nanmax(np.abs(vals[needed]))) or 1.0
    weights = np.sqrt(base.masses[base.edges[:, 0]] * base.masses[base.edges[:, 1]])
    weights = weights / base.lengths**p

    failures: List[dict] = []
    # (1) superharmonicity via star updates, only where all neighbors are known
    worst_slack = -np.inf
    for v in dom_idx:
        inc = base.incident_edges()[v]
        nbrs = np.where(base.edges[inc, 0] == v, base.edges[inc, 1], base.edges[inc, 0])
        if np.any(np.isnan(vals[nbrs])):
            continue
        upd = _one_vertex_update(base, weights, p, vals, int(v))
        slack = upd - vals[v]
        worst_slack = max(worst_slack, slack)
        if slack > tol * scale:
            failures.append({"condition": "superharmonic", "point": base.ids[v],
                             "update_excess": float(slack)})
    # (2) decay toward the truncation shell
    rem = sph.remoteness
    R = rem[dom_idx].max()
    outer = dom_idx[rem[dom_idx] >= 0.8 * R]
    mid = dom_idx[(rem[dom_idx] >= 0.4 * R) & (rem[dom_idx] <= 0.6 * R)]
    m_out = float(np.max(vals[outer])) if outer.size else float("nan")
    m_mid = float(np.max(vals[mid])) if mid.size else float("nan")
    decay_ratio = m_out / m_mid if m_mid > 0 else float("inf")
    if not (m_out <= max(decay_factor * m_mid, tol * scale)):
        failures.append({"condition": "decay", "outer_max": m_out, "mid_max": m_mid})
    if ladder_values is not None:
        lv = list(ladder_values)
        if any(b > a + tol * scale for a, b in zip(lv, lv[1:])):
            failures.append({"condition": "decay-ladder", "values": lv})
    # (3) positive margin next to the finite boundary
    bnd_adjacent = np.unique(
        np.concatenate([base.edges[cross][dmask[base.edges[cross, 0]], 0],
                        base.edges[cross][dmask[base.edges[cross, 1]], 1]])
    ) if cross.any() else np.asarray([], dtype=np.int64)
    margin = float(np.min(vals[bnd_adjacent])) if bnd_adjacent.size else float("nan")
    if not (margin >= tol * scale):
        failures.append({"condition": "boundary-margin", "margin": margin})
    return BarrierReport(not failures, failures, float(worst_slack), float(decay_ratio), margin)


# ---------------------------------------------------------------------------
# capacity perturbations of boundary data
# ---------------------------------------------------------------------------

@dataclass
class PerturbationReport:
    rows: List[dict]
    monotone: bool
    final_ratio: float
    passed: bool
    bitwise_equal_on_empty: Optional[bool] = None


def resolutive_perturbation_test(
    sph: SphericalizedSpace,
    domain: Set[str],
    data: FunctionField,
    p: float,
    shrinking_sets: Sequence[Set[str]],
    h_magnitude: float,
    core_radius: Optional[float] = None,
    threshold: float = 0.05,
    tol: float = 1e-10,
) -> PerturbationReport:
    """Perturb the boundary data by h on nested shrinking boundary subsets
    and track the solution change against the condenser capacity of the
    perturbed set.

    On a finite model every nonempty set has positive capacity, so the
    statement is a trend: the solution difference on a fixed core should
    fall with the capacity, ending below threshold * |h|.
    """
    sets = [set(E) for E in shrinking_sets]
    for a, b in zip(sets, sets[1:]):
        if not b <= a:
            raise ValueError("shrinking_sets must be nested decreasing")
    base = sph.base
    u0, _, _, free = _solve_extended(sph, domain, data, p, None, tol=tol)
    rem = sph.remoteness
    dom_idx = np.flatnonzero(free[: base.n_points])
    if core_radius is None:
        core_radius = rem[dom_idx].max() / 2.0
    core = dom_idx[rem[dom_idx] <= core_radius]
    if core.size == 0:
        core = dom_idx
    form = EnergyForm(p, "spherical", sph.q)
    rows: List[dict] = []
    bitwise = None
    for E in sets:
        bad = [e for e in E if e not in data or e == INFINITY]
        if bad:
            raise ValueError(f"perturbation set not inside the finite boundary: {bad[0]!r}")
        pert = FunctionField(data)
        for e in E:
            pert[e] = pert[e] + h_magnitude
        uE, _, _, _ = _solve_extended(sph, domain, pert, p, None, tol=tol)
        if not E:
            bitwise = bool(np.array_equal(u0, uE))
        supdiff = float(np.abs(uE[core] - u0[core]).max())
        cap = (
            condenser_capacity(form, sph, E, set(E) | set(domain)) if E else 0.0
        )
        rows.append({"set_size": len(E), "capacity": cap, "sup_diff_core": supdiff})
    diffs = [r["sup_diff_core"] for r in rows if r["set_size"] > 0]
    monotone = all(b <= a * (1 + 1e-9) + 1e-12 for a, b in zip(diffs, diffs[1:]))
    final_ratio = diffs[-1] / abs(h_magnitude) if diffs else 0.0
    passed = monotone and final_ratio <= threshold
    return PerturbationReport(rows, monotone, float(final_ratio), bool(passed), bitwise)
