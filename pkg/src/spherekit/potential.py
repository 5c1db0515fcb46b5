"""Discrete p-energy, p-harmonic solver, condenser capacity and the
parabolic/hyperbolic classifier.

The energy of a function u is  sum_e  m_e * (|u(x)-u(y)| / len_e)^p  over
edges, with edge mass m_e = sqrt(mass(x) * mass(y)).  Two geometries share
this shape:

  BASE       lengths len_e, masses from the space;
  SPHERICAL  lengths len_e/((1+|x|)(1+|y|)), masses mass_e/((1+|x|)(1+|y|))^{q/2}.

With q = 2p the two edge quotients coincide algebraically, so BASE and
SPHERICAL energies of the same function agree edge by edge; minimizers are
therefore literally the same objects in both geometries.  All "exact"
statements are about this discrete functional; the edge slope field is the
discrete stand-in for the minimal upper gradient, not an instance of it.

The solver minimizes the smoothed energy sum w_e (Δ² + ε²)^{p/2} by
iteratively reweighted least squares with a backtracking line search,
followed by damped Newton steps on the same functional until the
first-order residual is negligible.  ε is 1e-9 times the boundary data
range, so smoothing is invisible at the reported tolerances.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from ._util import split_rng
from .space import INFINITY, Space, UnknownPointError, subspace_by_remoteness
from .sphere import EdgeGradientField, SphericalizedSpace, sphericalize

__all__ = [
    "FunctionField",
    "EnergyForm",
    "edge_gradient",
    "p_energy",
    "energy_gradient",
    "solve_p_harmonic",
    "minimize_edge_energy",
    "condenser_capacity",
    "classify_parabolicity",
    "capacity_at_infinity_probe",
    "extended_spherical_graph",
    "SolveInfo",
    "ParabolicityReport",
    "CapacityTrendReport",
]

try:  # optional multigrid preconditioner for large p=2 solves
    import pyamg

    _HAVE_PYAMG = True
except Exception:  # pragma: no cover
    _HAVE_PYAMG = False


# ---------------------------------------------------------------------------
# Function fields
# ---------------------------------------------------------------------------

class FunctionField(dict):
    """Mapping point id -> value; the id of ∞ is allowed as a key.

    A plain dict with small conveniences; solvers convert to arrays
    internally.  Values must be finite.
    """

    def __init__(self, values: Mapping[str, float] = ()):  # type: ignore[assignment]
        super().__init__({str(k): float(v) for k, v in dict(values).items()})
        bad = [k for k, v in self.items() if not np.isfinite(v)]
        if bad:
            raise ValueError(f"non-finite value at point {bad[0]!r}")

    @classmethod
    def from_array(cls, ids: Sequence[str], values: np.ndarray) -> "FunctionField":
        return cls(dict(zip(ids, np.asarray(values, dtype=float))))

    def array_for(self, ids: Sequence[str]) -> np.ndarray:
        try:
            return np.asarray([self[p] for p in ids], dtype=float)
        except KeyError as e:
            raise KeyError(f"function field missing a value at point {e.args[0]!r}") from None

    @classmethod
    def constant(cls, ids: Iterable[str], value: float) -> "FunctionField":
        return cls({p: value for p in ids})


# ---------------------------------------------------------------------------
# Energy forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyForm:
    """Exponent p plus the geometry the energy is taken in.

    geometry: "base" or "spherical".  For "spherical", q defaults to 2p,
    the exponent making the energy identical with the base one.
    """

    p: float
    geometry: str = "base"
    q: Optional[float] = None

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError(f"exponent p must be >= 1, got {self.p}")
        if self.geometry not in ("base", "spherical"):
            raise ValueError("geometry must be 'base' or 'spherical'")

    @property
    def q_eff(self) -> float:
        return 2.0 * self.p if self.q is None else float(self.q)


def _base_space(obj: Union[Space, SphericalizedSpace]) -> Space:
    return obj.base if isinstance(obj, SphericalizedSpace) else obj


def form_edge_weights(form: EnergyForm, obj: Union[Space, SphericalizedSpace]) -> np.ndarray:
    """w_e such that the energy is sum_e w_e |u(x)-u(y)|^p over base edges."""
    space = _base_space(obj)
    u, v = space.edges[:, 0], space.edges[:, 1]
    m_e = np.sqrt(space.masses[u] * space.masses[v])
    if form.geometry == "base":
        return m_e / space.lengths**form.p
    if not isinstance(obj, SphericalizedSpace):
        raise ValueError("spherical form needs a sphericalized space")
    hh = obj.hat_h[u] * obj.hat_h[v]
    m_hat = m_e * hh ** (form.q_eff / 2.0)
    len_hat = space.lengths * hh
    return m_hat / len_hat**form.p


# ---------------------------------------------------------------------------
# Gradients and energies
# ---------------------------------------------------------------------------

def edge_gradient(space: Space, u: Union[FunctionField, np.ndarray]) -> EdgeGradientField:
    """Edge slope |u(x)-u(y)| / len(x,y); the smallest edge field whose path
    sums dominate increments of u along every edge path."""
    vals = u.array_for(space.ids) if isinstance(u, FunctionField) else np.asarray(u, float)
    if vals.shape != (space.n_points,):
        raise ValueError("need a value for every point")
    du = np.abs(vals[space.edges[:, 0]] - vals[space.edges[:, 1]])
    return EdgeGradientField(space, du / space.lengths)


def _domain_edge_mask(space: Space, domain: Optional[Set[str]]) -> np.ndarray:
    if domain is None:
        return np.ones(len(space.edges), dtype=bool)
    if not domain:
        raise ValueError("empty domain")
    mask = np.zeros(space.n_points, dtype=bool)
    for p in domain:
        mask[space._idx(p)] = True
    return mask[space.edges[:, 0]] | mask[space.edges[:, 1]]


def p_energy(
    form: EnergyForm,
    obj: Union[Space, SphericalizedSpace],
    u: Union[FunctionField, np.ndarray],
    domain: Optional[Set[str]] = None,
) -> float:
    """Energy of u over the edges meeting `domain` (all edges when None)."""
    space = _base_space(obj)
    vals = u.array_for(space.ids) if isinstance(u, FunctionField) else np.asarray(u, float)
    w = form_edge_weights(form, obj)
    du = np.abs(vals[space.edges[:, 0]] - vals[space.edges[:, 1]])
    mask = _domain_edge_mask(space, domain)
    return float((w[mask] * du[mask] ** form.p).sum())


def energy_gradient(
    form: EnergyForm,
    obj: Union[Space, SphericalizedSpace],
    u: np.ndarray,
    eps: float = 0.0,
) -> np.ndarray:
    """d/du of the (optionally smoothed) energy, one entry per vertex."""
    space = _base_space(obj)
    w = form_edge_weights(form, obj)
    return _energy_grad_arrays(space.n_points, space.edges, w, form.p, np.asarray(u, float), eps)


# ---------------------------------------------------------------------------
# Core minimizer on (edges, weights)
# ---------------------------------------------------------------------------

@dataclass
class SolveInfo:
    iterations: int
    residual: float
    energy: float
    converged: bool
    method: str


def _energy_arrays(edges, w, p, u, eps):
    du = u[edges[:, 0]] - u[edges[:, 1]]
    return float((w * (du * du + eps * eps) ** (p / 2.0)).sum())


def _energy_grad_arrays(n, edges, w, p, u, eps):
    du = u[edges[:, 0]] - u[edges[:, 1]]
    coef = w * p * (du * du + eps * eps) ** ((p - 2.0) / 2.0) * du
    g = np.zeros(n)
    np.add.at(g, edges[:, 0], coef)
    np.add.at(g, edges[:, 1], -coef)
    return g


def _laplacian(n_free, free_of, edges, omega, u_full):
    """Weighted Laplacian restricted to free vertices plus boundary rhs."""
    i, j = edges[:, 0], edges[:, 1]
    fi, fj = free_of[i], free_of[j]
    both = (fi >= 0) & (fj >= 0)
    ionly = (fi >= 0) & (fj < 0)
    jonly = (fi < 0) & (fj >= 0)
    rows = np.concatenate([fi[both], fj[both], fi[both], fj[both], fi[ionly], fj[jonly]])
    cols = np.concatenate([fj[both], fi[both], fi[both], fj[both], fi[ionly], fj[jonly]])
    vals = np.concatenate(
        [-omega[both], -omega[both], omega[both], omega[both], omega[ionly], omega[jonly]]
    )
    L = sp.csr_matrix((vals, (rows, cols)), shape=(n_free, n_free))
    rhs = np.zeros(n_free)
    np.add.at(rhs, fi[ionly], omega[ionly] * u_full[j[ionly]])
    np.add.at(rhs, fj[jonly], omega[jonly] * u_full[i[jonly]])
    return L, rhs


def _linear_solve(L: sp.csr_matrix, b: np.ndarray, x0: Optional[np.ndarray]) -> np.ndarray:
    n = L.shape[0]
    if n == 0:
        return np.zeros(0)
    # tiny ridge keeps degenerate IRLS systems invertible
    L = L + sp.eye(n, format="csr") * (1e-300 + 1e-14 * abs(L.diagonal()).max())
    if n <= 20000 or not _HAVE_PYAMG:
        if n <= 60000:
            return spla.spsolve(L.tocsc(), b)
        x, info = spla.cg(L, b, x0=x0, rtol=1e-12, atol=0.0, maxiter=20 * int(np.sqrt(n)) + 500)
        if info != 0:  # pragma: no cover - fallback path
            return spla.spsolve(L.tocsc(), b)
        return x
    ml = pyamg.smoothed_aggregation_solver(L.tocsr(), max_coarse=200)
    M = ml.aspreconditioner()
    x, info = spla.cg(L, b, x0=x0, rtol=1e-12, atol=0.0, M=M, maxiter=2000)
    if info != 0:  # pragma: no cover
        x = ml.solve(b, x0=x, tol=1e-12, accel="cg", maxiter=2000)
    return x


def minimize_edge_energy(
    n: int,
    edges: np.ndarray,
    weights: np.ndarray,
    p: float,
    fixed_idx: np.ndarray,
    fixed_val: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 250,
    x0: Optional[np.ndarray] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, SolveInfo]:
    """Minimize sum_e w_e |u_i - u_j|^p with the given values pinned.

    Every free connected component must contain a vertex adjacent to a
    pinned one (otherwise the minimizer is not unique and a ValueError is
    raised).  Returns the full value vector and convergence info.
    """
    if not p > 1:
        raise ValueError(f"solvers need p > 1, got p={p}")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    weights = np.asarray(weights, dtype=float)
    fixed_idx = np.asarray(fixed_idx, dtype=np.int64)
    fixed_val = np.asarray(fixed_val, dtype=float)
    free_mask = np.ones(n, dtype=bool)
    free_mask[fixed_idx] = False
    free = np.flatnonzero(free_mask)
    free_of = -np.ones(n, dtype=np.int64)
    free_of[free] = np.arange(free.size)

    _check_components_touch_boundary(n, edges, free_mask)

    u = np.zeros(n)
    u[fixed_idx] = fixed_val
    if fixed_val.size == 0:
        raise ValueError("no boundary values: minimizer is not unique")
    lo, hi = float(fixed_val.min()), float(fixed_val.max())
    data_range = max(hi - lo, 1e-12)
    eps = 1e-9 * data_range

    if x0 is not None:
        u[free] = np.asarray(x0, dtype=float)[free]
    elif rng is not None:
        u[free] = rng.uniform(lo, hi, size=free.size)
    else:
        u[free] = 0.5 * (lo + hi)

    if free.size == 0:
        e = _energy_arrays(edges, weights, p, u, 0.0)
        return u, SolveInfo(0, 0.0, e, True, "fixed")

    if p == 2.0:
        L, rhs = _laplacian(free.size, free_of, edges, weights, u)
        u[free] = _linear_solve(L, rhs, u[free])
        g = _energy_grad_arrays(n, edges, weights, p, u, 0.0)
        res = float(np.abs(g[free]).max())
        e = _energy_arrays(edges, weights, p, u, 0.0)
        return u, SolveInfo(1, res, e, True, "direct")

    # scale for the first-order residual test
    gscale = float((weights * p * data_range ** (p - 1.0)).max()) + 1e-300

    def grad(uv):
        return _energy_grad_arrays(n, edges, weights, p, uv, eps)

    def energy(uv):
        return _energy_arrays(edges, weights, p, uv, eps)

    e_cur = energy(u)
    it = 0
    converged = False
    newton_phase = False
    while it < max_iter:
        it += 1
        du = u[edges[:, 0]] - u[edges[:, 1]]
        s2 = du * du + eps * eps
        if newton_phase:
            omega = 0.5 * p * s2 ** ((p - 4.0) / 2.0) * ((p - 1.0) * du * du + eps * eps) * weights
        else:
            omega = 0.5 * p * s2 ** ((p - 2.0) / 2.0) * weights
        L, rhs = _laplacian(free.size, free_of, edges, omega, u)
        target = _linear_solve(L, rhs, u[free])
        step = target - u[free]
        # backtracking line search on the smoothed energy
        g = grad(u)
        slope = float(g[free] @ step)
        t = 1.0
        accepted = False
        for _ in range(40):
            trial = u.copy()
            trial[free] = u[free] + t * step
            e_new = energy(trial)
            if e_new <= e_cur + 1e-4 * t * min(slope, 0.0) and e_new <= e_cur * (1 + 1e-15) + 1e-300:
                accepted = e_new < e_cur or t == 1.0
                u = trial
                e_cur = e_new
                break
            t *= 0.5
        res = float(np.abs(grad(u)[free]).max()) / gscale
        if res <= tol:
            converged = True
            break
        if not accepted and newton_phase:
            break
        if not accepted or res <= 1e4 * tol:
            newton_phase = True
    res = float(np.abs(grad(u)[free]).max()) / gscale
    return u, SolveInfo(it, res, e_cur, converged or res <= tol, "irls+newton")


def _check_components_touch_boundary(n, edges, free_mask):
    free = np.flatnonzero(free_mask)
    if free.size == 0:
        return
    fi = -np.ones(n, dtype=np.int64)
    fi[free] = np.arange(free.size)
    both = free_mask[edges[:, 0]] & free_mask[edges[:, 1]]
    sub = sp.csr_matrix(
        (np.ones(both.sum()), (fi[edges[both, 0]], fi[edges[both, 1]])),
        shape=(free.size, free.size),
    )
    ncomp, labels = connected_components(sub, directed=False)
    touch = np.zeros(ncomp, dtype=bool)
    cross = free_mask[edges[:, 0]] ^ free_mask[edges[:, 1]]
    for a, b in edges[cross]:
        v = a if free_mask[a] else b
        touch[labels[fi[v]]] = True
    if not touch.all():
        raise ValueError(
            "a connected component of the domain has no boundary vertex; "
            "the minimizer there is not unique"
        )


# ---------------------------------------------------------------------------
# Dirichlet solve and condenser capacity on a space
# ---------------------------------------------------------------------------

def solve_p_harmonic(
    form: EnergyForm,
    obj: Union[Space, SphericalizedSpace],
    domain: Set[str],
    boundary_data: Union[FunctionField, Mapping[str, float]],
    tol: float = 1e-10,
    max_iter: int = 250,
    x0: Optional[Mapping[str, float]] = None,
    seed: Optional[int] = None,
    return_info: bool = False,
):
    """Minimize the form's energy over fields agreeing with `boundary_data`
    off `domain`.  Returns the solution on domain ∪ (its outside neighbors).

    The solution obeys the maximum principle and is monotone in the
    boundary data; both are consequences of minimizing a convex symmetric
    edge energy.
    """
    space = _base_space(obj)
    if not domain:
        raise ValueError("empty domain")
    dom_idx = np.asarray(sorted(space._idx(p) for p in domain), dtype=np.int64)
    dmask = np.zeros(space.n_points, dtype=bool)
    dmask[dom_idx] = True
    touch = dmask[space.edges[:, 0]] | dmask[space.edges[:, 1]]
    sub_edges = space.edges[touch]
    verts = np.unique(sub_edges)
    bnd = verts[~dmask[verts]]
    data = boundary_data if isinstance(boundary_data, FunctionField) else FunctionField(boundary_data)
    try:
        bvals = np.asarray([data[space.ids[i]] for i in bnd], dtype=float)
    except KeyError as e:
        raise ValueError(f"boundary data missing at point {e.args[0]!r}") from None

    # compress to the touched subgraph
    lookup = -np.ones(space.n_points, dtype=np.int64)
    lookup[verts] = np.arange(verts.size)
    cedges = lookup[sub_edges]
    w = form_edge_weights(form, obj)[touch]
    fixed_idx = lookup[bnd]
    x0_arr = None
    if x0 is not None:
        x0_arr = np.zeros(verts.size)
        for k, vi in enumerate(verts):
            x0_arr[k] = x0.get(space.ids[vi], 0.0)
    rng = None if seed is None else split_rng(seed, "solver-init")
    u, info = minimize_edge_energy(
        verts.size, cedges, w, form.p, fixed_idx, bvals,
        tol=tol, max_iter=max_iter, x0=x0_arr, rng=rng,
    )
    out = FunctionField({space.ids[vi]: float(u[lookup[vi]]) for vi in verts})
    return (out, info) if return_info else out


def condenser_capacity(
    form: EnergyForm,
    obj: Union[Space, SphericalizedSpace],
    core: Set[str],
    omega: Set[str],
    return_potential: bool = False,
):
    """Least energy among potentials that are 1 on `core` and 0 off `omega`,
    counted over the edges meeting `omega`.

    Empty core gives 0 (the zero field is admissible).  core == omega gives
    the energy of the indicator, i.e. the cut energy.
    """
    space = _base_space(obj)
    if not set(core) <= set(omega):
        raise ValueError("core must be contained in omega")
    if not core:
        return (0.0, FunctionField()) if return_potential else 0.0
    n = space.n_points
    vals = np.zeros(n)
    fixed = np.ones(n, dtype=bool)
    for pt in omega:
        fixed[space._idx(pt)] = False
    for pt in core:
        i = space._idx(pt)
        fixed[i] = True
        vals[i] = 1.0
    fixed_idx = np.flatnonzero(fixed)
    w = form_edge_weights(form, obj)
    free = np.flatnonzero(~fixed)
    if free.size:
        u, _ = minimize_edge_energy(
            n, space.edges, w, form.p, fixed_idx, vals[fixed_idx],
            tol=1e-12, max_iter=300, x0=vals,
        )
    else:
        u = vals
    np.clip(u, 0.0, 1.0, out=u)
    cap = p_energy(form, obj, u, domain=set(omega))
    if return_potential:
        return cap, FunctionField.from_array(space.ids, u)
    return cap


# ---------------------------------------------------------------------------
# The extended graph with ∞ attached (for problems whose boundary is ∞)
# ---------------------------------------------------------------------------

@dataclass
class ExtendedGraph:
    """Base edges plus a star joining ∞ (index n) to the outermost shell.

    The star edge at x has length d_a(x, ∞) = 1/(1+|x|) and carries the
    finite endpoint's transformed mass (∞ itself is massless); this makes
    the star behave like one more resistive shell of the model.  The
    connection radius is a discretization dial; callers report sensitivity
    to it.
    """

    sph: SphericalizedSpace
    p: float
    q: float
    connection_radius: float
    edges: np.ndarray
    weights: np.ndarray
    ring: np.ndarray

    @property
    def n_vertices(self) -> int:
        return self.sph.base.n_points + 1

    def idx(self, point: str) -> int:
        return self.sph._idx(point)


def extended_spherical_graph(
    sph: SphericalizedSpace,
    p: float,
    q: Optional[float] = None,
    connection_radius: Optional[float] = None,
) -> ExtendedGraph:
    qq = 2.0 * p if q is None else float(q)
    base = sph.base
    form = EnergyForm(p, "spherical", qq)
    w_base = form_edge_weights(form, sph)
    hmin = float(sph.hat_h.min())
    conn = hmin * (1 + 1e-9) if connection_radius is None else float(connection_radius)
    ring = np.flatnonzero(sph.hat_h < conn)
    if ring.size == 0:
        raise ValueError("connection radius leaves ∞ isolated")
    n = base.n_points
    star = np.stack([ring, np.full(ring.size, n, dtype=np.int64)], axis=1)
    m_hat_ring = sph.hat_masses[ring]
    w_star = m_hat_ring / sph.hat_h[ring] ** p
    return ExtendedGraph(
        sph,
        p,
        qq,
        conn,
        np.concatenate([base.edges, star], axis=0),
        np.concatenate([w_base, w_star]),
        ring,
    )


# ---------------------------------------------------------------------------
# Parabolic / hyperbolic classification
# ---------------------------------------------------------------------------

@dataclass
class ParabolicityReport:
    verdict: str  # PARABOLIC | HYPERBOLIC | INCONCLUSIVE
    p: float
    q: float
    sigma: float
    exponent: float
    margin: float
    increment_slope: Optional[float]
    partial_sums: Dict[float, float]
    sigma_per_rung: Dict[float, float]
    rows: List[dict] = field(default_factory=list)


def _dyadic_ball_masses(space: Space, r_max: float) -> Tuple[np.ndarray, np.ndarray]:
    rem = space.remoteness_all()
    ks = np.arange(0, int(np.floor(np.log2(r_max) + 1e-12)) + 1)
    radii = 2.0**ks
    masses = np.array([space.masses[rem < r].sum() for r in radii])
    return radii, masses


def _fit_sigma(radii: np.ndarray, masses: np.ndarray) -> float:
    """Log-log slope of the ball-mass ladder, fit on the upper half of the
    rungs (at least 3) so that small-radius curvature does not bias it."""
    k = np.log2(radii)
    lo = max(1, len(k) - max(3, len(k) // 2))
    return float(np.polyfit(k[lo:], np.log2(masses[lo:]), 1)[0])


def classify_parabolicity(
    space: Space,
    p: float,
    q: Optional[float] = None,
    truncation_ladder: Optional[Sequence[float]] = None,
    r_max: Optional[float] = None,
    margin_resolution: float = 0.1,
) -> ParabolicityReport:
    """Integral-criterion classifier from the growth of central ball masses.

    Fits mass(B(a, r)) ~ c r^sigma on dyadic radii, extrapolates the
    integrand r^{(q-2p+1-sigma)/(p-1)} past the truncation, and calls the
    tail divergent iff the exponent is >= -1.  When the fitted exponent
    sits within `margin_resolution` of the critical value, the measured
    dyadic increments break the tie: a last increment ratio that is not
    geometrically decaying means divergence.  q = 2p recovers the plain
    volume test.

    `r_max` bounds the radii whose balls are trusted (balls beyond roughly
    half the model's extent may feel the truncation); it defaults to half
    the maximal remoteness.  Remoteness-truncated rungs of the ladder use
    their own radius, since their central balls are exact.
    """
    if not p > 1:
        raise ValueError("classifier needs p > 1")
    qq = 2.0 * p if q is None else float(q)
    R_max = space.truncation_radius()
    if truncation_ladder is None:
        truncation_ladder = [R_max / 4, R_max / 2, R_max]
    ladder = sorted(set(float(R) for R in truncation_ladder))
    if len(ladder) < 3:
        raise ValueError("need a truncation ladder with at least 3 rungs")
    top_r_max = float(r_max) if r_max is not None else R_max / 2.0

    partial_sums: Dict[float, float] = {}
    sigma_per_rung: Dict[float, float] = {}
    rows: List[dict] = []
    inv = 1.0 / (p - 1.0)
    for R in ladder:
        if R >= R_max:
            sub, rad_cap = space, top_r_max
        else:
            sub, rad_cap = subspace_by_remoteness(space, R), R
        radii, masses = _dyadic_ball_masses(sub, max(rad_cap, 4.0))
        good = masses > 0
        radii, masses = radii[good], masses[good]
        if len(radii) < 3:
            raise ValueError(f"truncation {R} leaves fewer than 3 dyadic rungs")
        incr = radii * (radii ** (qq - 2.0 * p + 1.0) / masses) ** inv
        partial_sums[R] = float(incr.sum())
        sigma_per_rung[R] = _fit_sigma(radii, masses)
        rows.append(
            {"truncation": R, "radii": radii.tolist(), "masses": masses.tolist(),
             "increments": incr.tolist()}
        )

    R_top = ladder[-1]
    sigma = sigma_per_rung[R_top]
    exponent = (qq - 2.0 * p + 1.0 - sigma) / (p - 1.0)
    margin = exponent + 1.0

    increment_slope = None
    if abs(margin) > margin_resolution:
        divergent = margin >= 0
        verdict = "PARABOLIC" if divergent else "HYPERBOLIC"
    else:
        # near-critical: let the measured dyadic increments break the tie.
        # Their consecutive ratios tend to 2^{exponent+1} with O(2^-k)
        # corrections, so one Richardson step isolates the limit.
        incr = np.asarray(rows[-1]["increments"])
        if len(incr) < 3 or np.any(incr[-3:] <= 0):
            verdict = "INCONCLUSIVE"
        else:
            r_last = incr[-1] / incr[-2]
            r_prev = incr[-2] / incr[-3]
            limit = max(2.0 * r_last - r_prev, 1e-12)
            increment_slope = float(np.log2(limit))
            verdict = "PARABOLIC" if increment_slope >= -0.02 else "HYPERBOLIC"
    return ParabolicityReport(
        verdict, p, qq, sigma, exponent, margin, increment_slope,
        partial_sums, sigma_per_rung, rows,
    )


# ---------------------------------------------------------------------------
# Capacity probe at ∞
# ---------------------------------------------------------------------------

@dataclass
class CapacityTrendReport:
    verdict: str  # VANISHING | POSITIVE | INCONCLUSIVE
    p: float
    q: float
    radius_ladder: List[float]
    truncation_ladder: List[float]
    capacities: Dict[float, Dict[float, float]]  # truncation -> radius -> cap
    truncation_slope: float
    classifier_verdict: Optional[str] = None
    consistent_with_classifier: Optional[bool] = None
    rows: List[dict] = field(default_factory=list)


def _capacity_at_infinity(sph: SphericalizedSpace, p: float, rho: float) -> float:
    """cap_p({∞}, hat-ball(∞, rho)) on the extended graph, in the spherical
    form with the sphericalization's own q."""
    ext = extended_spherical_graph(sph, p, sph.q)
    n = sph.base.n_points
    omega_mask = sph.hat_ball_mask(INFINITY, rho)  # over X̂, ∞ last
    fixed = ~omega_mask
    fixed[n] = True
    vals = np.zeros(n + 1)
    vals[n] = 1.0
    fixed_idx = np.flatnonzero(fixed)
    if np.all(fixed):
        u = vals
    else:
        u, _ = minimize_edge_energy(
            n + 1, ext.edges, ext.weights, p, fixed_idx, vals[fixed_idx],
            tol=1e-12, max_iter=300, x0=vals,
        )
    du = np.abs(u[ext.edges[:, 0]] - u[ext.edges[:, 1]])
    touch = omega_mask[ext.edges[:, 0]] | omega_mask[ext.edges[:, 1]]
    return float((ext.weights[touch] * du[touch] ** p).sum())


def capacity_at_infinity_probe(
    sph: SphericalizedSpace,
    p: float,
    radius_ladder: Sequence[float],
    truncation_ladder: Optional[Sequence[float]] = None,
    slope_vanishing: float = -0.15,
    slope_positive: float = -0.05,
) -> CapacityTrendReport:
    """Trend of cap_p({∞}, hat-ball(∞, rho)) along nested domains and
    growing truncations.

    Whether the capacity of the point at infinity vanishes is a statement
    about ever larger models, so the probe computes the condenser capacity
    on a ladder of truncations of the same base space and fits the decay
    across truncations (at each domain radius).  A clearly negative power
    trend means VANISHING; a flat trend means POSITIVE.  The domain ladder
    supplies the nested-exhaustion structure and is reported alongside.
    """
    if not p > 1:
        raise ValueError("capacity probe needs p > 1")
    rhos = sorted(set(float(r) for r in radius_ladder))
    if not rhos or rhos[0] <= 0 or rhos[-1] >= 1:
        raise ValueError("radius ladder must lie strictly inside (0, 1)")
    base = sph.base
    R_max = base.truncation_radius()
    if truncation_ladder is None:
        truncation_ladder = [R_max / 4, R_max / 2, R_max]
    truncs = sorted(set(float(R) for R in truncation_ladder))
    caps: Dict[float, Dict[float, float]] = {}
    rows: List[dict] = []
    for R in truncs:
        sub = base if R >= R_max else subspace_by_remoteness(base, R)
        ssph = sphericalize(sub, sph.q)
        caps[R] = {}
        for rho in rhos:
            inner = 1.0 / rho - 1.0
            if inner >= R:  # the hat ball swallows no vertex: skip rung
                caps[R][rho] = float("nan")
                continue
            caps[R][rho] = _capacity_at_infinity(ssph, p, rho)
            rows.append({"truncation": R, "rho": rho, "capacity": caps[R][rho]})

    slopes = []
    for rho in rhos:
        pts = [(R, caps[R][rho]) for R in truncs if np.isfinite(caps[R][rho]) and caps[R][rho] > 0]
        if len(pts) >= 2:
            lr = np.log([c for _, c in pts])
            lR = np.log([R for R, _ in pts])
            slopes.append(float(np.polyfit(lR, lr, 1)[0]))
    if not slopes:
        verdict, slope = "INCONCLUSIVE", float("nan")
    else:
        slope = float(np.mean(slopes))
        if slope <= slope_vanishing:
            verdict = "VANISHING"
        elif slope >= slope_positive:
            verdict = "POSITIVE"
        else:
            verdict = "INCONCLUSIVE"

    classifier_verdict = None
    consistent = None
    if abs(sph.q - 2.0 * p) < 1e-12:
        try:
            rep = classify_parabolicity(base, p, sph.q, truncation_ladder=truncs)
            classifier_verdict = rep.verdict
            if rep.verdict != "INCONCLUSIVE" and verdict != "INCONCLUSIVE":
                consistent = (rep.verdict == "PARABOLIC") == (verdict == "VANISHING")
        except ValueError:
            pass
    return CapacityTrendReport(
        verdict, p, sph.q, rhos, truncs, caps, slope,
        classifier_verdict, consistent, rows,
    )
