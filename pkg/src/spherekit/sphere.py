"""Sphericalization of a finite space: the point at infinity, the bounded
quasimetric, its chain metric, transformed masses and gradients.

For a space with base point a and remoteness |x| = d(x, a), the quasimetric
on X ∪ {∞} is

    d_a(x, y) = d(x, y) / ((1 + |x|)(1 + |y|)),   d_a(x, ∞) = 1 / (1 + |x|),

and the chain metric d̂ is the largest metric below d_a: the infimum of
d_a-sums over finite relay sequences, i.e. single-source shortest paths on
the complete graph over X ∪ {∞} with d_a hop weights.  Exactness matters
here (the sandwich d_a/4 <= d̂ <= d_a and two boundary identities are
checked as invariants), so the relay graph is genuinely complete; the cost
is one dense O(n²) Dijkstra per source over the cached all-pairs base
metric.  That bounds the usable size to a few thousand points, which is
what the estimator layer expects; large-space callers use quasimetric balls
instead (see geometry module).

Transformed vertex masses are mass(x) / (1 + |x|)^q with zero mass at ∞.
The edge-level gradient transform multiplies an edge slope by
(1 + |x|)(1 + |y|); this edge-symmetric choice makes the slope-versus-
quasimetric identity exact per edge, which downstream energy identities
rely on.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from ._util import split_rng
from .space import INFINITY, Space, UnknownPointError

__all__ = [
    "EdgeGradientField",
    "SphericalizedSpace",
    "sphericalize",
    "InclusionReport",
    "chain_metric_bruteforce",
]

try:  # pragma: no cover - exercised implicitly
    from numba import njit

    _HAVE_NUMBA = True
except Exception:  # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*a, **k):
        def wrap(f):
            return f

        return wrap if not (len(a) == 1 and callable(a[0])) else a[0]


@njit(cache=True)
def _chain_dijkstra_kernel(D, hh, src):  # pragma: no cover - compiled
    """Dense Dijkstra on the complete relay graph over X ∪ {∞}.

    D: (n, n) base distances; hh: (n,) values 1/(1+|x|); vertex n is ∞.
    Hop weights: D[u, v]*hh[u]*hh[v] inside X, hh[u] between u and ∞.
    """
    n = D.shape[0]
    N = n + 1
    dist = np.full(N, np.inf)
    done = np.zeros(N, np.bool_)
    dist[src] = 0.0
    for _ in range(N):
        u = -1
        best = np.inf
        for i in range(N):
            if not done[i] and dist[i] < best:
                best = dist[i]
                u = i
        if u < 0:
            break
        done[u] = True
        if u == n:
            for v in range(n):
                if not done[v]:
                    nd = best + hh[v]
                    if nd < dist[v]:
                        dist[v] = nd
        else:
            hu = hh[u]
            for v in range(n):
                if not done[v]:
                    nd = best + D[u, v] * hu * hh[v]
                    if nd < dist[v]:
                        dist[v] = nd
            if not done[n]:
                nd = best + hu
                if nd < dist[n]:
                    dist[n] = nd
    return dist


def _chain_dijkstra_numpy(D: np.ndarray, hh: np.ndarray, src: int) -> np.ndarray:
    """Pure-numpy fallback with identical semantics to the compiled kernel."""
    n = D.shape[0]
    N = n + 1
    dist = np.full(N, np.inf)
    done = np.zeros(N, dtype=bool)
    dist[src] = 0.0
    for _ in range(N):
        masked = np.where(done, np.inf, dist)
        u = int(np.argmin(masked))
        if not np.isfinite(masked[u]):
            break
        done[u] = True
        best = dist[u]
        if u == n:
            cand = best + hh
            np.minimum(dist[:n], cand, out=dist[:n])
        else:
            cand = best + D[u] * (hh[u] * hh)
            np.minimum(dist[:n], cand, out=dist[:n])
            if best + hh[u] < dist[n]:
                dist[n] = best + hh[u]
    return dist


def chain_metric_bruteforce(da: np.ndarray, max_hops: int) -> np.ndarray:
    """All-pairs chain distances restricted to at most `max_hops` hops.

    (min, +) powers of the hop-weight matrix; independent of the Dijkstra
    path and used as its oracle in tests.
    """
    W = da.copy()
    np.fill_diagonal(W, 0.0)
    best = W.copy()
    for _ in range(max_hops - 1):
        # best_{k+1}[i, j] = min_z best_k[i, z] + W[z, j]
        best = np.minimum(best, (best[:, :, None] + W[None, :, :]).min(axis=1))
    return best


@dataclass
class EdgeGradientField:
    """Nonnegative value per edge, aligned with the owning space's edge list."""

    space: Space
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.space.edges),):
            raise ValueError("gradient field must have one value per edge")
        if np.any(self.values < 0):
            raise ValueError("gradient values must be nonnegative")

    def as_dict(self) -> Dict[Tuple[str, str], float]:
        ids = self.space.ids
        return {
            (ids[u], ids[v]): float(g)
            for (u, v), g in zip(self.space.edges, self.values)
        }


@dataclass
class InclusionViolation:
    center: str
    radius: float
    regime: str
    relation: str


@dataclass
class InclusionReport:
    """Outcome of sampled ball-inclusion checks (they hold exactly; any entry
    in `violations` indicates an implementation bug)."""

    checked: int
    violations: List[InclusionViolation] = field(default_factory=list)
    rows: List[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


class SphericalizedSpace:
    """A base space together with ∞, d_a, d̂ and the transformed masses."""

    def __init__(self, base: Space, q: float, max_chain_points: int = 8000):
        if not q > 0:
            raise ValueError(f"exponent q must be > 0, got {q}")
        self.base = base
        self.q = float(q)
        self.infinity = INFINITY
        if INFINITY in base.index:
            raise ValueError("base space already contains the reserved id for ∞")
        rem = base.remoteness_all()
        self.remoteness = rem
        #: 1/(1+|x|) per vertex; equals both d_a(x, ∞) and d̂(x, ∞).
        self.hat_h = 1.0 / (1.0 + rem)
        self.hat_masses = base.masses * self.hat_h**self.q
        self.max_chain_points = int(max_chain_points)
        self._hat_cache: Dict[int, np.ndarray] = {}

    # -- identifiers -------------------------------------------------------
    @property
    def n_points(self) -> int:
        """Points of X̂ including ∞."""
        return self.base.n_points + 1

    def _idx(self, point: str) -> int:
        """Index in 0..n with n standing for ∞."""
        if point == INFINITY:
            return self.base.n_points
        return self.base._idx(point)

    def ids_hat(self) -> List[str]:
        return self.base.ids + [INFINITY]

    # -- masses ------------------------------------------------------------
    def hat_mass(self, point: str) -> float:
        if point == INFINITY:
            return 0.0
        return float(self.hat_masses[self.base._idx(point)])

    def total_hat_mass(self) -> float:
        return float(self.hat_masses.sum())

    def hat_masses_hat(self) -> np.ndarray:
        """Masses over X̂ in index order (∞ last, zero)."""
        return np.concatenate([self.hat_masses, [0.0]])

    # -- quasimetric d_a ----------------------------------------------------
    def da_row(self, center: str) -> np.ndarray:
        """d_a from `center` to every point of X̂ (∞ last)."""
        n = self.base.n_points
        out = np.empty(n + 1)
        if center == INFINITY:
            out[:n] = self.hat_h
            out[n] = 0.0
            return out
        i = self.base._idx(center)
        out[:n] = self.base.dist_row(i) * (self.hat_h[i] * self.hat_h)
        out[n] = self.hat_h[i]
        return out

    def quasimetric_da(self, x: str, y: str) -> float:
        if x == INFINITY and y == INFINITY:
            return 0.0
        if x == INFINITY:
            x, y = y, x
        return float(self.da_row(x)[self._idx(y)])

    # -- chain metric d̂ -----------------------------------------------------
    def _hat_row_idx(self, i: int) -> np.ndarray:
        row = self._hat_cache.get(i)
        if row is not None:
            return row
        n = self.base.n_points
        if n > self.max_chain_points:
            raise ValueError(
                f"chain metric needs the all-pairs base matrix; {n} points exceeds "
                f"the configured cap {self.max_chain_points} (use quasimetric balls "
                "for estimators at this scale)"
            )
        D = self.base.all_pairs()
        if _HAVE_NUMBA:
            row = _chain_dijkstra_kernel(D, self.hat_h, i)
        else:
            row = _chain_dijkstra_numpy(D, self.hat_h, i)
        self._hat_cache[i] = row
        return row

    def hat_row(self, center: str) -> np.ndarray:
        """d̂ from `center` to every point of X̂ (∞ last)."""
        return self._hat_row_idx(self._idx(center))

    def chain_metric(self, source: str) -> Dict[str, float]:
        """Mapping point -> d̂(source, point) over all of X̂."""
        row = self.hat_row(source)
        out = {p: float(row[k]) for k, p in enumerate(self.base.ids)}
        out[INFINITY] = float(row[-1])
        return out

    def d_hat(self, x: str, y: str) -> float:
        return float(self.hat_row(x)[self._idx(y)])

    def diameter_hat(self) -> float:
        """max over all pairs of d̂ (computes every source; small spaces)."""
        return max(
            float(self._hat_row_idx(i).max()) for i in range(self.base.n_points + 1)
        )

    # -- balls ---------------------------------------------------------------
    def hat_ball_mask(self, center: str, radius: float) -> np.ndarray:
        """Membership mask over X̂ (∞ last) of the open d̂-ball.

        The ball at ∞ uses the exact identity
        B̂(∞, r) = X̂ \\ {x : d(x, a) <= 1/r - 1}; balls at finite centers
        use the chain metric.
        """
        if not radius > 0:
            raise ValueError("radius must be > 0")
        n = self.base.n_points
        if center == INFINITY:
            mask = np.empty(n + 1, dtype=bool)
            mask[:n] = self.remoteness > (1.0 / radius - 1.0)
            mask[n] = True
            return mask
        return self.hat_row(center) < radius

    def hat_ball(self, center: str, radius: float) -> Set[str]:
        mask = self.hat_ball_mask(center, radius)
        out = {self.base.ids[i] for i in np.flatnonzero(mask[:-1])}
        if mask[-1]:
            out.add(INFINITY)
        return out

    def hat_ball_measure(self, center: str, radius: float) -> float:
        mask = self.hat_ball_mask(center, radius)
        return float(self.hat_masses[mask[:-1]].sum())

    def quasi_ball_mask(self, center: str, radius: float) -> np.ndarray:
        """Membership mask of the d_a-ball B_a(center, radius) over X̂.

        Exact for center ∞ (where d_a = d̂); for finite centers it encloses
        the d̂-ball at radius/4 and is contained in the one at radius, so it
        is the cheap stand-in estimators use on large spaces.
        """
        if not radius > 0:
            raise ValueError("radius must be > 0")
        return self.da_row(center) < radius

    def quasi_ball_measure(self, center: str, radius: float) -> float:
        mask = self.quasi_ball_mask(center, radius)
        return float(self.hat_masses[mask[:-1]].sum())

    # -- gradient transform ---------------------------------------------------
    def edge_factors(self) -> np.ndarray:
        """(1+|x|)(1+|y|) per edge of the base space."""
        u, v = self.base.edges[:, 0], self.base.edges[:, 1]
        return (1.0 + self.remoteness[u]) * (1.0 + self.remoteness[v])

    def transform_gradient(
        self, g: EdgeGradientField, direction: str = "forward"
    ) -> EdgeGradientField:
        """Edge slope transform between the base and sphericalized scales.

        forward: ĝ_e = g_e (1+|x|)(1+|y|); inverse is the exact reciprocal,
        so inverse(forward(g)) == g.
        """
        if g.space is not self.base:
            raise ValueError("gradient field belongs to a different space")
        f = self.edge_factors()
        if direction == "forward":
            return EdgeGradientField(self.base, g.values * f)
        if direction == "inverse":
            return EdgeGradientField(self.base, g.values / f)
        raise ValueError("direction must be 'forward' or 'inverse'")

    # -- sampled exact inclusion checks ---------------------------------------
    def verify_ball_inclusions(self, sample_count: int, seed: int) -> InclusionReport:
        """Check the two-regime ball inclusions between base balls, d_a-balls
        and d̂-balls on sampled (center, radius) pairs.

        Small radii r <= h/3 (h = d̂(x, ∞)):
            B(x, 3r/(4h²))  ⊆  B_a(x, r)  ⊆  B(x, 3r/(2h²))
        Large radii h/3 <= r <= 1:
            B(x, 1/(4h))  ⊆  B_a(x, r)  ⊆  B̂(x, r)  ⊆  X̂ \\ B̄(a, 1/(4r) - 1)

        All four hold exactly in any metric space, so violations are
        reported (not raised) as implementation bugs.
        """
        report = InclusionReport(checked=0)
        n = self.base.n_points
        for k in range(sample_count):
            rng = split_rng(seed, "ball-inclusions", k)
            i = int(rng.integers(0, n))
            x = self.base.ids[i]
            h = self.hat_h[i]
            small = rng.random() < 0.5
            if small:
                r = float(rng.uniform(0.0, h / 3.0))
                if r <= 0.0:
                    continue
            else:
                r = float(rng.uniform(h / 3.0, 1.0))
            base_row = self.base.dist_row(i)
            qmask = self.quasi_ball_mask(x, r)
            entry = {"center": x, "radius": r, "regime": "small" if small else "large"}

            def _record(name: str, ok: bool):
                report.checked += 1
                if not ok:
                    report.violations.append(
                        InclusionViolation(x, r, entry["regime"], name)
                    )

            if small:
                inner = base_row < (3.0 * r) / (4.0 * h * h)
                outer = base_row < (3.0 * r) / (2.0 * h * h)
                _record("base-inner ⊆ quasi", bool(np.all(qmask[:n][inner])))
                _record("quasi ⊆ base-outer", bool(np.all(outer[qmask[:n]])))
                _record("quasi misses ∞", not qmask[n])
            else:
                inner = base_row < 1.0 / (4.0 * h)
                hmask = self.hat_ball_mask(x, r)
                _record("base-inner ⊆ quasi", bool(np.all(qmask[:n][inner])))
                _record("quasi ⊆ hat", bool(np.all(hmask[qmask])))
                far = np.empty(n + 1, dtype=bool)
                far[:n] = self.remoteness > 1.0 / (4.0 * r) - 1.0
                far[n] = True
                _record("hat ⊆ far-annulus", bool(np.all(far[hmask])))
            report.rows.append(entry)
        return report

    def __repr__(self):
        return f"SphericalizedSpace(q={self.q}, base={self.base!r})"


def sphericalize(space: Space, q: float, max_chain_points: int = 8000) -> SphericalizedSpace:
    """Attach ∞ and the transformed structure with mass exponent q > 0."""
    return SphericalizedSpace(space, q, max_chain_points=max_chain_points)
