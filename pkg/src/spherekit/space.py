"""Finite discrete metric measure spaces.

A space is a connected weighted graph with a positive mass on every vertex
and a distinguished base point.  The metric is the edge-path metric; balls
and ball measures are the primitive queries everything else builds on.

Distances are computed per source with a compiled Dijkstra (scipy.csgraph)
and cached, so repeated ball queries from the same center are cheap.  The
cache is fill-once per source: concurrent readers are safe, redundant fills
are idempotent.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

__all__ = [
    "INFINITY",
    "SpaceValidationError",
    "UnknownPointError",
    "BallQuery",
    "Space",
    "load_space",
    "loads_space",
    "serialize_space",
    "generate_grid",
    "random_space",
    "subspace_by_remoteness",
]

#: Identifier reserved for the attached point at infinity.
INFINITY = "∞"


class SpaceValidationError(ValueError):
    """A space document violates the schema or a structural invariant."""


class UnknownPointError(KeyError):
    """An identifier does not name a point of the space."""


@dataclass(frozen=True)
class BallQuery:
    """Metric ball request: open ball by default, closed when `closed`."""

    center: str
    radius: float
    closed: bool = False

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"ball radius must be > 0, got {self.radius}")


class Space:
    """Immutable finite metric measure space with base point.

    Parameters
    ----------
    ids : point identifiers (unique strings)
    edges : (m, 2) int array of endpoint indices, undirected, no duplicates
    lengths : (m,) positive edge lengths
    masses : (n,) positive vertex masses
    base : index of the base point
    coords : optional (n, k) coordinates, carried for generators and test
        function batteries; never used by the metric.
    """

    def __init__(self, ids, edges, lengths, masses, base, coords=None):
        self.ids: List[str] = list(ids)
        self.index: Dict[str, int] = {p: i for i, p in enumerate(self.ids)}
        if len(self.index) != len(self.ids):
            raise SpaceValidationError("points: duplicate identifiers")
        self.edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        self.lengths = np.asarray(lengths, dtype=float)
        self.masses = np.asarray(masses, dtype=float)
        self.base = int(base)
        self.coords = None if coords is None else np.asarray(coords, dtype=float)
        self._validate()
        n = len(self.ids)
        w = self.lengths
        u, v = self.edges[:, 0], self.edges[:, 1]
        self.adjacency = sp.csr_matrix(
            (np.concatenate([w, w]), (np.concatenate([u, v]), np.concatenate([v, u]))),
            shape=(n, n),
        )
        ncomp, _ = connected_components(self.adjacency, directed=False)
        if ncomp != 1:
            raise SpaceValidationError(f"edges: graph is disconnected ({ncomp} components)")
        self._dist_cache: Dict[int, np.ndarray] = {}
        self._all_pairs: Optional[np.ndarray] = None

    # -- construction checks ---------------------------------------------
    def _validate(self):
        n = len(self.ids)
        if n == 0:
            raise SpaceValidationError("points: empty point set")
        if self.masses.shape != (n,):
            raise SpaceValidationError("masses: wrong length")
        bad = np.flatnonzero(~(self.masses > 0))
        if bad.size:
            raise SpaceValidationError(f"masses: nonpositive mass at point {self.ids[bad[0]]!r}")
        if not (0 <= self.base < n):
            raise SpaceValidationError("base: index out of range")
        if self.edges.size:
            if self.edges.min() < 0 or self.edges.max() >= n:
                raise SpaceValidationError("edges: endpoint index out of range")
            if np.any(self.edges[:, 0] == self.edges[:, 1]):
                e = self.edges[self.edges[:, 0] == self.edges[:, 1]][0]
                raise SpaceValidationError(f"edges: self loop at {self.ids[e[0]]!r}")
            key = np.sort(self.edges, axis=1)
            uniq = {(int(a), int(b)) for a, b in key}
            if len(uniq) != len(key):
                raise SpaceValidationError("edges: duplicate edge")
        bad = np.flatnonzero(~(self.lengths > 0))
        if bad.size:
            u, v = self.edges[bad[0]]
            raise SpaceValidationError(
                f"edges: nonpositive length on edge ({self.ids[u]!r}, {self.ids[v]!r})"
            )
        if len(self.ids) > 1 and len(self.edges) == 0:
            raise SpaceValidationError("edges: graph is disconnected (no edges)")

    # -- basic queries -----------------------------------------------------
    @property
    def n_points(self) -> int:
        return len(self.ids)

    @property
    def base_point(self) -> str:
        return self.ids[self.base]

    def _idx(self, point: str) -> int:
        try:
            return self.index[point]
        except KeyError:
            raise UnknownPointError(f"unknown point {point!r}") from None

    def dist_row(self, i: int) -> np.ndarray:
        """Shortest-path distances from vertex index `i` to all vertices."""
        row = self._dist_cache.get(i)
        if row is None:
            if self._all_pairs is not None:
                row = self._all_pairs[i]
            else:
                row = dijkstra(self.adjacency, directed=True, indices=i)
            self._dist_cache[i] = row
        return row

    def all_pairs(self) -> np.ndarray:
        """Full distance matrix; cached.  Meant for spaces up to a few
        thousand points (memory grows as n^2)."""
        if self._all_pairs is None:
            self._all_pairs = dijkstra(self.adjacency, directed=True)
        return self._all_pairs

    def metric(self, x: str, y: str) -> float:
        """Edge-path distance between two points."""
        i, j = self._idx(x), self._idx(y)
        return float(self.dist_row(i)[j])

    def remoteness(self, x: str) -> float:
        """Distance from the base point."""
        return float(self.remoteness_all()[self._idx(x)])

    def remoteness_all(self) -> np.ndarray:
        return self.dist_row(self.base)

    def ball_mask(self, center_idx: int, radius: float, closed: bool = False) -> np.ndarray:
        row = self.dist_row(center_idx)
        return (row <= radius) if closed else (row < radius)

    def ball(self, query: BallQuery) -> Set[str]:
        """Point set of the open (or closed) metric ball."""
        if query.center == INFINITY:
            raise UnknownPointError(
                "the point at infinity is not a point of the base space"
            )
        mask = self.ball_mask(self._idx(query.center), query.radius, query.closed)
        return {self.ids[i] for i in np.flatnonzero(mask)}

    def ball_measure(self, query: BallQuery) -> float:
        if query.center == INFINITY:
            raise UnknownPointError(
                "the point at infinity carries no mass in the base space"
            )
        mask = self.ball_mask(self._idx(query.center), query.radius, query.closed)
        return float(self.masses[mask].sum())

    def total_mass(self) -> float:
        return float(self.masses.sum())

    def truncation_radius(self) -> float:
        return float(self.remoteness_all().max())

    def incident_edges(self) -> List[np.ndarray]:
        """edge indices incident to each vertex (built once)."""
        if not hasattr(self, "_incident"):
            n = self.n_points
            inc = [[] for _ in range(n)]
            for e, (u, v) in enumerate(self.edges):
                inc[u].append(e)
                inc[v].append(e)
            self._incident = [np.asarray(a, dtype=np.int64) for a in inc]
        return self._incident

    def __repr__(self):
        return (
            f"Space(n={self.n_points}, m={len(self.edges)}, "
            f"base={self.base_point!r}, total_mass={self.total_mass():.6g})"
        )


# ---------------------------------------------------------------------------
# Serialization: {"points":[{"id","coords"?,"mass"}], "edges":[{"u","v","len"}],
#                 "base": id}
# ---------------------------------------------------------------------------

def loads_space(document: Union[str, dict]) -> Space:
    """Parse and validate a space document (dict or JSON text)."""
    doc = json.loads(document) if isinstance(document, str) else document
    if not isinstance(doc, dict):
        raise SpaceValidationError("document: expected a JSON object")
    for key in ("points", "edges", "base"):
        if key not in doc:
            raise SpaceValidationError(f"{key}: missing required field")
    pts = doc["points"]
    if not isinstance(pts, list) or not pts:
        raise SpaceValidationError("points: expected a nonempty list")
    ids, masses, coords, have_coords = [], [], [], True
    for k, p in enumerate(pts):
        if not isinstance(p, dict) or "id" not in p or "mass" not in p:
            raise SpaceValidationError(f"points[{k}]: need 'id' and 'mass'")
        ids.append(str(p["id"]))
        try:
            m = float(p["mass"])
        except (TypeError, ValueError):
            raise SpaceValidationError(f"points[{k}].mass: not a number") from None
        if not m > 0:
            raise SpaceValidationError(f"points[{k}].mass: must be > 0 (point {p['id']!r})")
        masses.append(m)
        if "coords" in p and p["coords"] is not None:
            coords.append([float(c) for c in p["coords"]])
        else:
            have_coords = False
    index = {p: i for i, p in enumerate(ids)}
    if len(index) != len(ids):
        raise SpaceValidationError("points: duplicate identifiers")
    edges, lengths = [], []
    if not isinstance(doc["edges"], list):
        raise SpaceValidationError("edges: expected a list")
    for k, e in enumerate(doc["edges"]):
        if not isinstance(e, dict) or not {"u", "v", "len"} <= set(e):
            raise SpaceValidationError(f"edges[{k}]: need 'u', 'v', 'len'")
        for end in ("u", "v"):
            if str(e[end]) not in index:
                raise SpaceValidationError(f"edges[{k}].{end}: unknown point {e[end]!r}")
        ln = float(e["len"])
        if not ln > 0:
            raise SpaceValidationError(
                f"edges[{k}].len: must be > 0 (edge {e['u']!r}-{e['v']!r})"
            )
        edges.append((index[str(e["u"])], index[str(e["v"])]))
        lengths.append(ln)
    if str(doc["base"]) not in index:
        raise SpaceValidationError(f"base: unknown point {doc['base']!r}")
    if have_coords and coords:
        lens = {len(c) for c in coords}
        if len(lens) != 1:
            raise SpaceValidationError("points.coords: inconsistent dimension")
    return Space(
        ids,
        np.asarray(edges, dtype=np.int64).reshape(-1, 2),
        lengths,
        masses,
        index[str(doc["base"])],
        coords=np.asarray(coords) if have_coords and coords else None,
    )


def load_space(path) -> Space:
    """Load a space document from a JSON file path."""
    with open(path, "r", encoding="utf8") as f:
        return loads_space(json.load(f))


def serialize_space(space: Space) -> dict:
    """Inverse of loads_space; round-trips exactly."""
    pts = []
    for i, p in enumerate(space.ids):
        rec = {"id": p, "mass": float(space.masses[i])}
        if space.coords is not None:
            rec["coords"] = [float(c) for c in space.coords[i]]
        pts.append(rec)
    edges = [
        {"u": space.ids[u], "v": space.ids[v], "len": float(l)}
        for (u, v), l in zip(space.edges, space.lengths)
    ]
    return {"points": pts, "edges": edges, "base": space.base_point}


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def _grid_id(coord: np.ndarray) -> str:
    return ",".join(str(int(c)) for c in coord)


def generate_grid(dim: int, half_width: int, weight_exponent: float = 0.0) -> Space:
    """Integer lattice {-R,...,R}^dim with unit nearest-neighbor edges.

    Vertex mass is (1 + |x|_2)^alpha, base point at the origin.  These are
    the desk-scale stand-ins for unweighted (alpha = 0) and radially
    weighted Euclidean space.
    """
    if dim not in (1, 2, 3):
        raise ValueError("dim must be 1, 2 or 3")
    R = int(half_width)
    if R < 1:
        raise ValueError("half_width must be >= 1")
    alpha = float(weight_exponent)
    if alpha < 0:
        raise ValueError("weight_exponent must be >= 0")
    side = 2 * R + 1
    axes = [np.arange(-R, R + 1)] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1).astype(float)
    n = side**dim
    idx = np.arange(n).reshape([side] * dim)
    edges = []
    for ax in range(dim):
        sl_lo = [slice(None)] * dim
        sl_hi = [slice(None)] * dim
        sl_lo[ax] = slice(0, side - 1)
        sl_hi[ax] = slice(1, side)
        edges.append(
            np.stack([idx[tuple(sl_lo)].ravel(), idx[tuple(sl_hi)].ravel()], axis=1)
        )
    edges = np.concatenate(edges, axis=0)
    lengths = np.ones(len(edges))
    masses = (1.0 + np.sqrt((coords**2).sum(axis=1))) ** alpha
    ids = [_grid_id(c) for c in coords]
    base = ids.index(_grid_id(np.zeros(dim)))
    return Space(ids, edges, lengths, masses, base, coords=coords)


def random_space(
    n: int,
    rng: np.random.Generator,
    extra_edge_factor: float = 1.0,
    mass_spread: float = 1.0,
) -> Space:
    """Connected random geometric-ish space for tests and probes.

    Points are scattered in the plane, joined by a random spanning tree plus
    extra short-range edges; lengths are Euclidean with positive jitter,
    masses log-uniform with the given spread.
    """
    if n < 2:
        raise ValueError("need at least 2 points")
    pts = rng.uniform(0.0, 10.0, size=(n, 2))
    order = rng.permutation(n)
    edges, seen = [], set()
    # random tree: attach each point to a random earlier point
    for k in range(1, n):
        j = order[k]
        i = order[rng.integers(0, k)]
        edges.append((min(i, j), max(i, j)))
        seen.add(edges[-1])
    extra = int(extra_edge_factor * n)
    for _ in range(extra):
        i, j = rng.integers(0, n, size=2)
        if i == j:
            continue
        e = (min(i, j), max(i, j))
        if e in seen:
            continue
        seen.add(e)
        edges.append(e)
    edges = np.asarray(edges, dtype=np.int64)
    d = np.sqrt(((pts[edges[:, 0]] - pts[edges[:, 1]]) ** 2).sum(axis=1))
    lengths = d * rng.uniform(0.9, 1.3, size=len(edges)) + 0.05
    masses = np.exp(rng.uniform(-mass_spread, mass_spread, size=n))
    ids = [f"p{i}" for i in range(n)]
    return Space(ids, edges, lengths, masses, 0, coords=pts)


def subspace_by_remoteness(space: Space, radius: float) -> Space:
    """Induced subspace on {x : d(x, a) <= radius}.

    Balls around the base point of a connected graph are connected, so the
    result is again a valid space with the same base point.
    """
    keep = np.flatnonzero(space.remoteness_all() <= radius)
    if keep.size == 0:
        raise ValueError("truncation removes every point")
    lookup = -np.ones(space.n_points, dtype=np.int64)
    lookup[keep] = np.arange(keep.size)
    emask = (lookup[space.edges[:, 0]] >= 0) & (lookup[space.edges[:, 1]] >= 0)
    edges = lookup[space.edges[emask]]
    return Space(
        [space.ids[i] for i in keep],
        edges,
        space.lengths[emask],
        space.masses[keep],
        int(lookup[space.base]),
        coords=None if space.coords is None else space.coords[keep],
    )
