"""Euclidean projection onto a convex hull given only its vertices, plus the
signed distance used as the unexpectedness score.

Facet enumeration is intractable at embedding dimension, so everything here
works from vertex access alone:

* ``project_onto_hull`` solves ``min ||V'w - q||`` over simplex weights w with
  Frank-Wolfe plus away steps and exact line search. The projection is unique
  (convexity), so the distance is well defined even when the weights are not.
* ``interior_depth`` estimates the distance from an interior point to the hull
  boundary as the minimum support-gap over a deterministic direction set. Each
  direction gives an upper bound on the true depth, so the minimum converges
  from above as directions are added. Directions live in the affine span of
  the vertices, so flat (rank-deficient) hulls are measured relative to their
  own span rather than the ambient space.
* ``signed_unexpectedness`` combines the two: positive distance outside the
  hull, negative estimated depth inside. The sign is exact; only the interior
  magnitude is approximate.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import DimensionMismatchError, EmptyHullError, NotInteriorError

DEFAULT_TOL = 1e-7
DEFAULT_BOUNDARY_EPS = 1e-6
DEFAULT_DEPTH_DIRECTIONS = 256

_direction_cache: dict[tuple[int, int], np.ndarray] = {}


@dataclass(frozen=True)
class HullVertices:
    """Vertex set spanning one hull; rows of ``points`` are d-vectors."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise EmptyHullError("hull needs at least one vertex")
        if not np.isfinite(pts).all():
            raise ValueError("hull vertices must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @cached_property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)


@dataclass(frozen=True)
class HullProjection:
    weights: np.ndarray
    projected_point: np.ndarray
    distance: float
    converged: bool
    iterations: int


@dataclass(frozen=True)
class SignedDistance:
    """Negative inside the hull, positive outside, zero on the boundary."""

    value: float
    interior: bool


def _check_query(vertices: HullVertices, query) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (vertices.dim,):
        raise DimensionMismatchError(
            f"query has shape {q.shape}, hull vertices have dim {vertices.dim}"
        )
    return q


def project_onto_hull(
    vertices: HullVertices,
    query,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
) -> HullProjection:
    """Nearest point of the hull to ``query`` via away-step Frank-Wolfe.

    Starts at the nearest vertex; each iteration takes either a step toward
    the vertex minimizing the linearized objective or an away step from the
    worst active vertex, with exact line search on the segment. Stops when
    the Frank-Wolfe duality gap drops to tol**2 (or on a step of zero length,
    which at float precision means the same thing) or after max_iter
    iterations; ``converged`` records which.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    q = _check_query(vertices, query)
    V = vertices.points
    m = vertices.count
    if max_iter is None:
        max_iter = 10 * (m + vertices.dim)

    start = int(np.argmin(((V - q) ** 2).sum(axis=1)))
    lam = np.zeros(m)
    lam[start] = 1.0
    x = V[start].copy()

    converged = False
    iterations = 0
    gap_limit = tol * tol
    for iterations in range(1, max_iter + 1):
        r = x - q
        grad = V @ r
        s = int(np.argmin(grad))
        gap = float(lam @ grad - grad[s])
        if gap <= gap_limit:
            converged = True
            break

        active = np.flatnonzero(lam > 0.0)
        a = int(active[np.argmax(grad[active])])
        d_fw = V[s] - x
        d_aw = x - V[a]
        if -(r @ d_fw) >= -(r @ d_aw):
            direction, gamma_max, toward, away = d_fw, 1.0, s, None
        else:
            la = lam[a]
            gamma_max = la / (1.0 - la) if la < 1.0 else 0.0
            direction, toward, away = d_aw, None, a

        denom = float(direction @ direction)
        if denom <= 0.0 or gamma_max <= 0.0:
            converged = gap <= gap_limit
            break
        gamma = min(max(-(r @ direction) / denom, 0.0), gamma_max)
        if gamma <= 0.0:
            converged = gap <= gap_limit
            break
        if toward is not None:
            lam *= 1.0 - gamma
            lam[toward] += gamma
        else:
            lam *= 1.0 + gamma
            lam[away] -= gamma
            if gamma >= gamma_max - 1e-15:
                lam[away] = 0.0  # drop step
        np.clip(lam, 0.0, None, out=lam)
        lam /= lam.sum()
        x = lam @ V

    x = lam @ V
    distance = float(np.linalg.norm(q - x))
    return HullProjection(
        weights=lam,
        projected_point=x,
        distance=distance,
        converged=converged,
        iterations=iterations,
    )


def contains(
    vertices: HullVertices,
    query,
    eps: float = DEFAULT_BOUNDARY_EPS,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
) -> bool:
    """True when the query lies within eps of the hull."""
    return project_onto_hull(vertices, query, tol=tol, max_iter=max_iter).distance <= eps


def _quasirandom_directions(rank: int, count: int) -> np.ndarray:
    """Deterministic low-discrepancy unit vectors in `rank` dimensions."""
    if count <= 0:
        return np.zeros((0, rank))
    key = (rank, count)
    cached = _direction_cache.get(key)
    if cached is not None:
        return cached
    sampler = qmc.Sobol(d=rank, scramble=False)
    n_pow2 = 1
    while 2**n_pow2 < count + 1:
        n_pow2 += 1
    u = sampler.random_base2(n_pow2)[1 : count + 1]  # skip the all-zero first point
    z = ndtri(np.clip(u, 1e-12, 1.0 - 1e-12))
    norms = np.linalg.norm(z, axis=1)
    keep = norms > 1e-12
    dirs = z[keep] / norms[keep, None]
    _direction_cache[key] = dirs
    return dirs


def _affine_span(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(centroid, orthonormal basis of the span of points - centroid)."""
    centroid = points.mean(axis=0)
    centered = points - centroid
    if points.shape[0] == 1:
        return centroid, np.zeros((points.shape[1], 0))
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        return centroid, np.zeros((points.shape[1], 0))
    rank = int((s > s[0] * 1e-9).sum())
    return centroid, vt[:rank].T


def _depth_estimate(vertices: HullVertices, q: np.ndarray, directions: int) -> float:
    centroid, basis = _affine_span(vertices.points)
    if basis.shape[1] == 0:
        return 0.0
    pv = (vertices.points - centroid) @ basis
    pq = (q - centroid) @ basis

    candidates = np.vstack(
        [pv - pq, -pq[None, :], _quasirandom_directions(basis.shape[1], directions)]
    )
    norms = np.linalg.norm(candidates, axis=1)
    keep = norms > 1e-12
    if not keep.any():
        return 0.0
    unit = candidates[keep] / norms[keep, None]

    support = (unit @ pv.T).max(axis=1)
    gaps = support - unit @ pq
    return float(max(gaps.min(), 0.0))


def interior_depth(
    vertices: HullVertices,
    query,
    directions: int = DEFAULT_DEPTH_DIRECTIONS,
    eps: float = DEFAULT_BOUNDARY_EPS,
) -> float:
    """Estimated distance from an interior query to the hull boundary.

    Minimum of ``max_i(u . v_i) - u . q`` over a direction set built from the
    vertex differences, the centroid direction and a fixed quasi-random
    sequence, all restricted to the affine span of the vertices. Every term
    upper-bounds the true (span-relative) depth.
    """
    q = _check_query(vertices, query)
    proj = project_onto_hull(vertices, q)
    if proj.distance > eps:
        raise NotInteriorError(
            f"query is {proj.distance:.3g} outside the hull (eps={eps:.3g})"
        )
    return _depth_estimate(vertices, q, directions)


def signed_unexpectedness(
    vertices: HullVertices,
    item_embedding,
    eps: float = DEFAULT_BOUNDARY_EPS,
    directions: int = DEFAULT_DEPTH_DIRECTIONS,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
) -> SignedDistance:
    """Signed hull distance: +projection distance outside, -estimated depth inside."""
    q = _check_query(vertices, item_embedding)
    proj = project_onto_hull(vertices, q, tol=tol, max_iter=max_iter)
    if proj.distance > eps:
        return SignedDistance(value=proj.distance, interior=False)
    return SignedDistance(value=-_depth_estimate(vertices, q, directions), interior=True)
