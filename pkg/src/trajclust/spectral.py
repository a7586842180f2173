"""Normalized spectral embedding and K-means clustering.

The similarity matrix S is normalized to Z = K^{-1/2} S K^{-1/2} with K the
diagonal degree matrix.  Z is symmetric, shares its spectrum with the
random-walk matrix S K^{-1}, and its eigenvalues lie in [-1, 1] with the
leading one equal to 1 for a connected graph.  Note the spectrum is NOT
nonnegative in general (a two-vertex graph has eigenvalues {1, -1});
eigenvalues are sorted descending and negative ones are kept as they are.
Rows of the top-E eigenvector matrix are the embedding coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGraphError, ParameterError

DEGREE_FLOOR = 1e-12
SYMMETRY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SpectralEmbedding:
    """Eigenvalues (descending) plus per-vertex embedding coordinates."""

    eigenvalues: np.ndarray
    coordinates: np.ndarray
    e_dim: int

    def __post_init__(self):
        eigenvalues = np.asarray(self.eigenvalues, dtype=float)
        coordinates = np.asarray(self.coordinates, dtype=float)
        if eigenvalues.ndim != 1 or coordinates.ndim != 2:
            raise ParameterError("eigenvalues must be a vector, coordinates a matrix")
        if np.any(np.diff(eigenvalues) > 1e-12):
            raise ParameterError("eigenvalues must be sorted in descending order")
        if coordinates.shape[1] != self.e_dim:
            raise ParameterError(
                f"coordinates have {coordinates.shape[1]} columns, e_dim is {self.e_dim}"
            )
        object.__setattr__(self, "eigenvalues", eigenvalues)
        object.__setattr__(self, "coordinates", coordinates)


@dataclass(frozen=True, eq=False)
class ClusterResult:
    """K-means output: labels, centroids, and the achieved inertia.

    ``empty_clusters`` flags cluster indices that ended up without members
    (possible only when there are fewer distinct points than clusters).
    """

    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    empty_clusters: tuple[int, ...] = ()

    def __post_init__(self):
        if self.inertia < 0.0:
            raise ParameterError("inertia cannot be negative")


def _checked_similarity(similarity: np.ndarray) -> np.ndarray:
    similarity = np.asarray(similarity, dtype=float)
    if similarity.ndim != 2 or similarity.shape[0] != similarity.shape[1]:
        raise ParameterError("similarity must be a square matrix")
    if not np.all(np.isfinite(similarity)):
        raise ParameterError("similarity contains non-finite entries")
    if np.abs(similarity - similarity.T).max(initial=0.0) > 1e-12:
        raise ParameterError("similarity matrix must be symmetric")
    if np.any(similarity < 0.0):
        raise ParameterError("similarity matrix must be nonnegative")
    return similarity


def degree_vector(similarity: np.ndarray, ids=None) -> np.ndarray:
    """Row sums of the similarity matrix.

    Raises a degenerate-graph error naming the offending vertices when any
    degree falls below ``DEGREE_FLOOR`` (the normalization would divide by
    nearly zero).
    """
    similarity = _checked_similarity(similarity)
    degrees = similarity.sum(axis=1)
    low = np.nonzero(degrees < DEGREE_FLOOR)[0]
    if low.size:
        names = [str(ids[i]) if ids is not None else str(i) for i in low[:10]]
        more = "" if low.size <= 10 else f" (+{low.size - 10} more)"
        raise DegenerateGraphError(
            f"similarity graph has {low.size} vertices with degree below "
            f"{DEGREE_FLOOR:g}: {', '.join(names)}{more}"
        )
    return degrees


def normalized_affinity(similarity: np.ndarray, ids=None) -> np.ndarray:
    """Z = K^{-1/2} S K^{-1/2}; symmetric, invariant under scaling of S."""
    similarity = _checked_similarity(similarity)
    degrees = degree_vector(similarity, ids=ids)
    inv_sqrt = 1.0 / np.sqrt(degrees)
    return similarity * np.outer(inv_sqrt, inv_sqrt)


def eigendecompose(z: np.ndarray) -> SpectralEmbedding:
    """Full symmetric eigendecomposition of Z, eigenvalues descending.

    Eigenvector signs are fixed deterministically: the largest-magnitude
    entry of each column is made positive.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[0] != z.shape[1]:
        raise ParameterError("z must be a square matrix")
    if np.abs(z - z.T).max(initial=0.0) > SYMMETRY_TOL:
        raise ParameterError(
            f"matrix is not symmetric within {SYMMETRY_TOL:g}; the symmetric "
            "eigensolver would silently use only one triangle"
        )
    eigenvalues, vectors = np.linalg.eigh(z)
    eigenvalues = eigenvalues[::-1].copy()
    vectors = vectors[:, ::-1].copy()
    for col in range(vectors.shape[1]):
        peak = int(np.argmax(np.abs(vectors[:, col])))
        if vectors[peak, col] < 0.0:
            vectors[:, col] = -vectors[:, col]
    return SpectralEmbedding(
        eigenvalues=eigenvalues, coordinates=vectors, e_dim=z.shape[0]
    )


def embed(
    decomposition: SpectralEmbedding,
    e_dim: int,
    row_normalize: bool = False,
) -> SpectralEmbedding:
    """Keep the first ``e_dim`` eigenvector columns as coordinates.

    With ``row_normalize`` each row is scaled to unit Euclidean norm;
    all-zero rows are left untouched.
    """
    available = decomposition.coordinates.shape[1]
    if not 1 <= e_dim <= available:
        raise ParameterError(
            f"e_dim must lie in [1, {available}], got {e_dim}"
        )
    coords = decomposition.coordinates[:, :e_dim].copy()
    if row_normalize:
        norms = np.linalg.norm(coords, axis=1)
        nz = norms > 0.0
        coords[nz] /= norms[nz, None]
    return SpectralEmbedding(
        eigenvalues=decomposition.eigenvalues, coordinates=coords, e_dim=e_dim
    )


def eigengaps(eigenvalues: np.ndarray) -> np.ndarray:
    """Successive differences lambda_i - lambda_{i+1}; a large gap after
    position E suggests E embedding dimensions."""
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    return eigenvalues[:-1] - eigenvalues[1:]


def _plusplus_seeding(points: np.ndarray, k: int, rng) -> np.ndarray:
    """Pick k starting centroids by squared-distance sampling.

    The first centroid is uniform over the points; each later one is drawn
    with probability proportional to its squared distance from the nearest
    centroid chosen so far.  Every restart explores a genuinely different
    start, unlike greedy farthest-point picks that collapse to at most n
    distinct seedings.
    """
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0.0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            nxt = int(rng.integers(n))  # remaining points all coincide
        chosen.append(nxt)
        d2 = np.minimum(d2, ((points - points[nxt]) ** 2).sum(axis=1))
    return points[chosen].copy()


def _lloyd(points: np.ndarray, centroids: np.ndarray, max_iter: int = 300):
    """Lloyd iterations from the given centroids.

    Returns (labels, centroids, inertia, inertia_history).  Empty clusters
    are reseeded at the point farthest from its assigned centroid, so the
    history stays non-increasing.
    """
    n, _ = points.shape
    k = centroids.shape[0]
    centroids = centroids.copy()
    prev_labels = None
    history = []
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        present = np.bincount(labels, minlength=k)
        empties = np.nonzero(present == 0)[0]
        if empties.size:
            own = d2[np.arange(n), labels].copy()
            for e in empties:
                far = int(np.argmax(own))
                centroids[e] = points[far]
                labels[far] = e
                own[far] = -1.0
            d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        history.append(float(d2[np.arange(n), labels].sum()))
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            break
        prev_labels = labels
        for c in range(k):
            members = labels == c
            if members.any():
                centroids[c] = points[members].mean(axis=0)
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    inertia = float(d2[np.arange(n), labels].sum())
    return labels, centroids, inertia, history


def kmeans(points: np.ndarray, k: int, restarts: int = 10, seed: int = 0) -> ClusterResult:
    """Best-of-restarts Lloyd clustering with squared-distance seeding.

    Each restart draws centroids by squared-distance sampling from a
    generator seeded with (seed, restart index).  The lowest-inertia
    restart wins, with ties going to the earlier restart, so the outcome
    is a deterministic function of the inputs.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ParameterError("points must be a 2-D array")
    n = points.shape[0]
    if k < 1:
        raise ParameterError("k must be at least 1")
    if k > n:
        raise ParameterError(f"k={k} exceeds the number of points ({n})")
    if restarts < 1:
        raise ParameterError("restarts must be at least 1")
    if seed < 0:
        raise ParameterError("seed must be nonnegative")
    best = None
    for r in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence([seed, r]))
        start = _plusplus_seeding(points, k, rng)
        labels, centroids, inertia, _ = _lloyd(points, start)
        if best is None or inertia < best[0]:
            best = (inertia, labels, centroids)
    inertia, labels, centroids = best
    missing = tuple(sorted(set(range(k)) - set(labels.tolist())))
    return ClusterResult(
        labels=labels,
        centroids=centroids,
        inertia=inertia,
        empty_clusters=missing,
    )
