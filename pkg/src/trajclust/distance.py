"""Model-based distances between sequences.

Every sequence gets its own fitted model; entry (i, j) of the
cross-likelihood matrix is the log-likelihood of sequence j under model i.
The symmetrized distance |l_ii + l_jj - l_ij - l_ji| measures how much
likelihood is lost when models trade places, and an exponential kernel
turns it into a similarity in (0, 1].
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .hmm import forward_log_likelihood_many

# exp(-d / bandwidth) underflows to exact zero for huge distances; clamp so
# off-diagonal similarities stay strictly positive.
SIMILARITY_FLOOR = 1e-300

DEFAULT_BANDWIDTH = 2.0


@dataclass(frozen=True, eq=False)
class DistanceSet:
    """Cross-likelihood matrix with its derived distance and similarity."""

    loglik: np.ndarray
    distance: np.ndarray
    similarity: np.ndarray

    def __post_init__(self):
        n = self.loglik.shape[0]
        for name in ("loglik", "distance", "similarity"):
            mat = getattr(self, name)
            if mat.shape != (n, n):
                raise ParameterError(f"{name} must be {n}x{n}, got {mat.shape}")

    @property
    def n(self) -> int:
        return self.loglik.shape[0]


def cross_loglik_matrix(models, seqs, threads: int = 1, progress=None) -> np.ndarray:
    """N x N matrix of log Pr(seq_j | model_i).

    Rows are independent, so they can be computed on several worker threads;
    results are assembled by index and do not depend on the worker count.
    ``progress(done, total)`` is called after each finished row.
    """
    models = list(models)
    seqs = list(seqs)
    if len(models) != len(seqs):
        raise ParameterError(
            f"need one model per sequence, got {len(models)} models "
            f"and {len(seqs)} sequences"
        )
    if not models:
        raise ParameterError("need at least one model/sequence pair")
    if threads < 1:
        raise ParameterError("threads must be at least 1")
    n = len(models)

    def row(i: int) -> np.ndarray:
        return forward_log_likelihood_many(models[i], seqs)

    out = np.empty((n, n))
    if threads == 1:
        for i in range(n):
            out[i] = row(i)
            if progress is not None:
                progress(i + 1, n)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            done = 0
            for i, values in enumerate(pool.map(row, range(n))):
                out[i] = values
                done += 1
                if progress is not None:
                    progress(done, n)
    return out


def normalize_by_length(loglik: np.ndarray, lengths) -> np.ndarray:
    """Per-symbol log-likelihoods: column j divided by the length of sequence j."""
    loglik = np.asarray(loglik, dtype=float)
    lengths = np.asarray(lengths, dtype=float)
    if loglik.ndim != 2 or loglik.shape[0] != loglik.shape[1]:
        raise ParameterError("loglik must be a square matrix")
    if lengths.shape != (loglik.shape[1],):
        raise ParameterError("need one length per sequence")
    if np.any(lengths < 1):
        raise ParameterError("sequence lengths must be positive")
    return loglik / lengths[None, :]


def symmetric_distance(loglik: np.ndarray) -> np.ndarray:
    """d_ij = |l_ii + l_jj - l_ij - l_ji| with an exactly zero diagonal.

    The upper triangle is computed once and mirrored, so the result is
    symmetric bitwise, not just within tolerance.
    """
    loglik = np.asarray(loglik, dtype=float)
    if loglik.ndim != 2 or loglik.shape[0] != loglik.shape[1]:
        raise ParameterError("loglik must be a square matrix")
    if not np.all(np.isfinite(loglik)):
        raise ParameterError("loglik contains non-finite entries")
    diag = np.diag(loglik)
    raw = np.abs(diag[:, None] + diag[None, :] - loglik - loglik.T)
    upper = np.triu(raw, k=1)
    return upper + upper.T


def similarity_kernel(distance: np.ndarray, bandwidth: float = DEFAULT_BANDWIDTH) -> np.ndarray:
    """s_ij = exp(-d_ij / bandwidth) off the diagonal; the diagonal is 0.

    A vertex is maximally similar to itself in spirit, but the spectral step
    expects zero self-affinity, so the diagonal is forced to zero here.
    """
    distance = np.asarray(distance, dtype=float)
    if distance.ndim != 2 or distance.shape[0] != distance.shape[1]:
        raise ParameterError("distance must be a square matrix")
    if bandwidth <= 0.0:
        raise ParameterError("bandwidth must be positive")
    if not np.all(np.isfinite(distance)):
        raise ParameterError("distance contains non-finite entries")
    if not np.array_equal(distance, distance.T):
        raise ParameterError("distance matrix must be symmetric")
    if np.any(distance < 0.0):
        raise ParameterError("distance matrix must be nonnegative")
    if np.any(np.diag(distance) != 0.0):
        raise ParameterError("distance matrix must have a zero diagonal")
    sim = np.exp(-distance / bandwidth)
    sim = np.maximum(sim, SIMILARITY_FLOOR)
    np.fill_diagonal(sim, 0.0)
    return sim


def build_distance_set(
    models,
    seqs,
    bandwidth: float = DEFAULT_BANDWIDTH,
    length_normalize: bool = False,
    threads: int = 1,
    progress=None,
) -> DistanceSet:
    """Full distance computation for a fitted cohort.

    ``loglik`` always holds the raw log-likelihoods; with
    ``length_normalize`` the distance (and hence the similarity) is built
    from per-symbol values instead.
    """
    seqs = list(seqs)
    loglik = cross_loglik_matrix(models, seqs, threads=threads, progress=progress)
    basis = loglik
    if length_normalize:
        basis = normalize_by_length(loglik, [len(s) for s in seqs])
    distance = symmetric_distance(basis)
    similarity = similarity_kernel(distance, bandwidth)
    return DistanceSet(loglik=loglik, distance=distance, similarity=similarity)
