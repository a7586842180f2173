"""Shared oracles for the test suite.

These deliberately avoid the library's recursions: likelihoods and
posteriors are computed by brute-force enumeration over all state paths,
and the K-means oracle scores every possible assignment.  They are only
feasible for tiny instances, which is exactly the point.
"""

import itertools

import numpy as np

from trajclust import DiscreteHmm


def enumerate_log_likelihood(model: DiscreteHmm, symbols) -> float:
    """log Pr(symbols | model) as a plain sum over all state paths."""
    symbols = list(symbols)
    n = model.n_states
    total = 0.0
    for path in itertools.product(range(n), repeat=len(symbols)):
        p = model.initial[path[0]] * model.emission[path[0], symbols[0]]
        for t in range(1, len(symbols)):
            p *= model.transition[path[t - 1], path[t]] * model.emission[path[t], symbols[t]]
        total += p
    if total == 0.0:
        return float("-inf")
    return float(np.log(total))


def enumerate_posteriors(model: DiscreteHmm, symbols) -> np.ndarray:
    """Posterior state marginals from the same full path enumeration."""
    symbols = list(symbols)
    n = model.n_states
    T = len(symbols)
    weights = np.zeros((T, n))
    total = 0.0
    for path in itertools.product(range(n), repeat=T):
        p = model.initial[path[0]] * model.emission[path[0], symbols[0]]
        for t in range(1, T):
            p *= model.transition[path[t - 1], path[t]] * model.emission[path[t], symbols[t]]
        total += p
        for t, state in enumerate(path):
            weights[t, state] += p
    return weights / total


def exhaustive_kmeans_inertia(points: np.ndarray, k: int) -> float:
    """Global minimum inertia over every assignment of points to k clusters."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    best = np.inf
    for assignment in itertools.product(range(k), repeat=n):
        labels = np.array(assignment)
        inertia = 0.0
        for c in range(k):
            members = points[labels == c]
            if len(members):
                centroid = members.mean(axis=0)
                inertia += float(((members - centroid) ** 2).sum())
        best = min(best, inertia)
    return best


def random_stochastic_model(rng, n_states: int, n_symbols: int) -> DiscreteHmm:
    """A dense random model; Dirichlet rows keep every entry positive."""
    return DiscreteHmm(
        initial=rng.dirichlet(np.ones(n_states)),
        transition=rng.dirichlet(np.ones(n_states), size=n_states),
        emission=rng.dirichlet(np.ones(n_symbols), size=n_states),
    )
