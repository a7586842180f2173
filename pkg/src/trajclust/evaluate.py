"""Agreement between cluster assignments and cohort labels."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .cohort import Cohort
from .errors import DataError, ParameterError
from .spectral import ClusterResult


@dataclass(frozen=True, eq=False)
class LabelAgreement:
    """Adjusted Rand index, purity, and the label-by-cluster confusion table.

    ``confusion`` maps each cohort label to its per-cluster counts.
    """

    ari: float
    purity: float
    confusion: dict[str, tuple[int, ...]]
    n: int
    subset: tuple[str, ...] | None = None


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Chance-corrected pair-counting agreement between two partitions.

    1 for identical partitions, about 0 for independent ones; degenerate
    cases where the expected and maximum index coincide score 1.
    """
    labels_a = list(labels_a)
    labels_b = list(labels_b)
    if len(labels_a) != len(labels_b):
        raise ParameterError("partitions must have the same length")
    n = len(labels_a)
    if n == 0:
        raise ParameterError("partitions must not be empty")
    table: dict[tuple, int] = {}
    count_a: dict = {}
    count_b: dict = {}
    for a, b in zip(labels_a, labels_b):
        table[(a, b)] = table.get((a, b), 0) + 1
        count_a[a] = count_a.get(a, 0) + 1
        count_b[b] = count_b.get(b, 0) + 1
    sum_cells = sum(comb(c, 2) for c in table.values())
    sum_a = sum(comb(c, 2) for c in count_a.values())
    sum_b = sum(comb(c, 2) for c in count_b.values())
    expected = sum_a * sum_b / comb(n, 2) if n >= 2 else 0.0
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


def purity(cluster_labels, true_labels) -> float:
    """Fraction of points whose cluster's majority label matches their own."""
    cluster_labels = list(cluster_labels)
    true_labels = list(true_labels)
    if len(cluster_labels) != len(true_labels):
        raise ParameterError("partitions must have the same length")
    if not cluster_labels:
        raise ParameterError("partitions must not be empty")
    per_cluster: dict = {}
    for c, t in zip(cluster_labels, true_labels):
        per_cluster.setdefault(c, {})
        per_cluster[c][t] = per_cluster[c].get(t, 0) + 1
    return float(
        sum(max(counts.values()) for counts in per_cluster.values())
        / len(cluster_labels)
    )


def evaluate_against_labels(
    clusters: ClusterResult,
    cohort: Cohort,
    subset=None,
) -> LabelAgreement:
    """Score cluster assignments against the cohort's labels.

    With ``subset`` the cohort is first restricted to sequences whose label
    is in the subset, and ``clusters`` must have been computed on exactly
    that restricted, order-preserving slice.
    """
    if subset is not None:
        subset = tuple(subset)
        wanted = set(subset)
        truth = [s.label for s in cohort.sequences if s.label in wanted]
        if not truth:
            raise DataError(
                f"no sequences carry a label from the subset {sorted(wanted)}"
            )
    else:
        truth = list(cohort.labels)
        missing = [s.id for s in cohort.sequences if s.label is None]
        if missing:
            raise DataError(
                f"{len(missing)} sequences have no label (first: {missing[0]!r}); "
                "cannot evaluate"
            )
    assigned = np.asarray(clusters.labels)
    if assigned.shape[0] != len(truth):
        raise ParameterError(
            f"cluster labels cover {assigned.shape[0]} sequences but the "
            f"{'subset' if subset else 'cohort'} has {len(truth)}"
        )
    k = clusters.centroids.shape[0]
    confusion: dict[str, list[int]] = {}
    for t, c in zip(truth, assigned):
        confusion.setdefault(t, [0] * k)[int(c)] += 1
    return LabelAgreement(
        ari=adjusted_rand_index(truth, assigned.tolist()),
        purity=purity(assigned.tolist(), truth),
        confusion={t: tuple(v) for t, v in sorted(confusion.items())},
        n=len(truth),
        subset=subset,
    )
