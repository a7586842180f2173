"""Cohort I/O, synthetic generation, label agreement, result export."""

import json

import numpy as np
import pytest

from trajclust import (
    ClusterResult,
    Cohort,
    DataError,
    DistanceSet,
    ObservationSequence,
    ParameterError,
    SpectralEmbedding,
    adjusted_rand_index,
    default_cohort_spec,
    default_generators,
    evaluate_against_labels,
    export_results,
    load_cohort,
    purity,
    read_coordinates_csv,
    read_labels_csv,
    read_matrix_csv,
    synthesize_cohort,
    write_cohort,
)


# ----------------------------------------------------------------- cohort

def test_cohort_rejects_duplicate_ids():
    seqs = [ObservationSequence("x", [0, 1]), ObservationSequence("x", [1, 0])]
    with pytest.raises(DataError):
        Cohort(seqs, alphabet=("s", "c"))


def test_cohort_rejects_out_of_range_codes():
    seqs = [ObservationSequence("x", [0, 2])]
    with pytest.raises(DataError):
        Cohort(seqs, alphabet=("s", "c"))


def test_cohort_exposes_ids_and_labels():
    seqs = [
        ObservationSequence("a", [0], label="PS"),
        ObservationSequence("b", [1], label=None),
    ]
    cohort = Cohort(seqs, alphabet=("s", "c"))
    assert cohort.ids == ("a", "b")
    assert cohort.labels == ("PS", None)


# ------------------------------------------------------------------- load

def test_load_jsonl_with_alphabet_header(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(
        '{"alphabet": ["s", "c"]}\n'
        '{"id": "a", "label": "PS", "symbols": ["s", "s", "c"]}\n'
        '{"id": "b", "symbols": ["c", "c"]}\n'
    )
    cohort = load_cohort(path)
    assert cohort.alphabet == ("s", "c")
    assert cohort.sequences[0].symbols.tolist() == [0, 0, 1]
    assert cohort.sequences[1].label is None


def test_load_jsonl_unknown_symbol_names_the_line(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(
        '{"id": "a", "symbols": ["s", "x"]}\n',
    )
    with pytest.raises(DataError) as exc:
        load_cohort(path, alphabet=("s", "c"))
    assert ":1:" in str(exc.value)
    assert "'x'" in str(exc.value)


def test_load_jsonl_duplicate_id(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(
        '{"id": "a", "symbols": ["s"]}\n{"id": "a", "symbols": ["c"]}\n'
    )
    with pytest.raises(DataError) as exc:
        load_cohort(path, alphabet=("s", "c"), min_length=1)
    assert "a" in str(exc.value)


def test_load_jsonl_invalid_json_names_the_line(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"id": "a", "symbols": ["s"]}\nnot json\n')
    with pytest.raises(DataError) as exc:
        load_cohort(path, alphabet=("s", "c"))
    assert ":2:" in str(exc.value)


def test_load_min_length_filter_is_an_error_not_a_skip(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"id": "a", "symbols": ["s", "c"]}\n')
    with pytest.raises(DataError) as exc:
        load_cohort(path, alphabet=("s", "c"), min_length=3)
    assert "a" in str(exc.value)


def test_load_empty_file_is_an_error(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text("")
    with pytest.raises(DataError):
        load_cohort(path, alphabet=("s", "c"))


def test_load_csv_round_trip(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text('id,label,symbols\na,PS,"s,s,c"\nb,,"c,c"\n')
    cohort = load_cohort(path, fmt="csv", alphabet=("s", "c"))
    assert cohort.ids == ("a", "b")
    assert cohort.sequences[0].symbols.tolist() == [0, 0, 1]
    assert cohort.sequences[1].label is None

    out = tmp_path / "copy.csv"
    write_cohort(cohort, out, fmt="csv")
    again = load_cohort(out, fmt="csv", alphabet=("s", "c"))
    assert again.ids == cohort.ids
    for x, y in zip(again.sequences, cohort.sequences):
        assert np.array_equal(x.symbols, y.symbols)
        assert x.label == y.label


def test_load_csv_bad_header(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("name,symbols\na,s s\n")
    with pytest.raises(DataError):
        load_cohort(path, fmt="csv", alphabet=("s", "c"))


def test_jsonl_round_trip_preserves_alphabet(tmp_path):
    spec = default_cohort_spec(count_per_batch=2, seed=4, length_min=5, length_max=9)
    cohort = synthesize_cohort(spec)
    out = tmp_path / "c.jsonl"
    write_cohort(cohort, out)
    again = load_cohort(out)
    assert again.alphabet == cohort.alphabet
    assert again.ids == cohort.ids
    assert again.labels == cohort.labels
    for x, y in zip(again.sequences, cohort.sequences):
        assert np.array_equal(x.symbols, y.symbols)


# ------------------------------------------------------------------ synth

def test_synthesize_is_deterministic_and_batch_structured():
    spec = default_cohort_spec(count_per_batch=5, seed=11, length_min=20, length_max=40)
    a = synthesize_cohort(spec)
    b = synthesize_cohort(spec)
    assert a.ids == b.ids
    assert all(np.array_equal(x.symbols, y.symbols) for x, y in zip(a.sequences, b.sequences))

    labels = list(a.labels)
    assert labels == ["PS"] * 5 + ["PC"] * 5 + ["NP"] * 5
    for seq in a.sequences:
        assert 20 <= len(seq.symbols) <= 40


def test_synthesize_seed_changes_output():
    spec_a = default_cohort_spec(count_per_batch=3, seed=1, length_min=10, length_max=20)
    spec_b = default_cohort_spec(count_per_batch=3, seed=2, length_min=10, length_max=20)
    a = synthesize_cohort(spec_a)
    b = synthesize_cohort(spec_b)
    assert any(
        not np.array_equal(x.symbols, y.symbols) for x, y in zip(a.sequences, b.sequences)
    )


def test_default_generators_are_calibrated():
    gens = default_generators()
    assert set(gens) == {"PS", "PC", "NP"}
    spec = default_cohort_spec(count_per_batch=60, seed=0, length_min=150, length_max=250)
    cohort = synthesize_cohort(spec)
    share = {}
    for name in ("PS", "PC", "NP"):
        seqs = [s for s in cohort.sequences if s.label == name]
        total = sum(len(s.symbols) for s in seqs)
        zeros = sum(int((s.symbols == 0).sum()) for s in seqs)
        share[name] = zeros / total
    # symbol 0 is the first alphabet entry; PS sequences are dominated by it,
    # PC sequences by the other symbol, NP sits in between
    assert share["PS"] > 0.95
    assert share["PC"] < 0.05
    assert 0.35 < share["NP"] < 0.65


def test_synthesize_validates_spec():
    gens = default_generators()
    with pytest.raises(ParameterError):
        default_cohort_spec(count_per_batch=0)
    from trajclust import BatchSpec, CohortSpec

    with pytest.raises(ParameterError):
        CohortSpec(
            batches=(
                BatchSpec("PS", 1, gens["PS"], 10, 5),
            ),
            seed=0,
        )
    with pytest.raises(ParameterError):
        CohortSpec(
            batches=(
                BatchSpec("PS", 1, gens["PS"], 5, 10),
                BatchSpec("PS", 1, gens["PC"], 5, 10),
            ),
            seed=0,
        )


# ------------------------------------------------------------- agreement

def test_ari_hand_computed_case():
    true = ["A", "A", "A", "B", "B", "B"]
    pred = np.array([0, 0, 1, 1, 1, 1])
    assert abs(adjusted_rand_index(true, pred) - 12.0 / 37.0) < 1e-12


def test_ari_perfect_and_permuted():
    true = ["A", "A", "B", "B"]
    assert adjusted_rand_index(true, np.array([0, 0, 1, 1])) == 1.0
    assert adjusted_rand_index(true, np.array([1, 1, 0, 0])) == 1.0


def test_ari_single_cluster_degenerate_case():
    true = ["A", "A", "A"]
    assert adjusted_rand_index(true, np.array([0, 0, 0])) == 1.0


def test_ari_independent_labels_near_zero():
    rng = np.random.default_rng(17)
    true = list("AB" * 200)
    pred = rng.integers(0, 2, size=400)
    assert abs(adjusted_rand_index(true, pred)) < 0.1


def test_purity_hand_computed_case():
    true = ["A", "A", "A", "B", "B", "B"]
    pred = np.array([0, 0, 1, 1, 1, 1])
    assert abs(purity(true, pred) - 5.0 / 6.0) < 1e-12


def test_agreement_validates_lengths():
    with pytest.raises(ParameterError):
        adjusted_rand_index(["A"], np.array([0, 1]))
    with pytest.raises(ParameterError):
        purity([], np.array([], dtype=int))


def _toy_clustered_cohort():
    seqs = [
        ObservationSequence("a", [0], label="PS"),
        ObservationSequence("b", [0], label="PS"),
        ObservationSequence("c", [1], label="PC"),
        ObservationSequence("d", [1], label="PC"),
    ]
    cohort = Cohort(seqs, alphabet=("s", "c"))
    clusters = ClusterResult(
        labels=np.array([0, 0, 1, 1]),
        centroids=np.zeros((2, 2)),
        inertia=0.0,
    )
    return cohort, clusters


def test_evaluate_against_labels_full_cohort():
    cohort, clusters = _toy_clustered_cohort()
    agreement = evaluate_against_labels(clusters, cohort)
    assert agreement.ari == 1.0
    assert agreement.purity == 1.0
    assert agreement.n == 4
    assert agreement.subset is None
    assert agreement.confusion == {"PS": (2, 0), "PC": (0, 2)}


def test_evaluate_with_subset_filters_by_label():
    cohort, _ = _toy_clustered_cohort()
    clusters = ClusterResult(
        labels=np.array([0, 1]),
        centroids=np.zeros((2, 2)),
        inertia=0.0,
    )
    agreement = evaluate_against_labels(clusters, cohort, subset=("PS",))
    assert agreement.n == 2
    assert agreement.subset == ("PS",)


def test_evaluate_requires_labels():
    seqs = [ObservationSequence("a", [0]), ObservationSequence("b", [1])]
    cohort = Cohort(seqs, alphabet=("s", "c"))
    clusters = ClusterResult(np.array([0, 1]), np.zeros((2, 1)), 0.0)
    with pytest.raises(DataError):
        evaluate_against_labels(clusters, cohort)


def test_evaluate_rejects_misaligned_sizes():
    cohort, _ = _toy_clustered_cohort()
    clusters = ClusterResult(np.array([0, 1]), np.zeros((2, 1)), 0.0)
    with pytest.raises(ParameterError):
        evaluate_against_labels(clusters, cohort)


def test_evaluate_unknown_subset_label():
    cohort, clusters = _toy_clustered_cohort()
    with pytest.raises(DataError):
        evaluate_against_labels(clusters, cohort, subset=("NP",))


# ---------------------------------------------------------------- export

def _small_results(n=4, e_dim=2):
    rng = np.random.default_rng(40)
    raw = rng.uniform(0.2, 1.0, size=(n, n))
    sim = np.triu((raw + raw.T) / 2.0, k=1)
    sim = sim + sim.T
    dist = -np.log(np.where(sim > 0, sim, 1.0))
    np.fill_diagonal(dist, 0.0)
    loglik = -np.abs(rng.normal(size=(n, n)))
    dset = DistanceSet(loglik=loglik, distance=dist, similarity=sim)
    eigenvalues = np.array([1.0, 0.4, 0.1, -0.2])
    coords = rng.normal(size=(n, e_dim))
    emb = SpectralEmbedding(eigenvalues, coords, e_dim)
    clusters = ClusterResult(np.array([0, 0, 1, 1]), np.zeros((2, e_dim)), 1.5)
    ids = [f"s{i}" for i in range(n)]
    return dset, emb, clusters, ids


def test_export_writes_expected_files(tmp_path):
    dset, emb, clusters, ids = _small_results()
    export_results(dset, emb, clusters, tmp_path, ids, seed=7)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == [
        "coordinates.csv",
        "distance.csv",
        "eigenvalues.csv",
        "labels.csv",
        "manifest.json",
        "similarity.csv",
    ]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["n"] == 4
    assert manifest["seed"] == 7
    assert set(manifest["files"]) == set(names) - {"manifest.json"}
    for entry in manifest["files"].values():
        assert set(entry) == {"sha256", "bytes"}


def test_export_round_trips_through_readers(tmp_path):
    dset, emb, clusters, ids = _small_results()
    export_results(dset, emb, clusters, tmp_path, ids)
    got_ids, sim = read_matrix_csv(tmp_path / "similarity.csv")
    assert got_ids == list(ids)
    assert np.abs(sim - dset.similarity).max() < 1e-11
    cids, coords = read_coordinates_csv(tmp_path / "coordinates.csv")
    assert cids == list(ids)
    assert coords.shape == (4, 2)
    lids, labels = read_labels_csv(tmp_path / "labels.csv")
    assert lids == list(ids)
    assert np.array_equal(labels, clusters.labels)


def test_export_is_byte_identical_on_rerun(tmp_path):
    dset, emb, clusters, ids = _small_results()
    a = tmp_path / "a"
    b = tmp_path / "b"
    export_results(dset, emb, clusters, a, ids, seed=1)
    export_results(dset, emb, clusters, b, ids, seed=1)
    for name in ("similarity.csv", "distance.csv", "eigenvalues.csv",
                 "coordinates.csv", "labels.csv", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_export_rejects_mismatched_id_count(tmp_path):
    dset, emb, clusters, ids = _small_results()
    with pytest.raises(ParameterError):
        export_results(dset, emb, clusters, tmp_path, ids[:-1])


def test_matrix_csv_uses_twelve_significant_digits(tmp_path):
    dset, emb, clusters, ids = _small_results()
    export_results(dset, emb, clusters, tmp_path, ids)
    body = (tmp_path / "similarity.csv").read_text().splitlines()
    assert body[0] == "id," + ",".join(ids)
    cell = body[1].split(",")[2]
    assert len(cell.replace("-", "").replace(".", "").replace("e", "").lstrip("0")) <= 13


def test_matrix_csv_reader_reports_bad_rows(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("id,a,b\na,0,1\nb,1\n")
    with pytest.raises(DataError) as exc:
        read_matrix_csv(path)
    assert ":3:" in str(exc.value)
