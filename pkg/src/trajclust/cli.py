"""Command-line pipeline: fit, distances, cluster, synth, eval, run.

    trajclust run --input synth:120 --out results --seed 7
    trajclust synth --input synth:400 --out results
    trajclust fit --out results --threads 4
    trajclust distances --out results
    trajclust cluster --out results --k 2
    trajclust eval --out results --subset PS,PC

Each stage reads the previous stage's artifacts from the output directory,
so running the subcommands one by one produces byte-for-byte the same files
as a single ``run``.  Progress and stage timings go to stderr; stdout stays
clean.  Exit codes: 0 success, 2 configuration error, 3 data error,
4 numerical or degenerate-graph error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path

import numpy as np

from .cohort import (
    Cohort,
    default_cohort_spec,
    load_cohort,
    synthesize_cohort,
    write_cohort,
)
from .distance import build_distance_set
from .errors import (
    DataError,
    DegenerateGraphError,
    NumericalError,
    ParameterError,
    TrajclustError,
)
from .evaluate import evaluate_against_labels
from .exports import (
    read_coordinates_csv,
    read_labels_csv,
    read_matrix_csv,
    update_manifest,
    write_coordinates_csv,
    write_eigengaps_csv,
    write_eigenvalues_csv,
    write_labels_csv,
    write_matrix_csv,
    write_text,
)
from .hmm import DiscreteHmm, baum_welch_fit, uninformative_init
from .spectral import (
    ClusterResult,
    eigendecompose,
    embed,
    kmeans,
    normalized_affinity,
)

# Entropy stream tags for seeds derived from the master seed.  Synthesis
# uses tag 0 inside cohort.py; fits and clustering must not collide with it.
_FIT_STREAM = 1
_KMEANS_STREAM = 2

DEFAULT_SYNTH_COUNT = 400


@dataclass
class PipelineConfig:
    """Everything a run depends on; hashed into the manifest."""

    n_states: int = 3
    n_symbols: int = 2
    perturbation: float = 0.01
    em_tol: float = 1e-6
    em_max_iter: int = 200
    bandwidth: float = 2.0
    e_dim: int = 2
    k: int = 2
    restarts: int = 10
    row_normalize: bool = False
    length_normalize: bool = False
    master_seed: int = 0
    input: str = f"synth:{DEFAULT_SYNTH_COUNT}"
    out: str = "out"

    def validate(self) -> "PipelineConfig":
        if self.n_states < 1:
            raise ParameterError("n_states must be at least 1")
        if self.n_symbols < 2:
            raise ParameterError("n_symbols must be at least 2")
        if not 0.0 <= self.perturbation <= 0.1:
            raise ParameterError("perturbation must lie in [0, 0.1]")
        if self.em_tol <= 0.0:
            raise ParameterError("em_tol must be positive")
        if self.em_max_iter < 1:
            raise ParameterError("em_max_iter must be at least 1")
        if self.bandwidth <= 0.0:
            raise ParameterError("bandwidth must be positive")
        if self.e_dim < 1:
            raise ParameterError("e_dim must be at least 1")
        if self.k < 1:
            raise ParameterError("k must be at least 1")
        if self.restarts < 1:
            raise ParameterError("restarts must be at least 1")
        if self.master_seed < 0:
            raise ParameterError("master_seed must be nonnegative")
        if not self.input:
            raise ParameterError("input must be a file path or a synth: spec")
        if not self.out:
            raise ParameterError("out must be a directory path")
        parse_input_spec(self.input)
        return self


_BOOL_WORDS = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


def _parse_typed(name: str, kind: type, raw: str):
    if kind is bool:
        word = raw.strip().lower()
        if word not in _BOOL_WORDS:
            raise ParameterError(f"config field {name}: expected true/false, got {raw!r}")
        return _BOOL_WORDS[word]
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ParameterError(f"config field {name}: invalid {kind.__name__}: {raw!r}") from None
    return raw


def load_config_file(path) -> dict:
    """Flat ``key = value`` file with the PipelineConfig field names.

    Blank lines and ``#`` comments are ignored; unknown keys are errors.
    """
    path = Path(path)
    if not path.exists():
        raise ParameterError(f"config file not found: {path}")
    types = {f.name: f.type for f in dataclass_fields(PipelineConfig)}
    kinds = {"int": int, "float": float, "bool": bool, "str": str}
    values = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ParameterError(f"{path}:{line_no}: expected \"key = value\"")
            key, raw = (part.strip() for part in text.split("=", 1))
            if key not in types:
                raise ParameterError(f"{path}:{line_no}: unknown config field {key!r}")
            values[key] = _parse_typed(key, kinds.get(str(types[key]), str), raw)
    return values


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Defaults, then config-file values, then explicit flag overrides."""
    merged: dict = {}
    if file_values:
        merged.update(file_values)
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclass_fields(PipelineConfig)}
    unknown = set(merged) - known
    if unknown:
        raise ParameterError(f"unknown config fields: {sorted(unknown)}")
    return PipelineConfig(**merged).validate()


def config_as_dict(config: PipelineConfig) -> dict:
    return {f.name: getattr(config, f.name) for f in dataclass_fields(PipelineConfig)}


def config_hash(config: PipelineConfig) -> str:
    """Hash of the canonical config text.

    The output directory is excluded: the same logical run written to two
    different directories must produce identical manifests.
    """
    entries = config_as_dict(config)
    entries.pop("out")
    text = "\n".join(f"{key} = {entries[key]}" for key in sorted(entries)) + "\n"
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def manifest_config_fields(config: PipelineConfig) -> dict:
    echo = config_as_dict(config)
    echo.pop("out")
    return {"config": echo, "config_hash": config_hash(config), "seed": config.master_seed}


def parse_input_spec(value: str):
    """Either ("synth", per-batch count) or ("file", path)."""
    if value == "synth" or value == "synth:default":
        return "synth", DEFAULT_SYNTH_COUNT
    if value.startswith("synth:"):
        raw = value.split(":", 1)[1]
        try:
            count = int(raw)
        except ValueError:
            raise ParameterError(
                f"invalid synth spec {value!r}; use synth:<count-per-batch>"
            ) from None
        if count < 1:
            raise ParameterError("synth count must be at least 1")
        return "synth", count
    return "file", value


def derived_seed(master_seed: int, *key: int) -> int:
    """Stable 63-bit seed for a sub-stream of the master seed."""
    ss = np.random.SeedSequence([master_seed, *key])
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


def _progress_printer(label: str):
    """Emit at most one stderr line per percent of completed work."""
    last = -1

    def report(done: int, total: int) -> None:
        nonlocal last
        percent = (100 * done) // total
        if percent > last:
            last = percent
            print(f"[trajclust] {label}: {percent}%", file=sys.stderr, end="\r" if percent < 100 else "\n", flush=True)

    return report


def _cohort_path(config: PipelineConfig) -> Path:
    kind, value = parse_input_spec(config.input)
    if kind == "synth":
        return Path(config.out) / "cohort.jsonl"
    return Path(value)


def _load_pipeline_cohort(config: PipelineConfig) -> Cohort:
    kind, _ = parse_input_spec(config.input)
    path = _cohort_path(config)
    if not path.exists():
        if kind == "synth":
            raise DataError(
                f"cohort file not found: {path}; run the synth stage first"
            )
        raise DataError(f"input file not found: {path}")
    fmt = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    cohort = load_cohort(path, fmt=fmt)
    if len(cohort.alphabet) != config.n_symbols:
        raise ParameterError(
            f"config says n_symbols={config.n_symbols} but the cohort "
            f"alphabet has {len(cohort.alphabet)} names"
        )
    return cohort


def stage_synth(config: PipelineConfig) -> Path:
    """Generate the synthetic cohort named by a synth: input spec."""
    kind, count = parse_input_spec(config.input)
    if kind != "synth":
        raise ParameterError(
            "the synth stage needs a synth: input spec, got a file path"
        )
    spec = default_cohort_spec(count_per_batch=count, seed=config.master_seed)
    cohort = synthesize_cohort(spec)
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "cohort.jsonl"
    write_cohort(cohort, path, fmt="jsonl")
    fields = manifest_config_fields(config)
    fields["n"] = len(cohort)
    fields["provenance"] = cohort.provenance
    update_manifest(out_dir, files=["cohort.jsonl"], fields=fields)
    return path


def stage_fit(config: PipelineConfig, threads: int = 1) -> Path:
    """Fit one model per sequence and write models.json.

    Model parameters are stored at full float precision so a reloaded model
    is bitwise the fitted one (stochasticity must survive the round trip).
    """
    if threads < 1:
        raise ParameterError("threads must be at least 1")
    cohort = _load_pipeline_cohort(config)
    report = _progress_printer("fit")

    def fit_one(index: int):
        init = uninformative_init(
            config.n_states,
            config.n_symbols,
            config.perturbation,
            seed=derived_seed(config.master_seed, _FIT_STREAM, index),
        )
        return baum_welch_fit(
            cohort.sequences[index],
            init,
            tol=config.em_tol,
            max_iter=config.em_max_iter,
        )

    n = len(cohort)
    results = [None] * n
    if threads == 1:
        for i in range(n):
            results[i] = fit_one(i)
            report(i + 1, n)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for i, fit in enumerate(pool.map(fit_one, range(n))):
                results[i] = fit
                report(i + 1, n)
    models = {}
    for seq, fit in zip(cohort.sequences, results):
        models[seq.id] = {
            "initial": fit.model.initial.tolist(),
            "transition": fit.model.transition.tolist(),
            "emission": fit.model.emission.tolist(),
            "final_loglik": fit.loglik_trace[-1],
            "iterations": fit.iterations,
            "converged": fit.converged,
        }
    payload = {
        "alphabet": list(cohort.alphabet),
        "n_states": config.n_states,
        "n_symbols": config.n_symbols,
        "models": models,
    }
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "models.json"
    write_text(path, json.dumps(payload, indent=2) + "\n")
    fields = manifest_config_fields(config)
    fields["n"] = n
    update_manifest(out_dir, files=["models.json"], fields=fields)
    return path


def _load_models(config: PipelineConfig, cohort: Cohort) -> list[DiscreteHmm]:
    path = Path(config.out) / "models.json"
    if not path.exists():
        raise DataError(f"models file not found: {path}; run the fit stage first")
    with open(path, encoding="utf-8") as handle:
        try:
            payload = json.load(handle)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc.msg}") from exc
    stored = payload.get("models", {})
    models = []
    for seq in cohort.sequences:
        entry = stored.get(seq.id)
        if entry is None:
            raise DataError(
                f"{path}: no model for sequence {seq.id!r}; refit the cohort"
            )
        models.append(
            DiscreteHmm(entry["initial"], entry["transition"], entry["emission"])
        )
    extra = set(stored) - set(cohort.ids)
    if extra:
        raise DataError(
            f"{path}: contains models for unknown sequences "
            f"(first: {sorted(extra)[0]!r}); refit the cohort"
        )
    return models


def stage_distances(config: PipelineConfig, threads: int = 1) -> Path:
    """Cross log-likelihoods, distances, and similarities as CSV matrices."""
    if threads < 1:
        raise ParameterError("threads must be at least 1")
    cohort = _load_pipeline_cohort(config)
    models = _load_models(config, cohort)
    dist = build_distance_set(
        models,
        cohort.sequences,
        bandwidth=config.bandwidth,
        length_normalize=config.length_normalize,
        threads=threads,
        progress=_progress_printer("distances"),
    )
    out_dir = Path(config.out)
    ids = list(cohort.ids)
    write_matrix_csv(out_dir / "loglik.csv", dist.loglik, ids)
    write_matrix_csv(out_dir / "distance.csv", dist.distance, ids)
    write_matrix_csv(out_dir / "similarity.csv", dist.similarity, ids)
    fields = manifest_config_fields(config)
    fields["n"] = len(cohort)
    update_manifest(
        out_dir,
        files=["loglik.csv", "distance.csv", "similarity.csv"],
        fields=fields,
    )
    return out_dir / "similarity.csv"


def stage_cluster(config: PipelineConfig) -> Path:
    """Spectral embedding of similarity.csv followed by K-means."""
    out_dir = Path(config.out)
    sim_path = out_dir / "similarity.csv"
    if not sim_path.exists():
        raise DataError(
            f"similarity file not found: {sim_path}; run the distances stage first"
        )
    ids, similarity = read_matrix_csv(sim_path)
    z = normalized_affinity(similarity, ids=ids)
    decomposition = eigendecompose(z)
    embedding = embed(decomposition, config.e_dim, row_normalize=config.row_normalize)
    clusters = kmeans(
        embedding.coordinates,
        config.k,
        restarts=config.restarts,
        seed=derived_seed(config.master_seed, _KMEANS_STREAM),
    )
    write_eigenvalues_csv(out_dir / "eigenvalues.csv", decomposition.eigenvalues)
    write_eigengaps_csv(out_dir / "eigengaps.csv", decomposition.eigenvalues)
    write_coordinates_csv(out_dir / "coordinates.csv", embedding.coordinates, ids)
    write_labels_csv(out_dir / "labels.csv", ids, np.asarray(clusters.labels).tolist())
    fields = manifest_config_fields(config)
    fields["n"] = len(ids)
    fields["e_dim"] = config.e_dim
    fields["k"] = config.k
    update_manifest(
        out_dir,
        files=["eigenvalues.csv", "eigengaps.csv", "coordinates.csv", "labels.csv"],
        fields=fields,
    )
    return out_dir / "labels.csv"


def subset_cluster_metrics(config: PipelineConfig, cohort: Cohort, ids, coordinates, subset):
    """Evaluation restricted to the subset labels, with its own K-means.

    Returns (metrics, subset_indices).  The same derived seed as the full
    clustering keeps the restricted run reproducible.
    """
    subset = tuple(subset)
    by_id = {seq.id: seq for seq in cohort.sequences}
    wanted = set(subset)
    indices = [i for i, sid in enumerate(ids) if by_id[sid].label in wanted]
    if not indices:
        raise DataError(f"no sequences carry a label from the subset {sorted(wanted)}")
    sub_points = np.asarray(coordinates)[indices]
    sub_clusters = kmeans(
        sub_points,
        config.k,
        restarts=config.restarts,
        seed=derived_seed(config.master_seed, _KMEANS_STREAM),
    )
    metrics = evaluate_against_labels(sub_clusters, cohort, subset=subset)
    return metrics, indices


def stage_eval(config: PipelineConfig, subset=None) -> Path:
    """Score the clustering against cohort labels; write metrics.json."""
    cohort = _load_pipeline_cohort(config)
    out_dir = Path(config.out)
    coords_path = out_dir / "coordinates.csv"
    labels_path = out_dir / "labels.csv"
    for needed in (coords_path, labels_path):
        if not needed.exists():
            raise DataError(
                f"clustering artifact not found: {needed}; run the cluster stage first"
            )
    ids, coordinates = read_coordinates_csv(coords_path)
    label_ids, cluster_labels = read_labels_csv(labels_path)
    if ids != label_ids or ids != list(cohort.ids):
        raise DataError(
            "artifact ids disagree with the cohort; rerun the pipeline stages in order"
        )
    if subset:
        metrics, indices = subset_cluster_metrics(
            config, cohort, ids, coordinates, subset
        )
        n_used = len(indices)
    else:
        k_stored = max(config.k, int(cluster_labels.max()) + 1)
        clusters = ClusterResult(
            labels=cluster_labels,
            centroids=np.zeros((k_stored, coordinates.shape[1])),
            inertia=0.0,
            empty_clusters=(),
        )
        metrics = evaluate_against_labels(clusters, cohort)
        n_used = len(cohort)
    payload = {
        "ari": metrics.ari,
        "purity": metrics.purity,
        "confusion": {label: list(counts) for label, counts in metrics.confusion.items()},
        "n": n_used,
        "subset": list(subset) if subset else None,
    }
    path = out_dir / "metrics.json"
    write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    fields = manifest_config_fields(config)
    update_manifest(out_dir, files=["metrics.json"], fields=fields)
    return path


def run_pipeline(config: PipelineConfig, subset=None, threads: int = 1) -> dict:
    """All stages in order, with per-stage wall time reported to stderr.

    Evaluation is skipped (with a note) when the cohort carries no labels.
    Returns the final manifest.
    """
    config.validate()
    kind, _ = parse_input_spec(config.input)
    stages: list[tuple[str, object]] = []
    if kind == "synth":
        stages.append(("synth", lambda: stage_synth(config)))
    stages.append(("fit", lambda: stage_fit(config, threads=threads)))
    stages.append(("distances", lambda: stage_distances(config, threads=threads)))
    stages.append(("cluster", lambda: stage_cluster(config)))

    def eval_stage():
        cohort = _load_pipeline_cohort(config)
        if all(label is None for label in cohort.labels):
            print(
                "[trajclust] eval: cohort has no labels, skipping",
                file=sys.stderr,
            )
            return None
        return stage_eval(config, subset=subset)

    stages.append(("eval", eval_stage))
    for name, action in stages:
        started = time.perf_counter()
        try:
            action()
        except TrajclustError as exc:
            if not getattr(exc, "stage", None):
                exc.stage = name  # type: ignore[attr-defined]
            raise
        elapsed = time.perf_counter() - started
        print(f"[trajclust] {name} stage: {elapsed:.2f} s", file=sys.stderr)
    manifest_path = Path(config.out) / "manifest.json"
    with open(manifest_path, encoding="utf-8") as handle:
        return json.load(handle)


def _add_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--input", help="cohort file path or synth:<count-per-batch>")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, dest="master_seed", help="master seed")
    parser.add_argument("--states", type=int, dest="n_states", help="hidden states per model")
    parser.add_argument("--symbols", type=int, dest="n_symbols", help="alphabet size")
    parser.add_argument("--perturbation", type=float, help="init noise magnitude in [0, 0.1]")
    parser.add_argument("--bandwidth", type=float, help="similarity kernel bandwidth")
    parser.add_argument("--e-dim", type=int, dest="e_dim", help="embedding dimensions")
    parser.add_argument("--k", type=int, help="number of clusters")
    parser.add_argument("--restarts", type=int, help="K-means restarts")
    parser.add_argument(
        "--row-normalize",
        action="store_true",
        default=None,
        dest="row_normalize",
        help="normalize embedding rows to unit norm",
    )
    parser.add_argument(
        "--length-normalize",
        action="store_true",
        default=None,
        dest="length_normalize",
        help="use per-symbol log-likelihoods for distances",
    )
    parser.add_argument(
        "--exact-uniform",
        action="store_true",
        help="start EM from the exact uniform model (perturbation 0)",
    )
    parser.add_argument(
        "--subset",
        help="comma-separated cohort labels; eval reruns K-means on that subset",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="worker threads; results do not depend on this",
    )


def _config_from_args(args) -> PipelineConfig:
    file_values = load_config_file(args.config) if args.config else None
    override_names = [
        "input",
        "out",
        "master_seed",
        "n_states",
        "n_symbols",
        "perturbation",
        "bandwidth",
        "e_dim",
        "k",
        "restarts",
        "row_normalize",
        "length_normalize",
    ]
    overrides = {name: getattr(args, name) for name in override_names}
    if args.exact_uniform:
        overrides["perturbation"] = 0.0
    return build_config(file_values, overrides)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="trajclust",
        description="Cluster event sequences via per-sequence HMMs, "
        "cross-likelihood distances, and spectral embedding.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("run", "full pipeline"),
        ("synth", "generate the synthetic cohort"),
        ("fit", "fit one model per sequence"),
        ("distances", "cross-likelihood, distance, and similarity matrices"),
        ("cluster", "spectral embedding and K-means"),
        ("eval", "score clusters against cohort labels"),
    ):
        sub = commands.add_parser(name, help=text)
        _add_flags(sub)
    args = parser.parse_args(argv)
    stage = args.command
    try:
        if args.threads < 1:
            raise ParameterError("threads must be at least 1")
        config = _config_from_args(args)
        subset = (
            tuple(part.strip() for part in args.subset.split(",") if part.strip())
            if args.subset
            else None
        )
        if stage == "run":
            run_pipeline(config, subset=subset, threads=args.threads)
        elif stage == "synth":
            stage_synth(config)
        elif stage == "fit":
            stage_fit(config, threads=args.threads)
        elif stage == "distances":
            stage_distances(config, threads=args.threads)
        elif stage == "cluster":
            stage_cluster(config)
        elif stage == "eval":
            stage_eval(config, subset=subset)
        return 0
    except (DegenerateGraphError, NumericalError) as exc:
        _report_failure(stage, exc)
        return 4
    except DataError as exc:
        _report_failure(stage, exc)
        return 3
    except ParameterError as exc:
        _report_failure(stage, exc)
        return 2
    except OSError as exc:
        _report_failure(stage, exc)
        return 3


def _report_failure(command: str, exc: Exception) -> None:
    stage = getattr(exc, "stage", None) or command
    print(f"trajclust: {stage} stage failed: {exc}", file=sys.stderr)
