"""Cohorts of observation sequences: file formats and synthetic generation.

Two on-disk formats are supported.

jsonl: an optional first line ``{"alphabet": ["s", "c"]}`` followed by one
object per line, ``{"id": ..., "symbols": ["s", "s", "c", ...]}`` with an
optional ``"label"``.  Symbols are written as alphabet names, not codes.

csv: a header line ``id,label,symbols`` followed by one row per sequence;
``symbols`` is the comma-joined name string inside one quoted field and the
label column may be empty.

When no alphabet is declared (csv, or jsonl without the header line) the
two-narrative default ("s", "c") applies.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError
from .hmm import DiscreteHmm, ObservationSequence, sample_sequence

DEFAULT_ALPHABET = ("s", "c")

# Entropy stream tag for synthesis; keeps per-sequence seeds disjoint from
# the fit-initialization and clustering streams derived elsewhere.
_SYNTH_STREAM = 0


@dataclass(frozen=True, eq=False)
class Cohort:
    """An ordered collection of sequences over one named alphabet."""

    sequences: tuple[ObservationSequence, ...]
    alphabet: tuple[str, ...]
    provenance: str = ""

    def __post_init__(self):
        sequences = tuple(self.sequences)
        alphabet = tuple(self.alphabet)
        if not alphabet:
            raise ParameterError("alphabet must not be empty")
        if len(set(alphabet)) != len(alphabet):
            raise ParameterError("alphabet names must be unique")
        seen = set()
        for seq in sequences:
            if seq.id in seen:
                raise DataError(f"duplicate sequence id {seq.id!r}")
            seen.add(seq.id)
            top = int(seq.symbols.max())
            if top >= len(alphabet):
                raise DataError(
                    f"sequence {seq.id!r} uses symbol code {top} but the "
                    f"alphabet has only {len(alphabet)} names"
                )
        object.__setattr__(self, "sequences", sequences)
        object.__setattr__(self, "alphabet", alphabet)

    def __len__(self) -> int:
        return len(self.sequences)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(seq.id for seq in self.sequences)

    @property
    def labels(self) -> tuple[str | None, ...]:
        return tuple(seq.label for seq in self.sequences)


@dataclass(frozen=True, eq=False)
class BatchSpec:
    """One synthetic batch: how many sequences, from which generator model,
    with lengths drawn uniformly from [length_min, length_max]."""

    name: str
    count: int
    model: DiscreteHmm
    length_min: int
    length_max: int

    def __post_init__(self):
        if not self.name:
            raise ParameterError("batch name must not be empty")
        if self.count < 1:
            raise ParameterError(f"batch {self.name!r}: count must be at least 1")
        if not 1 <= self.length_min <= self.length_max:
            raise ParameterError(
                f"batch {self.name!r}: need 1 <= length_min <= length_max"
            )


@dataclass(frozen=True, eq=False)
class CohortSpec:
    """Recipe for a synthetic cohort; fully determined by its seed."""

    batches: tuple[BatchSpec, ...]
    seed: int
    alphabet: tuple[str, ...] = DEFAULT_ALPHABET

    def __post_init__(self):
        batches = tuple(self.batches)
        if not batches:
            raise ParameterError("a cohort spec needs at least one batch")
        names = [b.name for b in batches]
        if len(set(names)) != len(names):
            raise ParameterError("batch names must be unique")
        if self.seed < 0:
            raise ParameterError("seed must be nonnegative")
        for b in batches:
            if b.model.n_symbols != len(self.alphabet):
                raise ParameterError(
                    f"batch {b.name!r}: generator model has {b.model.n_symbols} "
                    f"symbols but the alphabet names {len(self.alphabet)}"
                )
        object.__setattr__(self, "batches", batches)
        object.__setattr__(self, "alphabet", tuple(self.alphabet))


def default_generators() -> dict[str, DiscreteHmm]:
    """Three-state generator models for the default synthetic design.

    PS leans heavily on the first narrative, PC is its mirror image, and NP
    wanders between states with mixed emissions.  The polarized generators
    are calibrated so their expected single-narrative share exceeds 0.95.
    """
    ps = DiscreteHmm(
        initial=[0.95, 0.04, 0.01],
        transition=[
            [0.98, 0.015, 0.005],
            [0.60, 0.35, 0.05],
            [0.50, 0.30, 0.20],
        ],
        emission=[
            [0.99, 0.01],
            [0.70, 0.30],
            [0.20, 0.80],
        ],
    )
    pc = DiscreteHmm(
        initial=[0.01, 0.04, 0.95],
        transition=[
            [0.20, 0.30, 0.50],
            [0.05, 0.35, 0.60],
            [0.005, 0.015, 0.98],
        ],
        emission=[
            [0.80, 0.20],
            [0.30, 0.70],
            [0.01, 0.99],
        ],
    )
    np_model = DiscreteHmm(
        initial=[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        transition=[
            [0.80, 0.15, 0.05],
            [0.15, 0.70, 0.15],
            [0.05, 0.15, 0.80],
        ],
        emission=[
            [0.85, 0.15],
            [0.50, 0.50],
            [0.15, 0.85],
        ],
    )
    return {"PS": ps, "PC": pc, "NP": np_model}


def default_cohort_spec(
    count_per_batch: int = 400,
    seed: int = 0,
    length_min: int = 100,
    length_max: int = 300,
) -> CohortSpec:
    """The default design: equal PS, PC, and NP batches with lengths drawn
    uniformly from [100, 300]."""
    generators = default_generators()
    batches = tuple(
        BatchSpec(
            name=name,
            count=count_per_batch,
            model=model,
            length_min=length_min,
            length_max=length_max,
        )
        for name, model in generators.items()
    )
    return CohortSpec(batches=batches, seed=seed)


def synthesize_cohort(spec: CohortSpec) -> Cohort:
    """Generate the cohort described by the spec.

    Each sequence draws its length and sampling seed from a seed stream
    keyed by (master seed, batch index, sequence index), so the output is
    reproducible and independent of generation order.
    """
    sequences = []
    for b_idx, batch in enumerate(spec.batches):
        for i in range(batch.count):
            ss = np.random.SeedSequence([spec.seed, _SYNTH_STREAM, b_idx, i])
            rng = np.random.default_rng(ss)
            length = int(rng.integers(batch.length_min, batch.length_max + 1))
            sample_seed = int(rng.integers(0, 2**63))
            sequences.append(
                sample_sequence(
                    batch.model,
                    length,
                    sample_seed,
                    seq_id=f"{batch.name}-{i:04d}",
                    label=batch.name,
                )
            )
    batches_text = ", ".join(
        f"{b.name}:{b.count}x[{b.length_min},{b.length_max}]" for b in spec.batches
    )
    provenance = (
        f"synthetic cohort (seed={spec.seed}; batches {batches_text}; "
        "lengths are a stand-in drawn uniformly per sequence)"
    )
    return Cohort(
        sequences=tuple(sequences), alphabet=spec.alphabet, provenance=provenance
    )


def _symbol_codes(names, alphabet_index, path, line_no, seq_id):
    codes = np.empty(len(names), dtype=np.int64)
    for pos, name in enumerate(names):
        code = alphabet_index.get(name)
        if code is None:
            raise DataError(
                f"{path}:{line_no}: sequence {seq_id!r} uses unknown symbol "
                f"{name!r} (declared alphabet: "
                f"{', '.join(sorted(alphabet_index))})"
            )
        codes[pos] = code
    return codes


def load_cohort(
    path,
    fmt: str = "jsonl",
    alphabet=None,
    min_length: int = 1,
) -> Cohort:
    """Read a cohort from disk.

    ``alphabet`` overrides any alphabet declared in the file; when neither
    is present the default ("s", "c") applies.  Sequences shorter than
    ``min_length`` are rejected.  All parse errors carry the file path and
    line number.
    """
    path = Path(path)
    if fmt not in ("jsonl", "csv"):
        raise ParameterError(f"unknown cohort format {fmt!r} (use jsonl or csv)")
    if min_length < 1:
        raise ParameterError("min_length must be at least 1")
    if not path.exists():
        raise DataError(f"cohort file not found: {path}")
    if fmt == "jsonl":
        rows, declared = _read_jsonl_rows(path)
    else:
        rows, declared = _read_csv_rows(path)
    if alphabet is not None:
        if declared is not None and tuple(alphabet) != declared:
            raise DataError(
                f"{path}: declared alphabet {declared} does not match the "
                f"requested alphabet {tuple(alphabet)}"
            )
        chosen = tuple(alphabet)
    elif declared is not None:
        chosen = declared
    else:
        chosen = DEFAULT_ALPHABET
    index = {name: i for i, name in enumerate(chosen)}
    sequences = []
    seen = set()
    for line_no, seq_id, label, names in rows:
        if seq_id in seen:
            raise DataError(f"{path}:{line_no}: duplicate sequence id {seq_id!r}")
        seen.add(seq_id)
        if len(names) < min_length:
            raise DataError(
                f"{path}:{line_no}: sequence {seq_id!r} has {len(names)} "
                f"symbols, fewer than the minimum {min_length}"
            )
        codes = _symbol_codes(names, index, path, line_no, seq_id)
        sequences.append(ObservationSequence(id=seq_id, symbols=codes, label=label))
    if not sequences:
        raise DataError(f"{path}: no sequences")
    return Cohort(
        sequences=tuple(sequences),
        alphabet=chosen,
        provenance=f"loaded from {path} ({fmt})",
    )


def _read_jsonl_rows(path: Path):
    rows = []
    declared = None
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                record = json.loads(text)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: invalid JSON: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise DataError(f"{path}:{line_no}: expected a JSON object")
            if line_no == 1 and "alphabet" in record and "id" not in record:
                names = record["alphabet"]
                if (
                    not isinstance(names, list)
                    or not names
                    or not all(isinstance(x, str) for x in names)
                ):
                    raise DataError(
                        f"{path}:{line_no}: alphabet must be a non-empty list of names"
                    )
                declared = tuple(names)
                continue
            seq_id = record.get("id")
            if not isinstance(seq_id, str) or not seq_id:
                raise DataError(f"{path}:{line_no}: missing or invalid \"id\"")
            symbols = record.get("symbols")
            if not isinstance(symbols, list) or not all(
                isinstance(x, str) for x in symbols
            ):
                raise DataError(
                    f"{path}:{line_no}: \"symbols\" must be a list of symbol names"
                )
            label = record.get("label")
            if label is not None and not isinstance(label, str):
                raise DataError(f"{path}:{line_no}: \"label\" must be a string")
            rows.append((line_no, seq_id, label, symbols))
    return rows, declared


def _read_csv_rows(path: Path):
    rows = []
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: no sequences") from None
        if header != ["id", "label", "symbols"]:
            raise DataError(
                f"{path}:1: expected header \"id,label,symbols\", got "
                f"{','.join(header)!r}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(
                    f"{path}:{line_no}: expected 3 columns, got {len(row)}"
                )
            seq_id, label, joined = row
            if not seq_id:
                raise DataError(f"{path}:{line_no}: empty sequence id")
            names = joined.split(",") if joined else []
            rows.append((line_no, seq_id, label or None, names))
    return rows, None


def write_cohort(cohort: Cohort, path, fmt: str = "jsonl") -> None:
    """Write a cohort so that loading it back yields the same sequences."""
    path = Path(path)
    if fmt == "jsonl":
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(json.dumps({"alphabet": list(cohort.alphabet)}) + "\n")
            for seq in cohort.sequences:
                record: dict = {"id": seq.id}
                if seq.label is not None:
                    record["label"] = seq.label
                record["symbols"] = [cohort.alphabet[s] for s in seq.symbols]
                handle.write(json.dumps(record) + "\n")
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["id", "label", "symbols"])
            for seq in cohort.sequences:
                joined = ",".join(cohort.alphabet[s] for s in seq.symbols)
                writer.writerow([seq.id, seq.label or "", joined])
    else:
        raise ParameterError(f"unknown cohort format {fmt!r} (use jsonl or csv)")
