"""Temperature sampling over skewed dataset collections.

Raw sampling probabilities follow dataset size, P(D_i) = N_i / sum_j N_j,
which starves small datasets. Temperature sampling flattens the distribution
by exponentiation, T(D_i, t) = P(D_i)^(1/t), and turns the flattened weights
back into integer oversampled sizes

    k_i = floor( T(D_i, t) * max_j N_j / max_j T(D_j, t) )

so the largest dataset keeps exactly its original size and every smaller one
is repeated until the realized distribution k_i / sum k_j approaches the
tempered one. Mixing is applied separately per group (e.g. one pass for
general-domain corpora, one for in-domain corpora) so a huge general corpus
cannot crowd out a small specialized one.

Invariants / design intent:
  - t = 1 is an identity: k_i = N_i exactly, as integers.
  - The argmax-size dataset keeps k = N exactly for every t > 0.
  - k_i never drops below 1 for a non-empty dataset, so no dataset silently
    vanishes from the mix even at sharpening temperatures (t < 1).
  - The pre-floor oversampling factor is monotone in t for every
    non-largest dataset.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import InvalidInput


@dataclass(frozen=True)
class DatasetSpec:
    """One dataset in a mix request: identity, group label, and size in sentence pairs."""

    id: str
    group: str
    size: int

    def __post_init__(self):
        if not self.id:
            raise InvalidInput("dataset id must be non-empty")
        if not isinstance(self.size, int) or self.size < 1:
            raise InvalidInput(f"dataset {self.id!r}: size must be a positive integer, got {self.size!r}")


@dataclass(frozen=True)
class MixEntry:
    """Per-dataset outcome of a mix: original size, tempered factor, oversampled size, realized probability."""

    id: str
    original_size: int
    factor: float
    oversampled_size: int
    probability: float


@dataclass(frozen=True)
class MixPlan:
    """A temperature plus the per-dataset oversampling resolution."""

    temperature: float
    entries: tuple[MixEntry, ...]

    @property
    def total_size(self) -> int:
        return sum(e.oversampled_size for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "entries": [
                {
                    "id": e.id,
                    "original_size": e.original_size,
                    "factor": e.factor,
                    "oversampled_size": e.oversampled_size,
                    "probability": e.probability,
                }
                for e in self.entries
            ],
        }


def dataset_probabilities(specs: list[DatasetSpec]) -> list[float]:
    """Size-proportional sampling probabilities P(D_i) = N_i / sum_j N_j."""
    if not specs:
        raise InvalidInput("need at least one dataset")
    _check_unique_ids(specs)
    total = sum(s.size for s in specs)
    return [s.size / total for s in specs]


def oversample_factors(sizes: list[int], t: float) -> list[float]:
    """Pre-floor oversampled sizes: T_i * max N / max T, evaluated stably.

    Algebraically T_i / max T = (N_i / N_max)^(1/t), so the value equals
    N_max^(1 - 1/t) * N_i^(1/t). Two cases are provably integral in real
    arithmetic and are short-circuited so double rounding cannot push the
    subsequent floor below the true integer: t = 1 (identity) and
    N_i = N_max (the largest dataset is a fixed point).
    """
    n_max = max(sizes)
    inv_t = 1.0 / t
    out = []
    for n in sizes:
        if t == 1.0 or n == n_max:
            out.append(float(n))
        else:
            out.append(n_max ** (1.0 - inv_t) * n**inv_t)
    return out


def mix_plan(specs: list[DatasetSpec], t: float) -> MixPlan:
    """Resolve one group of datasets at temperature t.

    The oversampled size is floor of the full-precision factor, clamped to a
    minimum of 1 so sharpening temperatures cannot drop a dataset entirely.
    Realized probabilities are k_i / sum k_j.
    """
    if t <= 0:
        raise InvalidInput(f"temperature must be > 0, got {t}")
    if not specs:
        raise InvalidInput("need at least one dataset")
    _check_unique_ids(specs)

    sizes = [s.size for s in specs]
    probs = dataset_probabilities(specs)
    factors = [p ** (1.0 / t) for p in probs]
    k = [max(1, math.floor(f)) for f in oversample_factors(sizes, t)]
    k_total = sum(k)

    entries = tuple(
        MixEntry(
            id=s.id,
            original_size=s.size,
            factor=f,
            oversampled_size=ki,
            probability=ki / k_total,
        )
        for s, f, ki in zip(specs, factors, k)
    )
    return MixPlan(temperature=t, entries=entries)


def grouped_mix(specs: list[DatasetSpec], t: float) -> dict[str, MixPlan]:
    """mix_plan applied independently to each group label."""
    if not specs:
        raise InvalidInput("need at least one dataset")
    for s in specs:
        if not s.group:
            raise InvalidInput(f"dataset {s.id!r} has no group label")
    groups: dict[str, list[DatasetSpec]] = {}
    for s in specs:
        groups.setdefault(s.group, []).append(s)
    return {g: mix_plan(members, t) for g, members in groups.items()}


def materialize_indices(plan: MixPlan, seed: int) -> Iterator[tuple[str, int]]:
    """Emit exactly k_i (dataset id, sample index) references per dataset.

    Each dataset contributes floor(k_i / N_i) whole epochs plus a remainder
    drawn as a seeded-shuffle prefix of its index range, and the combined
    stream is globally shuffled. Deterministic for a fixed seed; every call
    returns a fresh independent iterator.
    """
    rng = np.random.default_rng(seed)
    ids: list[str] = []
    chunks: list[np.ndarray] = []
    owner: list[np.ndarray] = []
    for slot, e in enumerate(plan.entries):
        n, k = e.original_size, e.oversampled_size
        full, rem = divmod(k, n)
        idx = np.arange(n, dtype=np.int64)
        parts = [idx] * full
        if rem:
            parts.append(rng.permutation(n)[:rem].astype(np.int64))
        if not parts:
            continue
        both = np.concatenate(parts)
        ids.append(e.id)
        chunks.append(both)
        owner.append(np.full(both.shape, len(ids) - 1, dtype=np.int64))

    if not chunks:
        return iter(())

    indices = np.concatenate(chunks)
    owners = np.concatenate(owner)
    order = rng.permutation(indices.shape[0])

    def _gen() -> Iterator[tuple[str, int]]:
        for pos in order:
            yield ids[owners[pos]], int(indices[pos])

    return _gen()


def load_manifest(path: str | Path) -> list[DatasetSpec]:
    """Read dataset specs from a JSON or CSV manifest with keys id, group, size."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        raw = json.loads(path.read_text())
        if isinstance(raw, dict):
            raw = raw.get("datasets", raw)
        if not isinstance(raw, list):
            raise InvalidInput(f"{path}: expected a list of dataset records")
        rows = raw
    else:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    specs = []
    for row in rows:
        try:
            specs.append(DatasetSpec(id=str(row["id"]), group=str(row["group"]), size=int(row["size"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInput(f"{path}: bad manifest row {row!r}: {exc}") from exc
    return specs


def _check_unique_ids(specs: list[DatasetSpec]) -> None:
    seen = set()
    for s in specs:
        if s.id in seen:
            raise InvalidInput(f"duplicate dataset id {s.id!r}")
        seen.add(s.id)
