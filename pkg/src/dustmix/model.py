"""Domain types for particle-count corpora and the variational state.

A corpus is a fixed catalog of particle types plus an ordered list of
sampling locations, each holding count samples.  Locations are either known
surfaces tied to exactly one source (their mixing prior stays pinned during
fitting) or trace surfaces whose source mixture is the estimand.  Per-sample
data are stored as per-type counts: responsibilities depend on a particle
only through its type, so all particles of a type share one responsibility
row and the collapsed representation is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "Corpus",
    "CorpusValidationError",
    "DirichletMatrix",
    "FitResult",
    "Location",
    "LocationRole",
    "ParticleCatalog",
    "SampleCounts",
    "VariationalState",
    "Violation",
    "collapse_to_counts",
    "expand_to_labels",
    "validate_corpus",
]


@dataclass(frozen=True)
class ParticleCatalog:
    """Ordered, immutable list of particle-type names."""

    type_names: tuple[str, ...]

    def __post_init__(self) -> None:
        names = tuple(str(n) for n in self.type_names)
        object.__setattr__(self, "type_names", names)
        if len(names) < 2:
            raise ValueError(f"catalog needs at least two particle types, got {len(names)}")
        if len(set(names)) != len(names):
            raise ValueError("catalog type names must be unique")

    @property
    def n_types(self) -> int:
        return len(self.type_names)

    def index_of(self, name: str) -> int:
        try:
            return self.type_names.index(name)
        except ValueError:
            raise KeyError(f"unknown particle type: {name!r}") from None


@dataclass(frozen=True)
class SampleCounts:
    """One sample: a vector of non-negative per-type counts totalling >= 1."""

    counts: np.ndarray
    location_id: int = 0
    sample_index: int = 0

    def __post_init__(self) -> None:
        arr = np.asarray(self.counts)
        if arr.ndim != 1:
            raise ValueError("counts must be a one-dimensional vector")
        if not np.issubdtype(arr.dtype, np.integer):
            rounded = np.rint(arr)
            if not np.all(np.isfinite(arr)) or np.any(np.abs(arr - rounded) > 0):
                raise ValueError("counts must be integers")
            arr = rounded
        arr = arr.astype(np.int64)
        if np.any(arr < 0):
            raise ValueError("counts must be non-negative")
        if int(arr.sum()) < 1:
            raise ValueError("a sample must contain at least one particle")
        arr.setflags(write=False)
        object.__setattr__(self, "counts", arr)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class LocationRole:
    """Role of a sampling location: pinned to one known source, or a trace.

    ``source_index`` is the 0-based column of the mixing matrix claimed by a
    known location; ``None`` marks a trace surface.
    """

    source_index: int | None = None

    @classmethod
    def known(cls, source_index: int) -> "LocationRole":
        if source_index < 0:
            raise ValueError("source_index must be non-negative")
        return cls(source_index=source_index)

    @classmethod
    def trace(cls) -> "LocationRole":
        return cls(source_index=None)

    @property
    def is_known(self) -> bool:
        return self.source_index is not None


@dataclass(frozen=True)
class Location:
    name: str
    role: LocationRole
    samples: tuple[SampleCounts, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))


@dataclass(frozen=True)
class Corpus:
    """All samples grouped by location, plus the source bookkeeping.

    ``n_unknown_sources`` declares how many sources have no known location
    (at most one is supported by the inference engine; the validator flags
    larger declarations rather than the constructor so that violations can
    be reported as data).
    """

    catalog: ParticleCatalog
    locations: tuple[Location, ...]
    n_unknown_sources: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "locations", tuple(self.locations))

    @property
    def n_locations(self) -> int:
        return len(self.locations)

    @property
    def n_known_sources(self) -> int:
        claimed = {
            loc.role.source_index for loc in self.locations if loc.role.is_known
        }
        return len(claimed)

    @property
    def n_sources(self) -> int:
        return self.n_known_sources + self.n_unknown_sources

    @property
    def n_types(self) -> int:
        return self.catalog.n_types

    @property
    def n_samples(self) -> int:
        return sum(len(loc.samples) for loc in self.locations)

    @property
    def source_names(self) -> tuple[str, ...]:
        names = [""] * self.n_known_sources
        for loc in self.locations:
            idx = loc.role.source_index
            if idx is not None and 0 <= idx < len(names) and not names[idx]:
                names[idx] = loc.name
        for i, name in enumerate(names):
            if not name:
                names[i] = f"source_{i}"
        names.extend(f"unknown_{q}" if self.n_unknown_sources > 1 else "unknown"
                     for q in range(self.n_unknown_sources))
        return tuple(names)

    @property
    def trace_location_ids(self) -> tuple[int, ...]:
        return tuple(i for i, loc in enumerate(self.locations) if not loc.role.is_known)

    def iter_samples(self) -> Iterator[tuple[int, SampleCounts]]:
        for i, loc in enumerate(self.locations):
            for sample in loc.samples:
                yield i, sample


@dataclass(frozen=True)
class DirichletMatrix:
    """Positive matrix whose rows are Dirichlet parameter vectors.

    ``role`` is "H" for the sources-by-types profile hyperparameters or "A"
    for the locations-by-sources mixing hyperparameters.
    """

    values: np.ndarray
    role: str

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError("DirichletMatrix must be two-dimensional")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
            raise ValueError("DirichletMatrix entries must be positive and finite")
        if self.role not in ("H", "A"):
            raise ValueError(f"role must be 'H' or 'A', got {self.role!r}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass
class VariationalState:
    """Per-sample variational parameters and the sample's current bound.

    ``phi`` holds one responsibility row per particle type (types absent
    from the sample included, with zero weight in every bound term), so the
    state is O(types x sources) regardless of particle count.
    ``elbo_steps`` records the bound after each coordinate sweep of the most
    recent inference call.
    """

    location_id: int
    sample_index: int
    gamma: np.ndarray
    lam: np.ndarray
    phi: np.ndarray
    elbo: float = float("nan")
    elbo_steps: list[float] = field(default_factory=list)

    def copy(self) -> "VariationalState":
        return VariationalState(
            location_id=self.location_id,
            sample_index=self.sample_index,
            gamma=self.gamma.copy(),
            lam=self.lam.copy(),
            phi=self.phi.copy(),
            elbo=self.elbo,
            elbo_steps=list(self.elbo_steps),
        )


@dataclass(frozen=True)
class FitResult:
    """Converged hyperparameters, per-sample states and the bound trace.

    ``A_converged`` holds only the trace rows of the mixing matrix (known
    rows are pinned by construction and never move); ``trace_locations``
    maps its rows back to corpus location indices.  ``elbo_trace`` has one
    entry per outer iteration, recorded after the inference sweep.
    """

    H_converged: DirichletMatrix
    A_converged: DirichletMatrix
    trace_locations: tuple[int, ...]
    variational: tuple[VariationalState, ...]
    elbo_trace: tuple[float, ...]
    converged: bool
    iterations: int


@dataclass(frozen=True)
class Violation:
    """One failed corpus invariant; validation reports these as data."""

    code: str
    message: str

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return f"[{self.code}] {self.message}"


class CorpusValidationError(ValueError):
    """Raised when an operation requires a corpus free of violations."""

    def __init__(self, violations: Sequence[Violation]):
        self.violations = tuple(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"corpus failed validation: {lines}")


def collapse_to_counts(
    labels: Sequence[str],
    catalog: ParticleCatalog,
    location_id: int = 0,
    sample_index: int = 0,
) -> SampleCounts:
    """Collapse a list of particle-type labels into a per-type count vector."""
    if len(labels) == 0:
        raise ValueError("cannot build a sample from zero particles")
    counts = np.zeros(catalog.n_types, dtype=np.int64)
    for label in labels:
        counts[catalog.index_of(label)] += 1
    return SampleCounts(counts=counts, location_id=location_id, sample_index=sample_index)


def expand_to_labels(sample: SampleCounts, catalog: ParticleCatalog) -> list[str]:
    """Inverse of :func:`collapse_to_counts` up to particle order."""
    return list(np.repeat(catalog.type_names, sample.counts))


def validate_corpus(corpus: Corpus) -> list[Violation]:
    """Check every corpus invariant; empty result means the corpus is fit-ready."""
    violations: list[Violation] = []
    T = corpus.n_types

    if corpus.n_unknown_sources < 0:
        violations.append(Violation("unknown-source-count", "unknown-source count cannot be negative"))
    elif corpus.n_unknown_sources > 1:
        violations.append(
            Violation(
                "unknown-source-limit",
                f"at most one unknown source is supported, got {corpus.n_unknown_sources}",
            )
        )

    claims: dict[int, list[str]] = {}
    for i, loc in enumerate(corpus.locations):
        if loc.role.is_known:
            claims.setdefault(loc.role.source_index, []).append(loc.name)
        for sample in loc.samples:
            if sample.counts.shape[0] != T:
                violations.append(
                    Violation(
                        "sample-length",
                        f"sample {sample.sample_index} at location {loc.name!r} has "
                        f"{sample.counts.shape[0]} type counts, catalog has {T}",
                    )
                )
            if sample.location_id != i:
                violations.append(
                    Violation(
                        "sample-location",
                        f"sample {sample.sample_index} at location {loc.name!r} carries "
                        f"location_id {sample.location_id}, expected {i}",
                    )
                )
            if np.any(sample.counts < 0) or sample.counts.sum() < 1:
                violations.append(
                    Violation(
                        "sample-counts",
                        f"sample {sample.sample_index} at location {loc.name!r} must hold "
                        "non-negative counts totalling at least one particle",
                    )
                )

    n_known = len(claims)
    for idx, names in sorted(claims.items()):
        if len(names) > 1:
            violations.append(
                Violation(
                    "duplicate-source-claim",
                    f"source index {idx} is claimed by multiple locations: {', '.join(names)}",
                )
            )
        if not 0 <= idx < n_known:
            violations.append(
                Violation(
                    "source-index-range",
                    f"known source indices must cover 0..{n_known - 1} exactly; got {idx}",
                )
            )

    if n_known + max(corpus.n_unknown_sources, 0) < 1:
        violations.append(Violation("no-sources", "corpus must declare at least one source"))

    return violations
