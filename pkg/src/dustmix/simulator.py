"""Ground-truth corpus generation and the accuracy study driver.

A scenario fixes true source profiles and trace mixing vectors, then draws
samples particle by particle: a source from the mixing vector, a type from
that source's profile (realized via superposed multinomials, which yields
the identical distribution).  The study driver sweeps a grid of true
unknown-source shares and per-sample particle counts, fits every generated
corpus, and records the posterior mean/mode of the unknown source's share in
each trace plus the unknown source's posterior profile.

Randomness is seeded per (cell, replication) so cells are reproducible
independently and may run in parallel.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import Corpus, Location, LocationRole, ParticleCatalog, SampleCounts
from .numerics import beta_summary
from .posterior import theta_marginal
from .vbi import FitConfig, fit

__all__ = [
    "CellResult",
    "ScenarioSpec",
    "StudySpec",
    "StudyResults",
    "generate_corpus",
    "generate_sample",
    "profiles_from_counts",
    "run_study",
    "write_aggregate_csv",
    "write_cells_csv",
]

logger = logging.getLogger(__name__)


def _check_simplex(vec: np.ndarray, what: str) -> None:
    if np.any(vec < 0.0) or abs(float(vec.sum()) - 1.0) > 1e-12:
        raise ValueError(f"{what} must be a probability vector summing to 1, got {vec}")


@dataclass(frozen=True)
class ScenarioSpec:
    """One generative setting: true profiles, trace mixtures, sample sizes.

    Sources are ordered with the known ones first; ``known_sample_counts``
    gives the number of control samples per known source.  Control samples
    are drawn from their source's profile alone (degenerate mixing), with
    ``known_particles_per_sample`` particles each (defaults to
    ``particles_per_sample``).
    """

    catalog: ParticleCatalog
    true_profiles: np.ndarray
    trace_mixtures: tuple[tuple[float, ...], ...]
    particles_per_sample: int
    samples_per_trace: int = 5
    known_sample_counts: tuple[int, ...] = (12,)
    known_particles_per_sample: int | None = None
    replications: int = 10
    rng_seed: int = 0

    def __post_init__(self) -> None:
        profiles = np.asarray(self.true_profiles, dtype=np.float64)
        if profiles.ndim != 2 or profiles.shape[1] != self.catalog.n_types:
            raise ValueError("true_profiles must be (n_sources, n_types)")
        for row in profiles:
            _check_simplex(row, "profile row")
        object.__setattr__(self, "true_profiles", profiles)
        mixtures = tuple(tuple(float(v) for v in mix) for mix in self.trace_mixtures)
        for mix in mixtures:
            if len(mix) != profiles.shape[0]:
                raise ValueError("each trace mixture must have one share per source")
            _check_simplex(np.array(mix), "trace mixture")
        object.__setattr__(self, "trace_mixtures", mixtures)
        if len(self.known_sample_counts) > profiles.shape[0]:
            raise ValueError("more known sources than profile rows")
        if self.particles_per_sample < 1 or self.samples_per_trace < 1:
            raise ValueError("sample sizes must be at least 1")
        if any(c < 1 for c in self.known_sample_counts):
            raise ValueError("known sample counts must be at least 1")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")

    @property
    def n_sources(self) -> int:
        return self.true_profiles.shape[0]

    @property
    def n_known(self) -> int:
        return len(self.known_sample_counts)


def generate_sample(
    theta: Sequence[float],
    profiles: np.ndarray,
    n: int,
    rng: np.random.Generator,
    location_id: int = 0,
    sample_index: int = 0,
) -> SampleCounts:
    """Draw one n-particle sample: source ~ theta, type ~ that source's profile."""
    theta = np.asarray(theta, dtype=np.float64)
    profiles = np.asarray(profiles, dtype=np.float64)
    if n < 1:
        raise ValueError("a sample needs at least one particle")
    _check_simplex(theta, "theta")
    per_source = rng.multinomial(n, theta)
    counts = np.zeros(profiles.shape[1], dtype=np.int64)
    for m, n_m in enumerate(per_source):
        if n_m > 0:
            counts += rng.multinomial(int(n_m), profiles[m])
    return SampleCounts(counts=counts, location_id=location_id, sample_index=sample_index)


def generate_corpus(spec: ScenarioSpec, rng: np.random.Generator | None = None) -> Corpus:
    """Materialize one corpus from a scenario: known locations then traces."""
    rng = rng if rng is not None else np.random.default_rng(np.random.SeedSequence(spec.rng_seed))
    M = spec.n_sources
    locations: list[Location] = []
    loc_id = 0
    known_n = spec.known_particles_per_sample or spec.particles_per_sample
    for k, n_samples in enumerate(spec.known_sample_counts):
        theta = np.zeros(M)
        theta[k] = 1.0
        samples = tuple(
            generate_sample(theta, spec.true_profiles, known_n, rng,
                            location_id=loc_id, sample_index=s)
            for s in range(n_samples)
        )
        locations.append(Location(name=f"known_{k}", role=LocationRole.known(k), samples=samples))
        loc_id += 1
    for j, mixture in enumerate(spec.trace_mixtures):
        samples = tuple(
            generate_sample(mixture, spec.true_profiles, spec.particles_per_sample, rng,
                            location_id=loc_id, sample_index=s)
            for s in range(spec.samples_per_trace)
        )
        locations.append(Location(name=f"trace_{j}", role=LocationRole.trace(), samples=samples))
        loc_id += 1
    return Corpus(
        catalog=spec.catalog,
        locations=tuple(locations),
        n_unknown_sources=M - spec.n_known,
    )


def profiles_from_counts(samples: Sequence[SampleCounts]) -> np.ndarray:
    """Pooled empirical type frequencies of a set of samples."""
    if len(samples) == 0:
        raise ValueError("need at least one sample to pool")
    pooled = np.sum([s.counts for s in samples], axis=0).astype(np.float64)
    total = pooled.sum()
    if total <= 0:
        raise ValueError("pooled counts are all zero")
    return pooled / total


@dataclass(frozen=True)
class StudySpec:
    """Grid sweep around a two-source scenario with one unknown source.

    ``unknown_shares`` are the true proportions of the unknown source (the
    second profile row) in the first trace mixture; ``sample_sizes`` the
    per-sample particle counts.  ``second_trace_mixture`` adds a second
    trace location with a fixed mixing vector (the two-trace situation).
    """

    catalog: ParticleCatalog
    true_profiles: np.ndarray
    unknown_shares: tuple[float, ...]
    sample_sizes: tuple[int, ...]
    samples_per_trace: int = 5
    known_sample_counts: tuple[int, ...] = (12,)
    known_particles_per_sample: int | None = None
    second_trace_mixture: tuple[float, ...] | None = None
    replications: int = 10
    rng_seed: int = 0

    def __post_init__(self) -> None:
        profiles = np.asarray(self.true_profiles, dtype=np.float64)
        if profiles.shape[0] != 2 or len(self.known_sample_counts) != 1:
            raise ValueError("the study design uses exactly two sources, the first known")
        object.__setattr__(self, "true_profiles", profiles)
        object.__setattr__(self, "unknown_shares", tuple(float(u) for u in self.unknown_shares))
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        if not self.unknown_shares or not self.sample_sizes:
            raise ValueError("the study grid must be non-empty")
        if any(not 0.0 < u < 1.0 for u in self.unknown_shares):
            raise ValueError("unknown-source shares must lie strictly inside (0, 1)")

    def scenario(self, unknown_share: float, sample_size: int) -> ScenarioSpec:
        mixtures: list[tuple[float, ...]] = [(1.0 - unknown_share, unknown_share)]
        if self.second_trace_mixture is not None:
            mixtures.append(tuple(float(v) for v in self.second_trace_mixture))
        return ScenarioSpec(
            catalog=self.catalog,
            true_profiles=self.true_profiles,
            trace_mixtures=tuple(mixtures),
            particles_per_sample=sample_size,
            samples_per_trace=self.samples_per_trace,
            known_sample_counts=self.known_sample_counts,
            known_particles_per_sample=self.known_particles_per_sample,
            replications=self.replications,
            rng_seed=self.rng_seed,
        )

    @property
    def n_cells(self) -> int:
        return len(self.unknown_shares) * len(self.sample_sizes)


@dataclass(frozen=True)
class CellResult:
    """Outcome of one fitted replication of one grid cell."""

    unknown_share: float
    sample_size: int
    replication: int
    theta_unknown_mean: tuple[float, ...] = ()
    theta_unknown_mode: tuple[float, ...] = ()
    beta_unknown_mean: tuple[float, ...] = ()
    converged: bool = False
    iterations: int = 0
    elbo: float = float("nan")
    error: str | None = None


@dataclass(frozen=True)
class StudyResults:
    spec: StudySpec
    cells: tuple[CellResult, ...]

    def aggregate(self) -> list[dict]:
        """Per-cell averages over replications, in grid order."""
        rows: list[dict] = []
        for share in self.spec.unknown_shares:
            for size in self.spec.sample_sizes:
                reps = [
                    c for c in self.cells
                    if c.unknown_share == share and c.sample_size == size and c.error is None
                ]
                row: dict = {
                    "unknown_share": share,
                    "sample_size": size,
                    "replications": len(reps),
                    "failures": self.spec.replications - len(reps),
                }
                if reps:
                    n_traces = len(reps[0].theta_unknown_mean)
                    for j in range(n_traces):
                        means = [c.theta_unknown_mean[j] for c in reps]
                        modes = [c.theta_unknown_mode[j] for c in reps]
                        truth = share if j == 0 else self.spec.second_trace_mixture[1]
                        row[f"trace{j}_mean"] = float(np.mean(means))
                        row[f"trace{j}_mode"] = float(np.mean(modes))
                        row[f"trace{j}_abs_err"] = float(np.mean([abs(m - truth) for m in means]))
                    beta = np.mean([c.beta_unknown_mean for c in reps], axis=0)
                    for t, value in enumerate(beta):
                        row[f"beta_unknown_{t}"] = float(value)
                rows.append(row)
        return rows


def _run_cell(study: StudySpec, indices: tuple[int, int, int], config: FitConfig) -> CellResult:
    i_share, i_size, rep = indices
    share = study.unknown_shares[i_share]
    size = study.sample_sizes[i_size]
    seed = np.random.SeedSequence((study.rng_seed, i_share, i_size, rep))
    rng = np.random.default_rng(seed)
    scenario = study.scenario(share, size)
    corpus = generate_corpus(scenario, rng)
    try:
        result = fit(corpus, config)
    except Exception as exc:  # record, keep the study running
        logger.warning("cell (share=%s, n=%s, rep=%s) failed: %s", share, size, rep, exc)
        return CellResult(unknown_share=share, sample_size=size, replication=rep, error=str(exc))
    unknown_idx = corpus.n_sources - 1
    means: list[float] = []
    modes: list[float] = []
    for row in result.A_converged.values:
        summary = beta_summary(theta_marginal(row, unknown_idx))
        means.append(summary.mean)
        modes.append(summary.mean if summary.mode is None else summary.mode)
    h_row = result.H_converged.values[unknown_idx]
    beta_mean = tuple(float(v) for v in h_row / h_row.sum())
    return CellResult(
        unknown_share=share,
        sample_size=size,
        replication=rep,
        theta_unknown_mean=tuple(means),
        theta_unknown_mode=tuple(modes),
        beta_unknown_mean=beta_mean,
        converged=result.converged,
        iterations=result.iterations,
        elbo=float(result.elbo_trace[-1]),
    )


def run_study(study: StudySpec, config: FitConfig | None = None, threads: int = 1) -> StudyResults:
    """Fit every (share, size, replication) cell of the grid.

    Cell failures are recorded in their result rows rather than raised, so a
    long sweep survives isolated numerical trouble.
    """
    config = config or FitConfig()
    jobs = [
        (i_share, i_size, rep)
        for i_share in range(len(study.unknown_shares))
        for i_size in range(len(study.sample_sizes))
        for rep in range(study.replications)
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cells = list(pool.map(lambda idx: _run_cell(study, idx, config), jobs))
    else:
        cells = [_run_cell(study, idx, config) for idx in jobs]
    return StudyResults(spec=study, cells=tuple(cells))


def write_cells_csv(results: StudyResults, path: Path | str) -> None:
    n_types = results.spec.true_profiles.shape[1]
    n_traces = 2 if results.spec.second_trace_mixture is not None else 1
    header = ["unknown_share", "sample_size", "replication", "converged", "iterations", "elbo"]
    for j in range(n_traces):
        header += [f"trace{j}_mean", f"trace{j}_mode"]
    header += [f"beta_unknown_{t}" for t in range(n_types)]
    header.append("error")
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for c in results.cells:
            row: list = [repr(c.unknown_share), c.sample_size, c.replication,
                         int(c.converged), c.iterations,
                         "" if np.isnan(c.elbo) else repr(c.elbo)]
            for j in range(n_traces):
                if c.error is None:
                    row += [repr(c.theta_unknown_mean[j]), repr(c.theta_unknown_mode[j])]
                else:
                    row += ["", ""]
            if c.error is None:
                row += [repr(v) for v in c.beta_unknown_mean]
            else:
                row += [""] * n_types
            row.append(c.error or "")
            writer.writerow(row)


def write_aggregate_csv(results: StudyResults, path: Path | str) -> None:
    rows = results.aggregate()
    if not rows:
        return
    header = list(rows[0].keys())
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([
                repr(v) if isinstance(v, float) else v for v in (row.get(k, "") for k in header)
            ])
