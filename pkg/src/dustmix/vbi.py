"""Variational EM engine: coordinate-ascent inference plus hyperparameter updates.

The generative story draws the profile matrix B once for the whole corpus,
so the corpus-level fit keeps a single shared Dirichlet posterior over each
profile row (the ``lam`` matrix), accumulating type counts from every
sample, while mixing posteriors (``gamma``) and responsibilities (``phi``)
stay per sample.  One inference sweep updates every sample's
responsibilities and mixing posterior against the current profile posterior,
then refreshes the profile posterior from all samples; each update is the
exact coordinate maximizer of the bound given the rest, so the bound is
non-decreasing sweep over sweep.  The outer loop alternates inference
phases with box-constrained updates of the profile hyperparameters and the
trace rows of the mixing hyperparameters, warm-starting every phase from
the previous state, which keeps the bound monotone across phases too.

:func:`estep_sample` exposes the single-sample special case (a sample that
owns its profile posterior outright); on a one-sample corpus it coincides
exactly with the corpus-level sweep.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .model import (
    Corpus,
    CorpusValidationError,
    DirichletMatrix,
    FitResult,
    SampleCounts,
    VariationalState,
    validate_corpus,
)
from .mstep import BoxBounds, OptimizerConfig, mstep
from .numerics import digamma, log_gamma

__all__ = [
    "FitConfig",
    "NumericalFailure",
    "corpus_elbo",
    "elbo_sample",
    "elbo_terms",
    "estep_sample",
    "fit",
    "initialize",
]

logger = logging.getLogger(__name__)


class NumericalFailure(RuntimeError):
    """A bound term or update became non-finite.

    ``term`` names the offending bound term, ``iteration`` the coordinate
    sweep during which it appeared (when raised from a sweep loop).
    """

    def __init__(self, message: str, term: str | None = None, iteration: int | None = None):
        super().__init__(message)
        self.term = term
        self.iteration = iteration


@dataclass(frozen=True)
class FitConfig:
    """Engine settings.

    ``known_weight``/``flat_weight`` build the initial mixing rows: a known
    location gets ``known_weight`` in its own source column and
    ``flat_weight`` elsewhere; trace rows start flat.
    ``scale_updates_by_count`` divides the gamma/lambda updates of
    :func:`estep_sample` by the sample's particle count; it exists only for
    side-by-side study of that variant and breaks the monotone-bound
    guarantee, so it stays off by default.
    """

    known_weight: float = 150.0
    flat_weight: float = 1.0
    estep_tol: float = 1e-8
    estep_max_iters: int = 500
    outer_tol: float = 1e-6
    outer_max_iters: int = 100
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    bounds: BoxBounds = field(default_factory=BoxBounds)
    scale_updates_by_count: bool = False
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for name in ("known_weight", "flat_weight", "estep_tol", "outer_tol"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        for name in ("estep_max_iters", "outer_max_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


def initialize(
    corpus: Corpus, config: FitConfig
) -> tuple[DirichletMatrix, DirichletMatrix, list[VariationalState]]:
    """Build the starting hyperparameter matrices and per-sample states.

    Profiles start flat (all ones).  The mixing matrix pins each known
    location to its source via ``known_weight``; trace rows start flat.
    Each sample's gamma starts at its location's mixing row plus
    total_count / (n_sources * total_samples); responsibilities start
    uniform and the profile posterior starts at the profile matrix itself.
    """
    violations = validate_corpus(corpus)
    if violations:
        raise CorpusValidationError(violations)

    M, T, L = corpus.n_sources, corpus.n_types, corpus.n_locations
    H = DirichletMatrix(np.ones((M, T)), role="H")

    a = np.full((L, M), config.flat_weight, dtype=np.float64)
    for i, loc in enumerate(corpus.locations):
        if loc.role.is_known:
            a[i, loc.role.source_index] = config.known_weight
    A = DirichletMatrix(a, role="A")

    total_samples = corpus.n_samples
    states: list[VariationalState] = []
    for loc_id, sample in corpus.iter_samples():
        gamma = a[loc_id] + sample.total / (M * total_samples)
        state = VariationalState(
            location_id=loc_id,
            sample_index=sample.sample_index,
            gamma=gamma,
            lam=np.array(H.values, dtype=np.float64),
            phi=np.full((T, M), 1.0 / M),
        )
        state.elbo = elbo_sample(sample, a[loc_id], H, state)
        states.append(state)
    return H, A, states


def _digamma_diff(rows: np.ndarray) -> np.ndarray:
    """digamma(row) - digamma(row sum), row-wise for a matrix."""
    return digamma(rows) - digamma(rows.sum(axis=1))[:, None]


def _sample_terms(
    c: np.ndarray,
    alpha: np.ndarray,
    gamma: np.ndarray,
    phi: np.ndarray,
    dg_lam: np.ndarray,
) -> dict[str, float]:
    """The five per-sample bound terms given the profile digamma block."""
    dg_gamma = digamma(gamma) - digamma(gamma.sum())
    weighted_phi = phi * c[:, None]
    log_phi = np.where(phi > 0.0, np.log(np.where(phi > 0.0, phi, 1.0)), 0.0)
    return {
        "log_p_x": float((weighted_phi.T * dg_lam).sum()),
        "log_p_theta": float(
            log_gamma(alpha.sum()) - log_gamma(alpha).sum() + (alpha - 1.0) @ dg_gamma
        ),
        "log_p_z": float(weighted_phi.sum(axis=0) @ dg_gamma),
        "entropy_theta": float(
            -log_gamma(gamma.sum()) + log_gamma(gamma).sum() - (gamma - 1.0) @ dg_gamma
        ),
        "entropy_z": float(-(weighted_phi * log_phi).sum()),
    }


def _profile_terms(eta: np.ndarray, lam: np.ndarray, dg_lam: np.ndarray) -> dict[str, float]:
    """Bound terms of the profile block: prior expectation and entropy."""
    return {
        "log_p_beta": float(
            (
                log_gamma(eta.sum(axis=1))
                - log_gamma(eta).sum(axis=1)
                + ((eta - 1.0) * dg_lam).sum(axis=1)
            ).sum()
        ),
        "entropy_beta": float(
            (
                -log_gamma(lam.sum(axis=1))
                + log_gamma(lam).sum(axis=1)
                - ((lam - 1.0) * dg_lam).sum(axis=1)
            ).sum()
        ),
    }


def elbo_terms(
    counts: SampleCounts,
    alpha_row: np.ndarray,
    H: DirichletMatrix,
    state: VariationalState,
) -> dict[str, float]:
    """The seven bound terms for one sample, keyed by their standard names."""
    c = counts.counts.astype(np.float64)
    alpha = np.asarray(alpha_row, dtype=np.float64)
    dg_lam = _digamma_diff(state.lam)
    terms = _sample_terms(c, alpha, state.gamma, state.phi, dg_lam)
    terms.update(_profile_terms(H.values, state.lam, dg_lam))
    return terms


def _check_terms(terms: dict[str, float]) -> float:
    for name, value in terms.items():
        if not np.isfinite(value):
            raise NumericalFailure(f"bound term {name} is non-finite ({value})", term=name)
    return float(sum(terms.values()))


def elbo_sample(
    counts: SampleCounts,
    alpha_row: np.ndarray,
    H: DirichletMatrix,
    state: VariationalState,
) -> float:
    """Per-sample evidence lower bound; raises naming any non-finite term."""
    return _check_terms(elbo_terms(counts, alpha_row, H, state))


def corpus_elbo(
    corpus: Corpus,
    A: DirichletMatrix,
    H: DirichletMatrix,
    states: list[VariationalState],
    lam: np.ndarray,
) -> float:
    """Corpus-wide bound under the shared profile posterior ``lam``."""
    dg_lam = _digamma_diff(lam)
    total = 0.0
    a = A.values
    for state, (loc_id, sample) in zip(states, corpus.iter_samples()):
        terms = _sample_terms(
            sample.counts.astype(np.float64), a[loc_id], state.gamma, state.phi, dg_lam
        )
        total += _check_terms(terms)
    total += _check_terms(_profile_terms(H.values, lam, dg_lam))
    return total


def _phi_update(dg_lam_t: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Responsibility rows from the profile digamma block (types x sources)
    and the mixing digammas, normalized per type in log space."""
    log_phi = dg_lam_t + digamma(gamma)[None, :]
    log_phi -= log_phi.max(axis=1, keepdims=True)
    phi = np.exp(log_phi)
    phi /= phi.sum(axis=1, keepdims=True)
    return phi


def estep_sample(
    counts: SampleCounts,
    alpha_row: np.ndarray,
    H: DirichletMatrix,
    state: VariationalState,
    config: FitConfig,
) -> VariationalState:
    """Coordinate-ascent sweeps for one sample that owns its profile posterior.

    Updates, per sweep: responsibilities from the current profile and mixing
    posteriors, then gamma and lambda from the new responsibilities
    (``lam = eta + count * phi``).  Stops when the relative bound change
    drops below ``config.estep_tol`` or after ``estep_max_iters``.  This is
    the corpus-level inference specialized to a one-sample corpus.
    """
    c = counts.counts.astype(np.float64)
    alpha = np.asarray(alpha_row, dtype=np.float64)
    eta = H.values
    gamma, lam = state.gamma, state.lam
    n_total = float(counts.total)

    previous = state.elbo if np.isfinite(state.elbo) else elbo_sample(counts, alpha, H, state)
    state.elbo_steps = []
    for sweep in range(1, config.estep_max_iters + 1):
        phi = _phi_update(_digamma_diff(lam).T, gamma)
        gamma = alpha + phi.T @ c
        lam = eta + (phi * c[:, None]).T
        if config.scale_updates_by_count:
            gamma = gamma / n_total
            lam = lam / n_total

        state.gamma, state.lam, state.phi = gamma, lam, phi
        try:
            current = elbo_sample(counts, alpha, H, state)
        except NumericalFailure as exc:
            raise NumericalFailure(
                f"sweep {sweep} at location {state.location_id}, sample "
                f"{state.sample_index}: {exc}",
                term=exc.term,
                iteration=sweep,
            ) from exc
        state.elbo = current
        state.elbo_steps.append(current)
        if abs(current - previous) <= config.estep_tol * max(abs(previous), 1e-12):
            break
        previous = current
    return state


_WARM_SWEEPS = 50
_WARM_PASSES = 3


def _bootstrap_unknown_row(
    corpus: Corpus, lam: np.ndarray, trace_ids: list[int]
) -> np.ndarray | None:
    """Residual-shaped starting row for a single unknown source's profile.

    Pooled trace counts are decomposed against the known profiles at the
    parsimony corner (knowns take the largest mixing weights that leave a
    non-negative residual); the residual, scaled to the trace mass it
    explains, seeds the unknown profile row.  Returns ``None`` when the
    corpus has no unknown source, no known source, or no trace samples.
    """
    M = corpus.n_sources
    n_known = corpus.n_known_sources
    if corpus.n_unknown_sources != 1 or n_known == 0 or not trace_ids:
        return None
    pooled = np.zeros(corpus.n_types)
    for loc_id in trace_ids:
        for sample in corpus.locations[loc_id].samples:
            pooled += sample.counts
    total = pooled.sum()
    if total <= 0:
        return None
    p_hat = pooled / total
    known = lam[:n_known] / lam[:n_known].sum(axis=1, keepdims=True)
    weights = np.zeros(n_known)
    for _ in range(50):
        prev = weights.copy()
        for k in range(n_known):
            residual = p_hat - (weights @ known - weights[k] * known[k])
            ratios = residual[known[k] > 0] / known[k][known[k] > 0]
            weights[k] = max(0.0, float(ratios.min()))
        if np.abs(weights - prev).max() < 1e-12:
            break
    unknown_share = float(np.clip(1.0 - weights.sum(), 0.02, 0.98))
    residual = np.maximum(p_hat - weights @ known, 1e-8)
    residual /= residual.sum()
    return 1.0 + total * unknown_share * residual


def _warm_start_profiles(
    corpus: Corpus,
    A: DirichletMatrix,
    H: DirichletMatrix,
    states: list[VariationalState],
) -> np.ndarray:
    """Stage the starting point: known samples shape the profile posterior
    before any trace sample commits its responsibilities.

    Starting the joint ascent from flat profiles lets an unidentified
    source lock onto a trace's own blend and absorb it wholesale, which is
    a measurably worse optimum; settling the pinned single-source samples
    first, then the trace responsibilities against that frozen posterior,
    starts the ascent inside the right basin.  This only picks the starting
    point; the recorded bound sequence begins afterwards.
    """
    a = A.values
    samples = list(corpus.iter_samples())
    counts = [sample.counts.astype(np.float64) for _, sample in samples]
    known = [i for i, (lid, _) in enumerate(samples) if corpus.locations[lid].role.is_known]
    trace = [i for i in range(len(samples)) if i not in set(known)]

    lam = np.array(H.values, dtype=np.float64)
    for _ in range(_WARM_SWEEPS):
        dg_lam_t = _digamma_diff(lam).T
        acc = np.zeros_like(lam)
        for i in known:
            state = states[i]
            loc_id = samples[i][0]
            state.phi = _phi_update(dg_lam_t, state.gamma)
            state.gamma = a[loc_id] + state.phi.T @ counts[i]
            acc += (state.phi * counts[i][:, None]).T
        new_lam = H.values + acc
        if np.allclose(new_lam, lam, rtol=1e-10, atol=1e-12):
            lam = new_lam
            break
        lam = new_lam

    trace_locations = sorted({samples[i][0] for i in trace})
    boot = _bootstrap_unknown_row(corpus, lam, trace_locations)
    if boot is not None:
        lam = lam.copy()
        lam[-1] = boot

    for _ in range(_WARM_PASSES):
        dg_lam_t = _digamma_diff(lam).T
        for _ in range(_WARM_SWEEPS):
            moved = 0.0
            for i in trace:
                state = states[i]
                loc_id = samples[i][0]
                new_phi = _phi_update(dg_lam_t, state.gamma)
                moved = max(moved, float(np.abs(new_phi - state.phi).max()))
                state.phi = new_phi
                state.gamma = a[loc_id] + state.phi.T @ counts[i]
            if moved < 1e-10 or not trace:
                break
        acc = np.zeros_like(lam)
        for i in range(len(samples)):
            acc += (states[i].phi * counts[i][:, None]).T
        lam = H.values + acc
    return lam


def _inference_phase(
    corpus: Corpus,
    A: DirichletMatrix,
    H: DirichletMatrix,
    states: list[VariationalState],
    lam: np.ndarray,
    config: FitConfig,
) -> tuple[np.ndarray, float, int]:
    """One full inference phase: sweep all samples and the shared profile
    posterior until the corpus bound stabilizes."""
    samples = list(corpus.iter_samples())
    counts = [sample.counts.astype(np.float64) for _, sample in samples]
    a = A.values
    eta = H.values

    previous = corpus_elbo(corpus, A, H, states, lam)
    current = previous
    sweeps = 0
    for sweep in range(1, config.estep_max_iters + 1):
        sweeps = sweep
        dg_lam_t = _digamma_diff(lam).T
        acc = np.zeros_like(lam)
        for state, (loc_id, _), c in zip(states, samples, counts):
            phi = _phi_update(dg_lam_t, state.gamma)
            state.phi = phi
            state.gamma = a[loc_id] + phi.T @ c
            acc += (phi * c[:, None]).T
        lam = eta + acc
        try:
            current = corpus_elbo(corpus, A, H, states, lam)
        except NumericalFailure as exc:
            raise NumericalFailure(
                f"inference sweep {sweep}: {exc}", term=exc.term, iteration=sweep
            ) from exc
        if abs(current - previous) <= config.estep_tol * max(abs(previous), 1e-12):
            break
        previous = current
    return lam, current, sweeps


def fit(corpus: Corpus, config: FitConfig | None = None) -> FitResult:
    """Alternate inference phases and hyperparameter updates to convergence.

    Convergence is declared when the relative change of the corpus bound
    between consecutive inference phases drops below ``config.outer_tol``;
    hitting ``outer_max_iters`` first yields a result with
    ``converged=False`` rather than an error.
    """
    config = config or FitConfig()
    H, A, states = initialize(corpus, config)
    lam = _warm_start_profiles(corpus, A, H, states)

    elbo_trace: list[float] = []
    converged = False
    previous_total = None
    iterations = 0
    for outer in range(1, config.outer_max_iters + 1):
        iterations = outer
        lam, total, sweeps = _inference_phase(corpus, A, H, states, lam, config)
        elbo_trace.append(total)
        logger.debug("outer %d: bound %.6f after %d sweeps", outer, total, sweeps)
        if previous_total is not None and abs(total - previous_total) <= config.outer_tol * max(
            abs(previous_total), 1e-12
        ):
            converged = True
            break
        previous_total = total
        if outer < config.outer_max_iters:
            for state in states:
                state.lam = lam
            H, A = mstep(H, A, states, corpus, config.bounds, config.optimizer)

    a = A.values
    for state, (loc_id, sample) in zip(states, corpus.iter_samples()):
        state.lam = lam.copy()
        state.elbo = elbo_sample(sample, a[loc_id], H, state)

    trace_ids = corpus.trace_location_ids
    a_trace = a[list(trace_ids)] if trace_ids else np.ones((0, corpus.n_sources))
    return FitResult(
        H_converged=H,
        A_converged=DirichletMatrix(a_trace, role="A"),
        trace_locations=trace_ids,
        variational=tuple(states),
        elbo_trace=tuple(elbo_trace),
        converged=converged,
        iterations=iterations,
    )
