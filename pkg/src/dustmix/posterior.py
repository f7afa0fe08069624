"""Beta posterior marginals and report assembly for a finished fit.

Every row of the converged mixing and profile matrices is a Dirichlet; the
marginal of one coordinate against the rest is a Beta whose parameters come
straight off the row.  The report collects, for each trace location and
source, and for each source and particle type, the Beta shape plus mean,
interior mode and highest-density interval, together with enough provenance
to reproduce the run.  Plot data (density curves on a 512-point grid) are
derived deterministically from the shapes at write time.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import Corpus, FitResult
from .numerics import BetaShape, CredibleInterval, beta_hpdi, beta_pdf, beta_summary

__all__ = [
    "MarginalSummary",
    "PosteriorReport",
    "beta_profile_marginal",
    "build_report",
    "density_grid",
    "report_to_dict",
    "theta_marginal",
    "write_plot_csvs",
    "write_report_json",
    "write_summary_csv",
]

GRID_POINTS = 512


def theta_marginal(a_row: np.ndarray, m: int) -> BetaShape:
    """Beta marginal of source ``m``'s share in a mixing row."""
    row = np.asarray(a_row, dtype=np.float64)
    return BetaShape(a=float(row[m]), b=float(row.sum() - row[m]))


def beta_profile_marginal(h_row: np.ndarray, t: int) -> BetaShape:
    """Beta marginal of type ``t``'s proportion in a profile row."""
    row = np.asarray(h_row, dtype=np.float64)
    return BetaShape(a=float(row[t]), b=float(row.sum() - row[t]))


@dataclass(frozen=True)
class MarginalSummary:
    label: str
    shape: BetaShape
    mean: float
    mode: float | None
    interval: CredibleInterval


@dataclass(frozen=True)
class PosteriorReport:
    """All marginal summaries of a fit plus run provenance."""

    theta: dict[str, tuple[MarginalSummary, ...]]
    beta: dict[str, tuple[MarginalSummary, ...]]
    mass: float
    provenance: dict
    sample_posteriors: dict[str, list[list[float]]] | None = None


def _summarize(label: str, shape: BetaShape, mass: float) -> MarginalSummary:
    mean, mode = beta_summary(shape)
    return MarginalSummary(
        label=label,
        shape=shape,
        mean=mean,
        mode=mode,
        interval=beta_hpdi(shape, mass),
    )


def build_report(
    fit: FitResult,
    corpus: Corpus,
    mass: float = 0.95,
    include_sample_posteriors: bool = False,
) -> PosteriorReport:
    """Assemble the marginal posterior report for a fit on ``corpus``.

    ``include_sample_posteriors`` additionally records each sample's
    row-normalized profile posterior (diagnostic only; the reported profile
    marginals come from the converged profile matrix).
    """
    source_names = corpus.source_names
    type_names = corpus.catalog.type_names

    theta: dict[str, tuple[MarginalSummary, ...]] = {}
    for row_idx, loc_idx in enumerate(fit.trace_locations):
        loc = corpus.locations[loc_idx]
        row = fit.A_converged.values[row_idx]
        theta[loc.name] = tuple(
            _summarize(source_names[m], theta_marginal(row, m), mass)
            for m in range(len(source_names))
        )

    beta: dict[str, tuple[MarginalSummary, ...]] = {}
    for m, name in enumerate(source_names):
        row = fit.H_converged.values[m]
        beta[name] = tuple(
            _summarize(type_names[t], beta_profile_marginal(row, t), mass)
            for t in range(len(type_names))
        )

    provenance = {
        "converged": fit.converged,
        "iterations": fit.iterations,
        "elbo_trace": [float(v) for v in fit.elbo_trace],
        "n_locations": corpus.n_locations,
        "n_samples": corpus.n_samples,
        "n_sources": corpus.n_sources,
        "n_types": corpus.n_types,
        "hpdi_mass": mass,
    }

    sample_posteriors = None
    if include_sample_posteriors:
        sample_posteriors = {}
        for state in fit.variational:
            loc = corpus.locations[state.location_id]
            key = f"{loc.name}/{state.sample_index}"
            normalized = state.lam / state.lam.sum(axis=1, keepdims=True)
            sample_posteriors[key] = [[float(v) for v in row] for row in normalized]

    return PosteriorReport(
        theta=theta,
        beta=beta,
        mass=mass,
        provenance=provenance,
        sample_posteriors=sample_posteriors,
    )


def density_grid(shape: BetaShape, n: int = GRID_POINTS) -> tuple[np.ndarray, np.ndarray]:
    """Beta density on an n-point midpoint grid covering [0, 1].

    Midpoints keep the curve finite when a shape parameter sits at or below
    one (density unbounded at an endpoint).
    """
    x = (np.arange(n) + 0.5) / n
    dens = np.array([beta_pdf(float(v), shape) for v in x])
    return x, dens


def _marginal_dict(summary: MarginalSummary) -> dict:
    return {
        "label": summary.label,
        "a": summary.shape.a,
        "b": summary.shape.b,
        "mean": summary.mean,
        "mode": summary.mode,
        "hpdi_lo": summary.interval.lo,
        "hpdi_hi": summary.interval.hi,
        "hpdi_mass": summary.interval.mass,
        "equal_tailed": summary.interval.equal_tailed,
    }


def report_to_dict(report: PosteriorReport) -> dict:
    out = {
        "mass": report.mass,
        "theta": {
            name: [_marginal_dict(s) for s in summaries]
            for name, summaries in report.theta.items()
        },
        "beta": {
            name: [_marginal_dict(s) for s in summaries]
            for name, summaries in report.beta.items()
        },
        "provenance": report.provenance,
    }
    if report.sample_posteriors is not None:
        out["sample_posteriors"] = report.sample_posteriors
    return out


def write_report_json(report: PosteriorReport, path: Path | str) -> None:
    payload = json.dumps(report_to_dict(report), indent=2)
    Path(path).write_text(payload + "\n")


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_").lower()


def _write_density_csv(path: Path, shape: BetaShape) -> None:
    x, dens = density_grid(shape)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "density"])
        for xi, di in zip(x, dens):
            writer.writerow([repr(float(xi)), repr(float(di))])


def write_plot_csvs(report: PosteriorReport, out_dir: Path | str) -> list[Path]:
    """One density CSV per marginal: theta_<location>_<source>.csv and
    beta_<source>_<type>.csv."""
    out = Path(out_dir)
    written: list[Path] = []
    for loc_name, summaries in report.theta.items():
        for summary in summaries:
            path = out / f"theta_{_slug(loc_name)}_{_slug(summary.label)}.csv"
            _write_density_csv(path, summary.shape)
            written.append(path)
    for source_name, summaries in report.beta.items():
        for summary in summaries:
            path = out / f"beta_{_slug(source_name)}_{_slug(summary.label)}.csv"
            _write_density_csv(path, summary.shape)
            written.append(path)
    return written


def write_summary_csv(report: PosteriorReport, path: Path | str) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["kind", "group", "label", "a", "b", "mean", "mode",
             "hpdi_lo", "hpdi_hi", "hpdi_mass", "equal_tailed"]
        )
        for kind, block in (("theta", report.theta), ("beta", report.beta)):
            for group, summaries in block.items():
                for s in summaries:
                    writer.writerow(
                        [
                            kind,
                            group,
                            s.label,
                            repr(s.shape.a),
                            repr(s.shape.b),
                            repr(s.mean),
                            "" if s.mode is None else repr(s.mode),
                            repr(s.interval.lo),
                            repr(s.interval.hi),
                            repr(s.interval.mass),
                            int(s.interval.equal_tailed),
                        ]
                    )
