import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from dustmix.model import ParticleCatalog, SampleCounts
from dustmix.simulator import (
    ScenarioSpec,
    StudySpec,
    generate_corpus,
    generate_sample,
    profiles_from_counts,
    run_study,
    write_aggregate_csv,
    write_cells_csv,
)
from dustmix.vbi import FitConfig


@pytest.fixture(scope="module")
def catalog():
    return ParticleCatalog(tuple(f"t{i}" for i in range(4)))


PROFILES = np.array([
    [0.70, 0.20, 0.05, 0.05],
    [0.05, 0.10, 0.25, 0.60],
])


class TestGenerateSample:
    def test_total_preserved(self):
        rng = np.random.default_rng(0)
        for n in (1, 17, 500):
            sample = generate_sample([0.3, 0.7], PROFILES, n, rng)
            assert sample.total == n

    def test_degenerate_mixture_uses_single_profile(self):
        rng = np.random.default_rng(1)
        sample = generate_sample([1.0, 0.0], PROFILES, 200000, rng)
        freq = sample.counts / sample.total
        se = np.sqrt(PROFILES[0] * (1 - PROFILES[0]) / 200000)
        assert np.all(np.abs(freq - PROFILES[0]) <= 3.5 * se + 1e-9)

    def test_one_hot_profile_yields_one_type(self):
        rng = np.random.default_rng(2)
        profiles = np.array([[0.0, 1.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
        sample = generate_sample([0.4, 0.6], profiles, 100, rng)
        assert sample.counts[1] == 100

    def test_mixture_frequencies_match_blend(self):
        rng = np.random.default_rng(3)
        theta = np.array([0.9, 0.1])
        expected = theta @ PROFILES
        sample = generate_sample(theta, PROFILES, 100000, rng)
        freq = sample.counts / sample.total
        se = np.sqrt(expected * (1 - expected) / 100000)
        assert np.all(np.abs(freq - expected) <= 3.0 * se)

    def test_invalid_inputs(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ValueError):
            generate_sample([0.5, 0.6], PROFILES, 10, rng)
        with pytest.raises(ValueError):
            generate_sample([0.5, 0.5], PROFILES, 0, rng)

    def test_goodness_of_fit_across_seeds(self):
        # aggregate chi-square over independent seeds stays unremarkable
        theta = np.array([0.6, 0.4])
        expected = theta @ PROFILES
        n = 10000
        rejections = 0
        for seed in range(100):
            rng = np.random.default_rng(np.random.SeedSequence((99, seed)))
            sample = generate_sample(theta, PROFILES, n, rng)
            stat, pvalue = stats.chisquare(sample.counts, expected * n)
            rejections += pvalue < 0.001
        assert rejections <= 2


class TestProfilesFromCounts:
    def test_bundled_control_pool(self, corpus_both_known):
        at_samples = corpus_both_known.locations[0].samples
        profile = profiles_from_counts(at_samples)
        assert profile.argmax() == 0
        assert profile[0] == pytest.approx(2315.0 / 4150.0, rel=1e-12)

    def test_single_sample_one_hot(self):
        sample = SampleCounts(np.array([0, 0, 0, 5]))
        assert_allclose(profiles_from_counts([sample]), [0, 0, 0, 1.0])

    def test_duplicates_do_not_change_pool(self):
        sample = SampleCounts(np.array([2, 1, 1, 0]))
        one = profiles_from_counts([sample])
        two = profiles_from_counts([sample, sample])
        assert_allclose(one, two)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            profiles_from_counts([])


class TestScenario:
    def test_corpus_layout(self, catalog):
        spec = ScenarioSpec(
            catalog=catalog,
            true_profiles=PROFILES,
            trace_mixtures=((0.5, 0.5), (0.51, 0.49)),
            particles_per_sample=50,
            samples_per_trace=3,
            known_sample_counts=(4,),
        )
        corpus = generate_corpus(spec)
        assert corpus.n_locations == 3
        assert corpus.n_unknown_sources == 1
        assert [len(l.samples) for l in corpus.locations] == [4, 3, 3]
        assert corpus.locations[0].role.is_known
        assert all(s.total == 50 for l in corpus.locations for s in l.samples)

    def test_known_sample_size_override(self, catalog):
        spec = ScenarioSpec(
            catalog=catalog,
            true_profiles=PROFILES,
            trace_mixtures=((0.5, 0.5),),
            particles_per_sample=50,
            known_sample_counts=(2,),
            known_particles_per_sample=200,
        )
        corpus = generate_corpus(spec)
        assert all(s.total == 200 for s in corpus.locations[0].samples)
        assert all(s.total == 50 for s in corpus.locations[1].samples)

    def test_validation(self, catalog):
        with pytest.raises(ValueError):
            ScenarioSpec(catalog=catalog, true_profiles=PROFILES,
                         trace_mixtures=((0.5, 0.4),), particles_per_sample=10)
        with pytest.raises(ValueError):
            ScenarioSpec(catalog=catalog, true_profiles=np.array([[0.5, 0.5]]),
                         trace_mixtures=((1.0,),), particles_per_sample=10)


class TestStudy:
    def _study(self, catalog, **kwargs):
        defaults = dict(
            catalog=catalog,
            true_profiles=PROFILES,
            unknown_shares=(0.3, 0.7),
            sample_sizes=(40, 80),
            samples_per_trace=2,
            known_sample_counts=(3,),
            replications=2,
            rng_seed=0,
        )
        defaults.update(kwargs)
        return StudySpec(**defaults)

    def test_grid_is_exhaustive(self, catalog):
        study = self._study(catalog)
        results = run_study(study, FitConfig(outer_max_iters=15))
        assert len(results.cells) == 2 * 2 * 2
        seen = {(c.unknown_share, c.sample_size, c.replication) for c in results.cells}
        assert len(seen) == 8

    def test_second_trace_mixture(self, catalog):
        study = self._study(catalog, second_trace_mixture=(0.51, 0.49),
                            unknown_shares=(0.3,), sample_sizes=(40,), replications=1)
        scenario = study.scenario(0.3, 40)
        assert scenario.trace_mixtures == ((0.7, 0.3), (0.51, 0.49))
        results = run_study(study, FitConfig(outer_max_iters=15))
        assert len(results.cells[0].theta_unknown_mean) == 2

    def test_deterministic_given_seed(self, catalog):
        study = self._study(catalog, unknown_shares=(0.3,), sample_sizes=(40,), replications=1)
        first = run_study(study, FitConfig(outer_max_iters=15))
        second = run_study(study, FitConfig(outer_max_iters=15))
        assert first.cells == second.cells

    def test_seed_changes_results(self, catalog):
        base = self._study(catalog, unknown_shares=(0.3,), sample_sizes=(40,), replications=1)
        other = self._study(catalog, unknown_shares=(0.3,), sample_sizes=(40,),
                            replications=1, rng_seed=1)
        assert run_study(base, FitConfig(outer_max_iters=15)).cells != run_study(
            other, FitConfig(outer_max_iters=15)
        ).cells

    def test_threaded_matches_serial(self, catalog):
        study = self._study(catalog)
        serial = run_study(study, FitConfig(outer_max_iters=15), threads=1)
        threaded = run_study(study, FitConfig(outer_max_iters=15), threads=4)
        assert serial.cells == threaded.cells

    def test_aggregate_and_csvs(self, catalog, tmp_path):
        study = self._study(catalog)
        results = run_study(study, FitConfig(outer_max_iters=15))
        rows = results.aggregate()
        assert len(rows) == 4
        assert {(r["unknown_share"], r["sample_size"]) for r in rows} == {
            (0.3, 40), (0.3, 80), (0.7, 40), (0.7, 80),
        }
        write_cells_csv(results, tmp_path / "cells.csv")
        write_aggregate_csv(results, tmp_path / "agg.csv")
        cells_lines = (tmp_path / "cells.csv").read_text().splitlines()
        assert len(cells_lines) == 1 + 8
        agg_lines = (tmp_path / "agg.csv").read_text().splitlines()
        assert len(agg_lines) == 1 + 4

    def test_grid_validation(self, catalog):
        with pytest.raises(ValueError):
            self._study(catalog, unknown_shares=())
        with pytest.raises(ValueError):
            self._study(catalog, unknown_shares=(0.0, 0.5))
