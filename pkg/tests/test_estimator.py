import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prhtomo.errors import ConfigError, InsufficientStatisticsError, NumericalInvariantError
from prhtomo.estimator import (
    WeightedHistogram,
    accumulate,
    bootstrap_binned,
    bootstrap_errors,
    conditioned_pdf,
    density_from_quadratures,
    project_to_physical,
)
from prhtomo.fock import DensityMatrix, condition_oracle, squeezed_vacuum
from prhtomo.polynomials import NumberPolynomial, number_to_moment
from prhtomo.sampler import AngleSchedule, GaussianModel, RecordBatch, sample_angle, sample_records

VACUUM = GaussianModel(v_sq=1.0, v_anti=1.0, tap_power=0.1, eff_a=1.0, eff_b=1.0)
A2_MODEL = GaussianModel.from_squeezing(0.35)

N_POLY = number_to_moment(NumberPolynomial([0, 1]))


def n_weight(x_a, phi):
    return N_POLY.evaluate(x_a)


def random_batch(rng, n, theta_index=0, theta=0.0):
    return RecordBatch(
        phi=rng.uniform(0, 2 * np.pi, n),
        x_a=rng.standard_normal(n),
        x_b=rng.standard_normal(n) * 2.0,
        theta_index=theta_index,
        theta=theta,
    )


class TestAccumulate:
    def test_unit_weights_recover_counts(self):
        batch = sample_angle(VACUUM, 0.0, 20_000, seed=1)
        hist = accumulate([batch], None)
        assert hist.total_count() == 20_000
        assert np.allclose(hist.sum_w(in_range=False), hist.counts.astype(float))
        assert hist.total_sum_w() == pytest.approx(20_000.0)

    def test_vacuum_number_weights_vanish(self):
        batch = sample_angle(VACUUM, 0.0, 400_000, seed=2)
        hist = accumulate([batch], n_weight)
        w = n_weight(batch.x_a, batch.phi)
        se = np.std(w) / np.sqrt(len(batch))
        assert abs(hist.total_sum_w() / len(batch)) < 3 * se

    def test_nan_weight_aborts_with_diagnostic(self):
        batch = random_batch(np.random.default_rng(0), 100, theta_index=3)

        def bad_weight(x_a, phi):
            w = np.ones_like(x_a)
            w[7] = np.nan
            return w

        with pytest.raises(NumericalInvariantError, match="theta_index=3"):
            accumulate([batch], bad_weight)

    def test_overflow_records_counted_not_binned(self):
        batch = RecordBatch(
            phi=np.zeros(4),
            x_a=np.zeros(4),
            x_b=np.array([-9.0, 0.0, 7.99, 9.0]),
            theta_index=0,
            theta=0.0,
        )
        hist = accumulate([batch], None)
        under, over = hist.overflow_counts()
        assert under[0] == 1 and over[0] == 1
        assert hist.counts[0, 1:-1].sum() == 2
        assert hist.total_sum_w() == pytest.approx(4.0)  # totals keep all records


class TestExactMerge:
    @given(
        split=st.integers(1, 3999),
        seed=st.integers(0, 2**16),
    )
    @settings(max_examples=25, deadline=None)
    def test_merge_equals_concatenation_bitwise(self, split, seed):
        rng = np.random.default_rng(seed)
        full = random_batch(rng, 4000)
        parts = [
            RecordBatch(
                phi=full.phi[s],
                x_a=full.x_a[s],
                x_b=full.x_b[s],
                theta_index=0,
                theta=0.0,
            )
            for s in (slice(0, split), slice(split, None))
        ]
        weight = n_weight
        whole = accumulate([full], weight)
        layout = {0: 0.0}
        shards = [
            accumulate([p], weight, histogram=WeightedHistogram(layout)) for p in parts
        ]
        merged = shards[0].merge(shards[1])
        assert merged.state_digest() == whole.state_digest()
        assert np.array_equal(merged.sum_w(), whole.sum_w())

    def test_merge_commutes(self):
        rng = np.random.default_rng(11)
        layout = {0: 0.0}
        a = accumulate([random_batch(rng, 1000)], n_weight, histogram=WeightedHistogram(layout))
        b = accumulate([random_batch(rng, 1000)], n_weight, histogram=WeightedHistogram(layout))
        assert a.merge(b).state_digest() == b.merge(a).state_digest()

    def test_incompatible_layouts_rejected(self):
        a = WeightedHistogram({0: 0.0})
        b = WeightedHistogram({1: 0.3})
        with pytest.raises(ValueError):
            a.merge(b)

    def test_huge_weights_stay_exact(self):
        batch = RecordBatch(
            phi=np.zeros(3),
            x_a=np.zeros(3),
            x_b=np.zeros(3),
            theta_index=0,
            theta=0.0,
        )
        hist = WeightedHistogram({0: 0.0})
        hist.add_batch(batch, np.array([1e12, -1e12, 1.0]))
        assert hist.total_sum_w() == pytest.approx(1.0, abs=1e-6)


class TestConditionedPdf:
    def test_vacuum_matches_standard_normal(self):
        batches = sample_records(VACUUM, AngleSchedule(samples_per_angle=200_000), seed=3)
        hist = accumulate(batches, None)
        dist = conditioned_pdf(hist)
        assert np.all(np.abs(dist.integral() - 1.0) < 1e-9)
        ref = np.exp(-dist.bin_centers**2 / 2) / np.sqrt(2 * np.pi)
        counts = hist.counts[:, 1:-1]
        for t in range(len(dist.thetas)):
            sel = counts[t] >= 50  # Gaussian-error regime only
            z = (dist.density[t, sel] - ref[sel]) / dist.stderr[t, sel]
            assert np.max(np.abs(z)) < 5.0
            assert np.mean(z**2) < 1.5

    def test_conditioning_killed_ensemble_raises(self):
        # f(n) = n on exact vacuum has zero mean weight
        batches = sample_records(VACUUM, AngleSchedule(samples_per_angle=20_000), seed=4)
        hist = accumulate(batches, n_weight)
        with pytest.raises(InsufficientStatisticsError):
            conditioned_pdf(hist)

    def test_csv_export(self, tmp_path):
        batches = sample_records(VACUUM, AngleSchedule(samples_per_angle=5_000), seed=5)
        dist = conditioned_pdf(accumulate(batches, None))
        path = tmp_path / "pdf.csv"
        dist.to_csv(path, extra_header=["config_sha256=deadbeef"])
        lines = path.read_text().splitlines()
        assert lines[0] == "# config_sha256=deadbeef"
        assert lines[1] == "angle_deg,bin_center,density,stderr"


class TestDensityFromQuadratures:
    def test_unweighted_vacuum(self):
        batches = sample_records(VACUUM, AngleSchedule(samples_per_angle=100_000), seed=6)
        est = density_from_quadratures(batches, None, 5)
        assert est.matrix[0, 0].real == pytest.approx(1.0, abs=0.01)
        assert np.max(np.abs(est.matrix - np.diag(np.diag(est.matrix)))) < 0.02

    def test_unweighted_squeezed_two_photon_coherence(self):
        model = GaussianModel.from_squeezing(0.3)
        # no tap loss on b beyond the 10% reflection; oracle is the reduced state
        batches = sample_records(model, AngleSchedule(samples_per_angle=200_000), seed=7)
        est = density_from_quadratures(batches, None, 6)
        from conftest import make_lossy_tap_state

        oracle = make_lossy_tap_state(0.3, 0.10, 0.98, 0.98).reduced_b()
        ref = oracle.matrix[:7, :7]
        assert est.matrix[0, 2] == pytest.approx(ref[0, 2], abs=5 * est.stderr_re[0, 2])
        assert est.matrix[0, 0].real == pytest.approx(ref[0, 0].real, abs=0.01)

    def test_pattern_weight_concentrates_odd_populations(self, pattern_table):
        batches = sample_records(A2_MODEL, AngleSchedule(samples_per_angle=200_000), seed=8)

        def f11_weight(x_a, phi):
            return pattern_table.evaluate(1, 1, x_a)

        est = density_from_quadratures(batches, f11_weight, 6)
        rho = project_to_physical(est)
        pops = rho.populations()
        assert pops[1] > 0.5
        assert pops[1] + pops[3] > 3 * (pops[0] + pops[2] + pops[4])

    def test_angle_coverage_guard(self):
        batches = sample_records(VACUUM, AngleSchedule(samples_per_angle=2_000), seed=9)
        with pytest.raises(ConfigError):
            density_from_quadratures(batches, None, 12)
        with pytest.warns(UserWarning):
            density_from_quadratures(batches, None, 11)

    def test_stderr_scale_is_sane(self):
        batches = sample_records(VACUUM, AngleSchedule(samples_per_angle=50_000), seed=10)
        est = density_from_quadratures(batches, None, 4)
        n = est.n_records
        assert 0.1 / np.sqrt(n) < est.stderr_re[0, 0] < 30.0 / np.sqrt(n)


class TestProjectToPhysical:
    def test_physical_input_unchanged(self):
        rho = squeezed_vacuum(0.3, 16).to_density()
        out = project_to_physical(rho)
        assert np.max(np.abs(out.matrix - rho.matrix)) < 1e-10

    def test_two_level_water_filling(self):
        out = project_to_physical(np.diag([1.1, -0.1]))
        assert np.allclose(np.diag(out.matrix).real, [1.0, 0.0], atol=1e-12)

    def test_postconditions(self):
        rng = np.random.default_rng(12)
        m = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        out = project_to_physical(0.5 * (m + m.conj().T))
        ev = np.linalg.eigvalsh(out.matrix)
        assert ev.min() > -1e-12
        assert out.trace() == pytest.approx(1.0, abs=1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(13)
        m = rng.standard_normal((6, 6))
        once = project_to_physical(0.5 * (m + m.T))
        twice = project_to_physical(once)
        assert np.max(np.abs(twice.matrix - once.matrix)) < 1e-12

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_matches_brute_force_simplex_projection(self, seed):
        rng = np.random.default_rng(seed)
        evals = rng.uniform(-1.0, 1.5, 5)
        out = project_to_physical(np.diag(evals).astype(complex))
        got = np.sort(np.diag(out.matrix).real)
        # brute force: scan the water level over candidate supports
        best = None
        srt = np.sort(evals)[::-1]
        for k in range(1, 6):
            level = (np.sum(srt[:k]) - 1.0) / k
            cand = np.clip(evals - level, 0.0, None)
            if abs(cand.sum() - 1.0) < 1e-12:
                dist = np.sum((cand - evals) ** 2)
                if best is None or dist < best[0]:
                    best = (dist, cand)
        assert np.allclose(got, np.sort(best[1]), atol=1e-10)


class TestBootstrap:
    def test_vacuum_variance_error_matches_normal_theory(self):
        n = 20_000
        batches = [sample_angle(VACUUM, 0.0, n, seed=20)]

        def pipeline(bs):
            return {"var": float(np.var(bs[0].x_b))}

        errs = bootstrap_errors(batches, pipeline, 120, seed=1)
        assert errs["var"] == pytest.approx(np.sqrt(2.0 / n), rel=0.2)

    def test_error_shrinks_with_sample_size(self):
        def pipeline(bs):
            return {"var": float(np.var(bs[0].x_b))}

        e_small = bootstrap_errors([sample_angle(VACUUM, 0.0, 10_000, seed=21)], pipeline, 120, seed=2)
        e_big = bootstrap_errors([sample_angle(VACUUM, 0.0, 20_000, seed=22)], pipeline, 120, seed=3)
        assert e_big["var"] * np.sqrt(2.0) == pytest.approx(e_small["var"], rel=0.25)

    def test_higher_degree_weights_are_noisier(self):
        # k=1, j_max=3 conditioning vs plain number weighting at equal N
        from prhtomo.polynomials import subtraction_polynomial

        deep = number_to_moment(subtraction_polynomial(1, 3))
        batches = sample_records(A2_MODEL, AngleSchedule(samples_per_angle=20_000), seed=23)

        def make_pipeline(mp):
            def pipeline(bs):
                total = sum(float(np.sum(mp.evaluate(b.x_a))) for b in bs)
                count = sum(len(b) for b in bs)
                return {"mean_weight": total / count}

            return pipeline

        e_deep = bootstrap_errors(batches, make_pipeline(deep), 60, seed=4)
        e_plain = bootstrap_errors(batches, make_pipeline(N_POLY), 60, seed=5)
        assert e_deep["mean_weight"] > e_plain["mean_weight"]

    def test_requires_minimum_resamples(self):
        with pytest.raises(ValueError):
            bootstrap_errors([], lambda b: {}, 10)

    def test_binned_bootstrap_agrees_with_record_bootstrap(self):
        n = 30_000
        batch = sample_angle(VACUUM, 0.0, n, seed=24)
        w = n_weight(batch.x_a, batch.phi)
        edges = np.linspace(-8, 8, 402)
        idx = np.digitize(batch.x_b, edges)

        def finalize(rows):
            return {"total": float(rows.sum())}

        e_binned = bootstrap_binned([(idx, w, 403)], finalize, 200, seed=6)

        def pipeline(bs):
            return {"total": float(np.sum(n_weight(bs[0].x_a, bs[0].phi)))}

        e_rec = bootstrap_errors([batch], pipeline, 200, seed=7)
        assert e_binned["total"] == pytest.approx(e_rec["total"], rel=0.25)


class TestOracleEquivalence:
    """Conditioned pdf pipeline vs brute-force Fock oracle (small scale)."""

    @pytest.mark.parametrize("kind", ["number", "one_minus_two"])
    def test_diagonal_polynomial_matches_oracle(self, kind, reference_mixture):
        nv = np.arange(31, dtype=float)
        if kind == "number":
            poly = NumberPolynomial([0, 1])
            fvec = nv
        else:
            poly = NumberPolynomial([0, -2, 1])
            fvec = nv * (nv - 2)
        moments = number_to_moment(poly)
        batches = sample_records(A2_MODEL, AngleSchedule(samples_per_angle=300_000), seed=30)
        hist = accumulate(batches, lambda x, p: moments.evaluate(x))
        dist = conditioned_pdf(hist)
        raw, norm = condition_oracle_with_loss(reference_mixture, fvec)
        counts = hist.counts[:, 1:-1]
        for t, theta in enumerate(dist.thetas):
            from prhtomo.fock import quadrature_pdf

            ref = quadrature_pdf(raw.matrix / norm, theta, dist.bin_centers)
            sel = counts[t] >= 100
            z = (dist.density[t, sel] - ref[sel]) / dist.stderr[t, sel]
            # per-bin agreement within generous bands at this sample size
            assert np.mean(z**2) < 1.5


def condition_oracle_with_loss(mixture, fvec):
    return condition_oracle(mixture, fvec)
