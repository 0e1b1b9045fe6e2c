import numpy as np
import pytest

from rkhsconv import (
    Gaussian1D,
    Gaussian2D,
    Planar,
    SampleSet,
    Scalar,
    SampleValidationError,
    Translation1D,
    Translation2D,
    fit_ridge,
    load_samples_csv,
    ridge_coefficients,
)
from rkhsconv.fitting import save_samples_csv

K2 = Gaussian2D(sigma=10.0)
T2 = Translation2D()


def planar_samples(rng, n, value_scale=5.0, spread=30.0):
    pts = []
    while len(pts) < n:
        cand = (rng.uniform(-spread, spread), rng.uniform(-spread, spread))
        if all(abs(cand[0] - p[0]) + abs(cand[1] - p[1]) > 1.0 for p in pts):
            pts.append(cand)
    values = rng.uniform(0.0, value_scale, n)
    return SampleSet(tuple(Planar(*p) for p in pts), values)


class TestFitRidge:
    def test_single_sample_unregularized(self):
        samples = SampleSet((Scalar(1.5),), np.array([3.0]))
        kernel = Gaussian1D(B=0.5)
        sig = fit_ridge(samples, kernel, Translation1D(), lam=0.0)
        assert sig.n_terms == 1
        assert sig.weights[0] == pytest.approx(3.0 / kernel.eval(Scalar(1.5), Scalar(1.5)))
        assert sig.evaluate(Scalar(1.5)) == pytest.approx(3.0)

    def test_small_lambda_interpolates(self):
        rng = np.random.default_rng(0)
        samples = planar_samples(rng, 9)
        sig = fit_ridge(samples, K2, T2, lam=1e-9)
        for p, v in zip(samples.points, samples.values):
            assert sig.evaluate(p) == pytest.approx(v, rel=1e-6, abs=1e-9)

    def test_regularization_tradeoff(self):
        rng = np.random.default_rng(1)
        samples = planar_samples(rng, 9)
        gram = K2.gram(list(samples.points))
        tight = ridge_coefficients(gram, samples.values, 1e-9)
        loose = ridge_coefficients(gram, samples.values, 1e-3)
        res_tight = np.linalg.norm(gram @ tight - samples.values)
        res_loose = np.linalg.norm(gram @ loose - samples.values)
        assert res_loose > res_tight
        assert np.linalg.norm(loose) < np.linalg.norm(tight)

    def test_residual_monotone_in_lambda(self):
        rng = np.random.default_rng(2)
        samples = planar_samples(rng, 12)
        gram = K2.gram(list(samples.points))
        residuals = []
        for lam in (1e-9, 1e-6, 1e-3, 1e-1, 1.0):
            alpha = ridge_coefficients(gram, samples.values, lam)
            residuals.append(np.linalg.norm(gram @ alpha - samples.values))
        assert all(r2 >= r1 - 1e-10 for r1, r2 in zip(residuals, residuals[1:]))

    def test_pseudo_inverse_consistency_on_full_rank(self):
        rng = np.random.default_rng(3)
        samples = planar_samples(rng, 8)
        gram = K2.gram(list(samples.points))
        lam = 1e-3
        a = gram.T @ gram + lam * gram
        eigvals, eigvecs = np.linalg.eigh(0.5 * (a + a.T))
        keep = eigvals > 1e-12 * eigvals.max()
        assert keep.all()
        pinv = eigvecs @ np.diag(1.0 / eigvals) @ eigvecs.T
        np.testing.assert_allclose(pinv @ a, np.eye(len(samples)), atol=1e-8)

    def test_matches_normal_equation_oracle(self):
        # on full-rank instances the pseudo-inverse formula solves the
        # normal equations (K^T K + lam K) alpha = K f exactly
        rng = np.random.default_rng(4)
        samples = planar_samples(rng, 10)
        gram = K2.gram(list(samples.points))
        lam = 1e-3
        alpha = ridge_coefficients(gram, samples.values, lam)
        oracle = np.linalg.solve(gram.T @ gram + lam * gram, gram @ samples.values)
        np.testing.assert_allclose(alpha, oracle, atol=1e-8)

    def test_negative_lambda_rejected(self):
        samples = SampleSet((Scalar(0.0),), np.array([1.0]))
        with pytest.raises(ValueError):
            fit_ridge(samples, Gaussian1D(B=1.0), Translation1D(), lam=-1.0)


class TestSampleSet:
    def test_length_mismatch(self):
        with pytest.raises(SampleValidationError):
            SampleSet((Scalar(0.0),), np.array([1.0, 2.0]))

    def test_duplicates_rejected_with_indices(self):
        with pytest.raises(SampleValidationError) as err:
            SampleSet(
                (Scalar(0.0), Scalar(1.0), Scalar(1.0 + 1e-12)),
                np.array([1.0, 2.0, 3.0]),
            )
        assert "(1, 2)" in str(err.value)

    def test_non_finite_values_rejected(self):
        with pytest.raises(SampleValidationError):
            SampleSet((Scalar(0.0), Scalar(1.0)), np.array([1.0, np.nan]))


class TestCsv:
    def test_round_trip_2d(self, tmp_path):
        rng = np.random.default_rng(5)
        samples = planar_samples(rng, 6)
        path = tmp_path / "samples.csv"
        save_samples_csv(path, samples)
        back = load_samples_csv(path)
        assert back.points == samples.points
        np.testing.assert_array_equal(back.values, samples.values)

    def test_round_trip_1d(self, tmp_path):
        samples = SampleSet((Scalar(0.0), Scalar(2.5)), np.array([1.0, -0.5]))
        path = tmp_path / "s1.csv"
        save_samples_csv(path, samples)
        back = load_samples_csv(path)
        assert back.points == samples.points

    def test_empty_file_after_header(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("x,y,value\n")
        with pytest.raises(SampleValidationError, match="no samples"):
            load_samples_csv(path)

    def test_malformed_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,value\n1.0,2.0\noops,3.0\n")
        with pytest.raises(SampleValidationError, match=":3"):
            load_samples_csv(path)

    def test_non_finite_row_rejected(self, tmp_path):
        path = tmp_path / "inf.csv"
        path.write_text("x,value\n1.0,inf\n")
        with pytest.raises(SampleValidationError, match=":2"):
            load_samples_csv(path)

    def test_wrong_column_count(self, tmp_path):
        path = tmp_path / "cols.csv"
        path.write_text("x,y,value\n1.0,2.0\n")
        with pytest.raises(SampleValidationError, match="columns"):
            load_samples_csv(path)

    def test_unknown_header(self, tmp_path):
        path = tmp_path / "hdr.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(SampleValidationError, match="header"):
            load_samples_csv(path)
