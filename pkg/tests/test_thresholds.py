import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset
from covpot.errors import CalibrationError, EmptyExceedanceError, FitError
from covpot.ingest import Dataset
from covpot.thresholds import (INTERCEPT_ONLY, LINEAR, Basis, Method, ThresholdModel,
                               calibrate_p_for_k, constant_threshold, exceedances,
                               expectile_check, expectile_stationarity, fit_expectile_regression,
                               fit_quantile_regression, fit_threshold, quantile_check)
from oracles import (asym_sq_loss, brute_force_regression, check_loss, golden_min,
                     qr_vertex_enumeration)


def const_data(y):
    y = np.asarray(y, float)
    return Dataset(np.linspace(0, 1, y.size), y)


def objective(loss, data, model, p):
    return float(np.sum(loss(data.y - model(data.x), p)))


# -- check functions ---------------------------------------------------------

class TestCheckFunctions:
    def test_quantile_examples(self):
        assert quantile_check(-2.0, 0.5) == 1.0
        assert quantile_check(3.0, 0.9) == pytest.approx(2.7)
        assert quantile_check(0.0, 0.3) == 0.0

    def test_expectile_examples(self):
        assert expectile_check(-2.0, 0.5) == 2.0
        assert expectile_check(3.0, 0.9) == pytest.approx(8.1)
        assert expectile_check(0.0, 0.3) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(tau=st.floats(-1e6, 1e6), p=st.floats(0.001, 0.999))
    def test_relation(self, tau, p):
        assert expectile_check(tau, p) == pytest.approx(abs(tau) * quantile_check(tau, p), rel=1e-12)

    @pytest.mark.parametrize("p", [0.05, 0.3, 0.5, 0.9])
    @pytest.mark.parametrize("check", [quantile_check, expectile_check])
    def test_midpoint_convexity(self, check, p):
        t = np.linspace(-5, 5, 401)
        a, b = np.meshgrid(t, t)
        mid = check(0.5 * (a + b), p)
        assert np.all(mid <= 0.5 * (check(a, p) + check(b, p)) + 1e-12)


# -- quantile regression -----------------------------------------------------

class TestQuantileRegression:
    def test_median(self):
        m = fit_quantile_regression(const_data([1, 2, 3, 4, 5]), INTERCEPT_ONLY, 0.5)
        assert m.theta[0] == pytest.approx(3.0, abs=1e-12)

    def test_low_quantile_objective(self):
        data = const_data([1, 2, 3, 4, 5])
        m = fit_quantile_regression(data, INTERCEPT_ONLY, 0.2)
        grid = np.arange(1.0, 5.0 + 1e-12, 1e-4)
        scan = np.array([np.sum(check_loss(data.y - t, 0.2)) for t in grid])
        assert objective(check_loss, data, m, 0.2) == pytest.approx(scan.min(), abs=1e-12)
        # the optimal set is the whole interval [1, 2] at level 2
        assert scan.min() == pytest.approx(2.0, abs=1e-12)
        assert 1.0 - 1e-12 <= m.theta[0] <= 2.0 + 1e-12

    @pytest.mark.parametrize("p", [0.1, 0.5, 0.93])
    def test_interpolates_noiseless_line(self, p):
        x = np.linspace(0, 1, 6)
        m = fit_quantile_regression(Dataset(x, 2 * x), LINEAR, p)
        np.testing.assert_allclose(m.theta, [0.0, 2.0], atol=1e-12)
        assert objective(check_loss, Dataset(x, 2 * x), m, p) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(8))
    @pytest.mark.parametrize("p", [0.2, 0.5, 0.85])
    def test_matches_vertex_enumeration(self, seed, p):
        data = make_dataset(seed, 15)
        m = fit_quantile_regression(data, LINEAR, p)
        _, f_star = qr_vertex_enumeration(data.x, data.y, p)
        assert objective(check_loss, data, m, p) <= f_star + 1e-8

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_grid_golden_oracle(self, seed):
        data = make_dataset(100 + seed, 12)
        for degree, basis in [(0, INTERCEPT_ONLY), (1, LINEAR)]:
            _, f_star = brute_force_regression(data.x, data.y, 0.7, check_loss, degree)
            m = fit_quantile_regression(data, basis, 0.7)
            assert objective(check_loss, data, m, 0.7) <= f_star + 1e-8

    def test_support_rows_are_interpolated(self, linear_data):
        m = fit_quantile_regression(linear_data, LINEAR, 0.8)
        idx = list(m.support)
        np.testing.assert_allclose(linear_data.y[idx], m(linear_data.x[idx]), rtol=1e-10)

    @pytest.mark.parametrize("basis", [LINEAR, Basis(2), Basis(3)])
    def test_local_optimality(self, linear_data, basis):
        p = 0.9
        m = fit_quantile_regression(linear_data, basis, p)
        f0 = objective(check_loss, linear_data, m, p)
        r = np.random.default_rng(1)
        B = basis.matrix(linear_data.x)
        for _ in range(200):
            theta = m.theta + 1e-4 * r.standard_normal(basis.dim)
            assert np.sum(check_loss(linear_data.y - B @ theta, p)) >= f0 - 1e-10

    def test_rank_deficient_design(self):
        data = Dataset(np.full(5, 0.5), np.arange(5.0))
        with pytest.raises(FitError):
            fit_quantile_regression(data, LINEAR, 0.5)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.2])
    def test_p_out_of_range(self, linear_data, p):
        with pytest.raises(ValueError):
            fit_quantile_regression(linear_data, LINEAR, p)


# -- expectile regression ----------------------------------------------------

class TestExpectileRegression:
    def test_mean(self):
        m = fit_expectile_regression(const_data([1, 2, 3, 4, 5]), INTERCEPT_ONLY, 0.5)
        assert m.theta[0] == pytest.approx(3.0, abs=1e-12)

    def test_two_point_balance(self):
        m = fit_expectile_regression(const_data([0, 10]), INTERCEPT_ONLY, 0.9)
        assert m.theta[0] == pytest.approx(9.0, abs=1e-12)

    def test_matches_golden_section(self):
        y = np.array([1, 2, 3, 4, 100.0])
        m = fit_expectile_regression(const_data(y), INTERCEPT_ONLY, 0.8)
        t_star, _ = golden_min(lambda t: float(np.sum(asym_sq_loss(y - t, 0.8))), 1.0, 100.0)
        assert m.theta[0] == pytest.approx(t_star, abs=1e-6)
        # balance 0.8 (100 - t) = 0.2 (4 t - 10) gives t = 51.25
        assert m.theta[0] == pytest.approx(51.25, abs=1e-10)

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_grid_golden_oracle(self, seed):
        data = make_dataset(200 + seed, 14)
        for degree, basis in [(0, INTERCEPT_ONLY), (1, LINEAR)]:
            _, f_star = brute_force_regression(data.x, data.y, 0.9, asym_sq_loss, degree)
            m = fit_expectile_regression(data, basis, 0.9)
            assert objective(asym_sq_loss, data, m, 0.9) <= f_star + 1e-8

    @pytest.mark.parametrize("basis", [INTERCEPT_ONLY, LINEAR, Basis(3)])
    @pytest.mark.parametrize("p", [0.05, 0.5, 0.99])
    def test_stationarity(self, linear_data, basis, p):
        m = fit_expectile_regression(linear_data, basis, p)
        scale = np.max(np.abs(linear_data.y)) * linear_data.n
        assert expectile_stationarity(basis.matrix(linear_data.x), linear_data.y, p, m.theta) < 1e-10 * scale


# -- constant threshold and calibration ----------------------------------------

class TestConstantThreshold:
    def test_order_statistic(self):
        data = const_data(np.arange(1, 11))
        m = constant_threshold(data, 3)
        assert m.theta[0] == 7.0 and m.achieved_k == 3
        exc = exceedances(data, m)
        np.testing.assert_array_equal(exc.indices, [7, 8, 9])
        np.testing.assert_array_equal(exc.excesses, [1, 2, 3])

    def test_ties_leave_no_exceedances(self):
        data = const_data([5, 5, 5, 5])
        m = constant_threshold(data, 2)
        assert m.theta[0] == 5.0 and m.achieved_k == 0
        with pytest.raises(EmptyExceedanceError):
            exceedances(data, m)

    def test_matches_full_sort(self):
        r = np.random.default_rng(7)
        y = (1 - r.random(1000)) ** -1.0
        m = constant_threshold(Dataset(r.random(1000), y), 100)
        assert m.theta[0] == np.sort(y)[899]
        assert m.achieved_k == 100

    @pytest.mark.parametrize("k", [0, 10, -1])
    def test_k_out_of_range(self, k):
        with pytest.raises(ValueError):
            constant_threshold(const_data(np.arange(10.0)), k)


class TestCalibration:
    @pytest.mark.parametrize("k", [1, 7, 50, 99])
    def test_intercept_only_quantile_exact(self, k):
        r = np.random.default_rng(k)
        data = Dataset(r.random(100), r.standard_normal(100))
        assert calibrate_p_for_k(data, INTERCEPT_ONLY, "quantile", k).achieved_k == k

    def test_expectile_exact_and_monotone(self):
        data = const_data(np.arange(1, 101))
        m = calibrate_p_for_k(data, INTERCEPT_ONLY, "expectile", 10)
        assert m.achieved_k == 10
        ks = [fit_expectile_regression(data, INTERCEPT_ONLY, p).achieved_k for p in np.linspace(0.01, 0.99, 40)]
        assert all(a >= b for a, b in zip(ks, ks[1:]))

    def test_k_near_n(self):
        r = np.random.default_rng(3)
        data = Dataset(r.random(50), r.standard_normal(50))
        m = calibrate_p_for_k(data, INTERCEPT_ONLY, "quantile", 49)
        assert m.achieved_k == 49 and m.p < 0.05

    def test_expectile_unbracketed_k_raises(self):
        # even at p = 1/(n+1) the expectile sits well above the minimum
        r = np.random.default_rng(3)
        data = Dataset(r.random(50), r.standard_normal(50))
        with pytest.raises(CalibrationError):
            calibrate_p_for_k(data, INTERCEPT_ONLY, "expectile", 49)

    @pytest.mark.parametrize("seed", range(3))
    @pytest.mark.parametrize("method", ["quantile", "expectile"])
    def test_achieved_k_nonincreasing_in_p(self, seed, method):
        data = make_dataset(300 + seed, 200)
        fit = fit_quantile_regression if method == "quantile" else fit_expectile_regression
        ks = [fit(data, LINEAR, p).achieved_k for p in np.linspace(0.02, 0.98, 20)]
        assert all(a >= b for a, b in zip(ks, ks[1:])), ks

    @pytest.mark.parametrize("method", ["quantile", "expectile"])
    @pytest.mark.parametrize("k", [20, 100, 160])
    def test_linear_calibration_hits_k(self, linear_data, method, k):
        m = calibrate_p_for_k(linear_data, LINEAR, method, k)
        assert m.achieved_k == k
        assert len(exceedances(linear_data, m)) == k

    def test_constant_rejected(self, linear_data):
        with pytest.raises(ValueError):
            calibrate_p_for_k(linear_data, LINEAR, "constant", 10)


# -- invariants ----------------------------------------------------------------

class TestInvariants:
    @pytest.mark.parametrize("method", list(Method))
    def test_shift_equivariance(self, linear_data, method):
        c = 123.456
        shifted = Dataset(linear_data.x, linear_data.y + c)
        kw = {"k": 30} if method is Method.CONSTANT else {"p": 0.8}
        a = fit_threshold(linear_data, method, LINEAR, **kw)
        b = fit_threshold(shifted, method, LINEAR, **kw)
        assert b.theta[0] - a.theta[0] == pytest.approx(c, abs=1e-8)
        np.testing.assert_allclose(b.theta[1:], a.theta[1:], atol=1e-8)

    @pytest.mark.parametrize("fit", [fit_quantile_regression, fit_expectile_regression])
    def test_level_nondecreasing_in_p(self, linear_data, fit):
        levels = [fit(linear_data, INTERCEPT_ONLY, p).theta[0] for p in np.linspace(0.01, 0.99, 30)]
        assert all(b >= a - 1e-12 for a, b in zip(levels, levels[1:]))

    def test_exceedance_example(self):
        data = Dataset([0.0, 1.0], [0.5, 0.5])
        model = ThresholdModel(Method.QUANTILE, 0.5, np.array([0.0, 1.0]), LINEAR, 1)
        exc = exceedances(data, model)
        np.testing.assert_array_equal(exc.indices, [0])
        assert exc.excesses[0] == 0.5 and exc.covariates[0] == 0.0

    @pytest.mark.parametrize("method", list(Method))
    def test_exceedance_count_is_achieved_k(self, linear_data, method):
        m = fit_threshold(linear_data, method, LINEAR, k=40)
        exc = exceedances(linear_data, m)
        assert len(exc) == m.achieved_k
        assert np.all(exc.excesses > 0)
