import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import ndtri

from quarticity.errors import NumericalError
from quarticity.mc_harness import (
    DERIVED_VHAT_KAPPA,
    CLAIMED_VHAT_KAPPA,
    KnRule,
    McConfig,
    ci_experiment,
    decomposition_terms,
    ks_distance,
    rmse,
    run_decomposition,
    run_experiment,
    studentize,
    theoretical_variance_constant,
)
from quarticity.process_sim import ConstantVol, HestonVol, ModelSpec, SamplingSpec, SimulatedPath


def small_config(**kw):
    base = dict(
        model=ModelSpec(ConstantVol(1.0)),
        sampling=SamplingSpec(1.0, 512),
        replications=40,
        seed=3,
    )
    base.update(kw)
    return McConfig(**base)


class TestKnRule:
    def test_default_values(self):
        assert KnRule().k_n(4096) == 28
        assert KnRule().k_n(10_000) == 40
        assert KnRule().k_n(2**14) == 49

    def test_floor_at_two(self):
        assert KnRule(theta=0.01).k_n(100) == 2

    @pytest.mark.parametrize("gamma", [0.3, 1 / 3, 0.5, 0.6])
    def test_rate_condition(self, gamma):
        with pytest.raises(ValueError, match="rate condition"):
            KnRule(gamma=gamma)


class TestConstants:
    @pytest.mark.parametrize(
        "est, choice, kappa",
        [
            ("RV", None, 2.0),
            ("QuarticNaive", None, 128 / 3),
            ("VBarPrime", None, 32.0),
            ("GeneralG", "x", 2.0),
            ("GeneralG", "x2", 8.0),
            ("GeneralG", "2x2", 32.0),
            ("GeneralG", "x3", 18.0),
            ("UStat", "c", 2.0),
            ("UStat", "2c", 8.0),
        ],
    )
    def test_menu(self, est, choice, kappa):
        assert theoretical_variance_constant(est, choice) == pytest.approx(kappa)

    def test_vhat_prime_both_versions(self):
        assert theoretical_variance_constant("VHatPrime") == pytest.approx(55.0345, abs=1e-4)
        assert CLAIMED_VHAT_KAPPA == pytest.approx((math.sqrt(105) - math.sqrt(8)) ** 2)
        assert theoretical_variance_constant("VHatPrime", version="derived") == 56.0

    def test_derived_constants_by_quadrature(self):
        # independent of the closed forms: integrate against the normal density
        def moment(f):
            return integrate.quad(lambda z: f(z) * stats.norm.pdf(z), -np.inf, np.inf)[0]

        var_fourth = moment(lambda z: z**8) - moment(lambda z: z**4) ** 2
        var_centred = moment(lambda z: (z * z - 1) ** 4) - moment(lambda z: (z * z - 1) ** 2) ** 2
        assert var_fourth == pytest.approx(96.0, rel=1e-9)
        assert var_centred == pytest.approx(DERIVED_VHAT_KAPPA, rel=1e-9)
        assert (2 / 3) ** 2 * var_fourth == pytest.approx(theoretical_variance_constant("QuarticNaive"))

    def test_unknown(self):
        with pytest.raises(ValueError):
            theoretical_variance_constant("Nope")
        with pytest.raises(ValueError):
            theoretical_variance_constant("GeneralG", "sin")


class TestStudentize:
    def test_zero_error(self):
        assert studentize([0.0], [1.0], 2.0)[0] == 0

    def test_arithmetic(self):
        assert studentize([3.0], [1.0], 2.0)[0] == pytest.approx(3 / math.sqrt(2))

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            studentize([1.0], [0.0], 2.0)


class TestKsDistance:
    def test_normal_quantiles(self):
        m = 200
        z = ndtri((np.arange(1, m + 1) - 0.5) / m)
        assert ks_distance(z) <= 0.5 / m + 1e-9

    def test_single_sample_at_median(self):
        assert ks_distance([0.0]) == pytest.approx(0.5)

    def test_far_tail(self):
        assert ks_distance(np.full(10, 10.0)) == pytest.approx(1.0, abs=1e-12)

    def test_empty(self):
        with pytest.raises(ValueError):
            ks_distance([])


class TestRunExperiment:
    def test_report_shape(self):
        report = run_experiment(small_config())
        assert [s.estimator for s in report.summaries][:2] == ["RV", "QuarticNaive"]
        assert report.k_n == KnRule().k_n(512)
        for s in report.summaries:
            assert s.M == 40 and s.var_e >= 0 and 0 <= s.ks <= 1
        assert len(report.samples["VHatPrime"].e) == 40
        assert report.summary("VHatPrime").kappa_derived == 56.0
        assert any("claimed constant" in n for n in report.notes)

    def test_single_replication(self):
        report = run_experiment(small_config(replications=1))
        for s in report.summaries:
            assert s.var_e == 0.0
            assert 0 <= s.ks <= 1

    def test_independent_of_threads(self):
        a = run_experiment(small_config(replications=70, threads=1))
        b = run_experiment(small_config(replications=70, threads=4))
        for sa, sb in zip(a.summaries, b.summaries):
            assert sa == sb
        np.testing.assert_array_equal(a.samples["VBar"].estimate, b.samples["VBar"].estimate)

    def test_prefix_stable(self):
        # replication r does not depend on how many replications run
        a = run_experiment(small_config(replications=10))
        b = run_experiment(small_config(replications=20))
        np.testing.assert_array_equal(a.samples["RV"].estimate, b.samples["RV"].estimate[:10])

    def test_full_span_targets(self):
        cfg = small_config(target_span="full", estimators=("VHatPrime", "RV"))
        report = run_experiment(cfg)
        s = report.samples["VHatPrime"]
        np.testing.assert_allclose(s.target, 2.0, rtol=1e-12)
        np.testing.assert_array_equal(s.target, s.target_full)

    def test_covered_span_targets_constant_c(self):
        cfg = small_config(estimators=("VHatPrime", "VBarPrime", "QuarticNaive", "RV"))
        report = run_experiment(cfg)
        k, d = cfg.k_n, cfg.sampling.delta_n
        np.testing.assert_allclose(report.samples["VHatPrime"].target, 2 * (1 - k * d), rtol=1e-12)
        np.testing.assert_allclose(report.samples["VBarPrime"].target, 2 * (1 - (k - 1) * d), rtol=1e-12)
        np.testing.assert_allclose(report.samples["QuarticNaive"].target, 2 * (1 - d), rtol=1e-12)
        np.testing.assert_allclose(report.samples["RV"].target, 1.0, rtol=1e-12)

    def test_precondition_violation(self):
        with pytest.raises(ValueError):
            McConfig(ModelSpec(), SamplingSpec(1.0, 4), kn_rule=KnRule(theta=5.0),
                     estimators=("VHatPrime",))

    def test_non_finite_estimate_aborts(self):
        cfg = small_config(model=ModelSpec(ConstantVol(1e300)), estimators=("QuarticNaive",))
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(NumericalError, match="replication 0"):
                run_experiment(cfg)

    def test_studentized_heston_uses_path_integrals(self):
        cfg = McConfig(ModelSpec(HestonVol(3, 1, 0.5, -0.5, 1)), SamplingSpec(1.0, 400, 4),
                       estimators=("VBarPrime",), replications=5, seed=1)
        report = run_experiment(cfg)
        s = report.samples["VBarPrime"]
        assert np.all(np.isfinite(s.z))
        assert not np.allclose(s.e / s.z, s.e[0] / s.z[0])

    def test_rmse(self):
        report = run_experiment(small_config(estimators=("RV",)))
        e = report.samples["RV"].e
        assert rmse(report, "RV") == pytest.approx(math.sqrt(report.delta_n * np.mean(e**2)))


class TestCi:
    def test_alpha_one_never_covers(self):
        assert ci_experiment(small_config(), 1.0).coverage == 0.0

    def test_oracle_mode(self):
        res = ci_experiment(small_config(replications=300), 0.05, plugin="oracle")
        assert 0.88 <= res.coverage <= 1.0
        assert res.negative_plugins == 0

    def test_bad_plugin(self):
        with pytest.raises(ValueError):
            ci_experiment(small_config(), 0.05, plugin="RV")

    def test_bad_alpha(self):
        with pytest.raises(ValueError):
            ci_experiment(small_config(), 0.0)


def zero_path(n=100):
    sampling = SamplingSpec(1.0, n)
    times = np.arange(n + 1) * sampling.fine_step
    return SimulatedPath(times, np.zeros(n + 1), np.ones(n + 1), 0, sampling)


class TestDecomposition:
    def test_zero_path(self):
        row = decomposition_terms(zero_path(100), 4, target_span="full")
        root = math.sqrt(0.01)
        assert row.term_I == pytest.approx(-3 / root)
        assert row.term_II == pytest.approx(2 / root)
        assert row.term_III == pytest.approx(-1 / root)
        assert row.total == pytest.approx(-2 / root)
        assert row.standardized_error == pytest.approx(-2 / root)

    def test_identity_per_replication(self):
        diag = run_decomposition(small_config(replications=30))
        assert diag.terms.shape == (30, 3)
        assert diag.max_identity_error < 1e-8
        assert diag.covariance.shape == (3, 3)

    def test_matches_vhat_prime_error(self):
        cfg = small_config(replications=15, estimators=("VHatPrime",))
        diag = run_decomposition(cfg)
        report = run_experiment(cfg)
        np.testing.assert_allclose(diag.standardized_error, report.samples["VHatPrime"].e, rtol=1e-10)

    def test_bad_window(self):
        with pytest.raises(ValueError):
            decomposition_terms(zero_path(10), 10)


def test_rate_property_quick():
    # smaller-scale version of the acceptance rate check
    r = []
    for n in (2**10, 2**12):
        cfg = small_config(sampling=SamplingSpec(1.0, n), estimators=("VBarPrime",), replications=300)
        r.append(rmse(run_experiment(cfg), "VBarPrime"))
    assert 1 / 2.6 <= r[1] / r[0] <= 1 / 1.5


def test_bias_factor_switch():
    cfg = small_config(estimators=("GeneralG:x3",), replications=5)
    a = run_experiment(cfg).samples["GeneralG:x3"].estimate
    b = run_experiment(replace(cfg, bias_factor=2.0)).samples["GeneralG:x3"].estimate
    assert np.all(b < a)
