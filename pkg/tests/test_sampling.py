"""Distributional conformance of every sampler against its Laplace
transform / covariance, plus the reproducibility contract of the
counter-based streams."""

import math

import numpy as np
import pytest

from subfrac import sampling
from subfrac.sampling import (
    SUB_SUBORDINATOR,
    BernsteinSpec,
    HomogeneousProductLaw,
    InvalidHurst,
    InverseSubordinatorLaw,
    NumericCDFLaw,
    PathGrid,
    SeedSpec,
    fbm_paths_batch,
    inverse_passage_batch,
    mixing_from_uniforms,
    path_uniforms,
    sample_A_stable_mixing,
    sample_fbm_path,
    sample_markov_path,
    sample_rsgp_path,
    sample_scriptA,
    sample_stable_subordinator,
    sample_time_change,
    stable_onesided_from_uniforms,
)
from subfrac.specfun import mittag_leffler

SEED = 20240817


def mc_dev(samples, target):
    """(sample mean - target) in units of the empirical standard error."""
    se = np.std(samples, ddof=1) / math.sqrt(len(samples))
    return (np.mean(samples) - target) / se


class TestSeedContract:
    def test_seed_validation(self):
        with pytest.raises(ValueError):
            SeedSpec(-1, 0)
        with pytest.raises(ValueError):
            SeedSpec(1, -2)

    def test_chunking_invariance(self):
        whole = path_uniforms(SEED, 2, 100, 3)
        tail = path_uniforms(SEED, 2, 40, 3, start=60)
        assert np.array_equal(whole[60:], tail)

    def test_scalar_equals_batch_row(self):
        v = sample_stable_subordinator(0.5, 1.0, SeedSpec(SEED, 7))
        u = path_uniforms(SEED, SUB_SUBORDINATOR, 1, 2, start=7)
        assert v == float(stable_onesided_from_uniforms(u[0, 0], u[0, 1], 0.5))

    def test_substreams_differ(self):
        a = path_uniforms(SEED, 0, 5, 4)
        b = path_uniforms(SEED, 1, 5, 4)
        assert not np.allclose(a, b)


class TestStableSubordinator:
    def test_degenerate(self):
        assert sample_stable_subordinator(1.0, 2.5, SeedSpec(SEED, 0)) == 2.5

    def test_laplace_conformance(self):
        n = 100_000
        u = path_uniforms(SEED, 1, n, 2)
        for gamma in (0.5, 0.8):
            s = stable_onesided_from_uniforms(u[:, 0], u[:, 1], gamma)
            for lam in (0.5, 1.0, 2.0):
                dev = mc_dev(np.exp(-lam * s), math.exp(-(lam**gamma)))
                assert abs(dev) < 4.0, (gamma, lam, dev)

    def test_scaling_law(self):
        # draws at time t are t^{1/gamma} times the unit-time draws
        s1 = sample_stable_subordinator(0.5, 1.0, SeedSpec(SEED, 3))
        s2 = sample_stable_subordinator(0.5, 4.0, SeedSpec(SEED, 3))
        assert s2 == pytest.approx(16.0 * s1, rel=1e-12)

    def test_invalid_gamma(self):
        with pytest.raises(ValueError):
            stable_onesided_from_uniforms(0.5, 0.5, 1.5)


class TestMixingVariable:
    def test_degenerate(self):
        assert sample_A_stable_mixing(1.0, SeedSpec(SEED, 0)) == 1.0

    def test_laplace_transform_is_mittag_leffler(self):
        n = 100_000
        u = path_uniforms(SEED, 0, n, 2)
        for beta in (0.5, 0.6, 0.8):
            a = mixing_from_uniforms(u[:, 0], u[:, 1], beta)
            for lam in (0.5, 1.0, 2.0):
                dev = mc_dev(np.exp(-lam * a), mittag_leffler(beta, -lam))
                assert abs(dev) < 4.0, (beta, lam, dev)

    def test_mean_matches_series_coefficient(self):
        n = 100_000
        u = path_uniforms(SEED, 0, n, 2)
        a = mixing_from_uniforms(u[:, 0], u[:, 1], 0.6)
        assert abs(mc_dev(a, 1.0 / math.gamma(1.6))) < 4.0


class TestTimeChange:
    LAW = HomogeneousProductLaw(
        theta=0.8,
        mixing_from_uniforms=lambda u1, u2: mixing_from_uniforms(u1, u2, 0.6),
    )

    def test_zero_time(self):
        assert sample_time_change(self.LAW, 0.0, SeedSpec(SEED, 5)) == 0.0

    def test_product_scaling_exact(self):
        a1 = sample_time_change(self.LAW, 1.0, SeedSpec(SEED, 5))
        a2 = sample_time_change(self.LAW, 2.0, SeedSpec(SEED, 5))
        assert a2 == pytest.approx(2.0**0.8 * a1, rel=1e-12)

    def test_inverse_subordinator_paths_monotone(self):
        law = InverseSubordinatorLaw(BernsteinSpec.stable_power(0.5), steps_per_unit=2**10)
        prev = 0.0
        for t in (0.25, 0.5, 1.0, 2.0):
            e = sample_time_change(law, t, SeedSpec(SEED, 11))
            assert e >= prev
            prev = e

    def test_inverse_subordinator_transform(self):
        # E[e^{-lam E_t}] at t = 1 equals the one-parameter function value
        bern = BernsteinSpec.stable_power(0.5)
        e = inverse_passage_batch(bern, 1.0, 4000, SEED, steps_per_unit=2**10)
        for lam in (0.5, 1.0):
            dev = mc_dev(np.exp(-lam * e), mittag_leffler(0.5, -lam))
            assert abs(dev) < 4.0

    def test_numeric_cdf_law(self):
        from subfrac.kernels import GGBMKernel
        from subfrac.phi import ClosedFormPhi, time_law_cdf

        cdf = time_law_cdf(
            ClosedFormPhi(GGBMKernel(0.8, 0.5)), 1.0, np.linspace(0.05, 6.0, 80)
        )
        law = NumericCDFLaw(cdf_for_t=lambda t: cdf)
        u = path_uniforms(SEED, 0, 50_000, 1)
        a = law.sample_from_uniforms(1.0, u)
        dev = mc_dev(np.exp(-a), mittag_leffler(0.5, -1.0))
        assert abs(dev) < 5.0  # inversion bias allowed within the MC band


class TestScriptA:
    def test_gamma_one_reduces_to_amplitude(self):
        spec = SeedSpec(SEED, 4)
        a = sample_A_stable_mixing(0.6, spec)
        assert sample_scriptA(1.0, lambda s: sample_A_stable_mixing(0.6, s), spec) == a

    def test_transform_identity(self):
        # E[e^{-lam script_A t^{theta/gamma}}] = Phi(t, -lam^gamma) at t = 1
        n = 100_000
        gamma = 0.5
        um = path_uniforms(SEED, 0, n, 2)
        us = path_uniforms(SEED, 1, n, 2)
        amp = mixing_from_uniforms(um[:, 0], um[:, 1], 0.6)
        eta = stable_onesided_from_uniforms(us[:, 0], us[:, 1], gamma)
        cal_a = amp ** (1.0 / gamma) * eta
        dev = mc_dev(np.exp(-cal_a), mittag_leffler(0.6, -1.0))
        assert abs(dev) < 4.0

    def test_nonnegative(self):
        for i in range(50):
            assert sample_scriptA(
                0.7, lambda s: sample_A_stable_mixing(0.5, s), SeedSpec(SEED, i)
            ) >= 0.0


class TestFBM:
    def test_starts_at_zero(self):
        p = sample_fbm_path(0.7, PathGrid(1.0, 32), SeedSpec(SEED, 0))
        assert p[0] == 0.0

    def test_brownian_case_independent_increments(self):
        paths = fbm_paths_batch(0.5, PathGrid(1.0, 16), SEED, 30_000)
        inc = np.diff(paths, axis=1)
        rho = np.corrcoef(inc[:, 0], inc[:, 1])[0, 1]
        assert abs(rho) < 3.0 / math.sqrt(30_000)

    def test_covariance_structure(self):
        # E[B^H_t B^H_s] = (t^{2H} + s^{2H} - |t-s|^{2H}) / 2 at (t, s) = (1, 1/4)
        H = 0.7
        paths = fbm_paths_batch(H, PathGrid(1.0, 16), SEED, 50_000)
        prod = paths[:, -1] * paths[:, 4]
        target = 0.5 * (1.0 + 0.25 ** (2 * H) - 0.75 ** (2 * H))
        assert abs(mc_dev(prod, target)) < 4.0

    def test_variance_scaling(self):
        H = 0.3
        paths = fbm_paths_batch(H, PathGrid(2.0, 32), SEED, 30_000)
        dev = mc_dev(paths[:, -1] ** 2, 2.0 ** (2 * H))
        assert abs(dev) < 4.0

    def test_hurst_validation(self):
        with pytest.raises(InvalidHurst):
            sample_fbm_path(1.2, PathGrid(1.0, 8), SeedSpec(SEED, 0))

    def test_cholesky_fallback(self, monkeypatch):
        H, grid = 0.7, PathGrid(1.0, 16)
        direct = fbm_paths_batch(H, grid, SEED, 2000)
        monkeypatch.setattr(
            sampling, "_fgn_eigenvalues", lambda h, n: -np.ones(2 * n)
        )
        fallback = fbm_paths_batch(H, grid, SEED, 2000)
        # same covariance either way (compare second moments loosely)
        v1, v2 = np.var(direct[:, -1]), np.var(fallback[:, -1])
        assert v2 == pytest.approx(v1, rel=0.1)


class TestRSGP:
    def test_marginals_agree_across_kinds(self):
        grid = PathGrid(1.0, 32)
        n = 20_000
        finals = {}
        for kind in ("timechanged_bm", "scaled_bm", "scaled_fbm"):
            vals = np.array(
                [
                    sample_rsgp_path(kind, 0.7, 1.0, 0.8, grid, SeedSpec(SEED, i))[-1]
                    for i in range(n // 10)
                ]
            )
            finals[kind] = vals
        keys = list(finals)
        for i in range(len(keys)):
            for j in range(i + 1, len(keys)):
                a, b = finals[keys[i]], finals[keys[j]]
                joint = math.hypot(
                    np.std(a ** 2, ddof=1) / math.sqrt(len(a)),
                    np.std(b ** 2, ddof=1) / math.sqrt(len(b)),
                )
                assert abs(np.mean(a**2) - np.mean(b**2)) < 4.0 * joint

    def test_zero_amplitude_scaled_kinds(self):
        grid = PathGrid(1.0, 8)
        for kind in ("scaled_bm", "scaled_fbm"):
            p = sample_rsgp_path(kind, 0.0, 1.0, 0.8, grid, SeedSpec(SEED, 1))
            assert np.all(p == 0.0)

    def test_invalid_hurst(self):
        with pytest.raises(InvalidHurst):
            sample_rsgp_path("scaled_fbm", 1.0, 0.5, 1.9, PathGrid(1.0, 8), SeedSpec(SEED, 0))


class TestMarkovPaths:
    def test_brownian_moments(self):
        from subfrac.fk import BrownianDrift

        grid = PathGrid(1.0, 16)
        finals = np.array(
            [
                sample_markov_path(BrownianDrift(2.0), 1.0, grid, SeedSpec(SEED, i))[-1]
                for i in range(20_000)
            ]
        )
        assert abs(mc_dev(finals, 2.0)) < 4.0
        assert np.var(finals) == pytest.approx(1.0, rel=0.05)

    def test_stable_characteristic_function(self):
        from subfrac.fk import StableLevy

        grid = PathGrid(1.0, 8)
        finals = np.array(
            [
                sample_markov_path(StableLevy(1.5), 1.0, grid, SeedSpec(SEED, i))[-1]
                for i in range(20_000)
            ]
        )
        # E[e^{i u X_1}] = exp(-(u^2/2)^{delta/2}) at u = 1
        target = math.exp(-(0.5**0.75))
        dev = mc_dev(np.cos(finals), target)
        assert abs(dev) < 4.0

    def test_flow_path_constant_sigma(self):
        from subfrac.fk import DossSussmann

        grid = PathGrid(1.0, 16)
        model = DossSussmann(sigma=lambda z: 3.0, w=0.5)
        p = sample_markov_path(model, 1.0, grid, SeedSpec(SEED, 2), x0=1.0)
        # g(y, x) = x + 3 y, driver = B + 0.5 t
        from subfrac.fk import BrownianDrift

        b = sample_markov_path(BrownianDrift(0.5), 1.0, grid, SeedSpec(SEED, 2))
        assert np.allclose(p, 1.0 + 3.0 * b, atol=1e-7)
