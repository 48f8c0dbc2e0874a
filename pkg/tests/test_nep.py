"""Problem matrices: entries as printed, determinants, nullspaces, toys."""

import numpy as np
import pytest

from treig.bessel import bessel_j, bessel_j_prime, bessel_j_zeros, bessel_y
from treig.nep import (
    IllConditionedNullspace,
    annulus_nep,
    determinant,
    disk_nep,
    evaluate,
    nullspace_vector,
    toy_fixture,
)

# det of the disk system at (m=0, kappa=1, p=2), frozen from the 40-digit
# oracle: J_0(1) * 2 J_0'(2) - J_0'(1) * J_0(2)
DISK_DET_M0_K1_P2 = -0.7840937088483048

J0_ZERO_1 = 2.4048255576957728
J0_ZERO_2 = 5.5200781102863106


class TestDiskMatrix:
    def test_entries_as_printed(self):
        m, kappa, p = 2, 1.3 + 0.4j, 3.0
        L = evaluate(disk_nep(m), kappa, p)
        assert L.shape == (2, 2)
        assert L[0, 0] == bessel_j(m, kappa)
        assert L[0, 1] == bessel_j(m, p * kappa)
        for got, want in [(L[1, 0], bessel_j_prime(m, kappa)),
                          (L[1, 1], p * bessel_j_prime(m, p * kappa))]:
            assert abs(got - want) <= 1e-14 * abs(want)

    def test_determinant_vanishes_identically_at_p_one(self):
        nep = disk_nep(0, param_domain=(0.5, 2.0))
        for kappa in (0.7, 2.0, 1.1 + 0.3j):
            assert determinant(nep, kappa, 1.0) == 0.0

    def test_row_vanishes_at_paired_bessel_zeros(self):
        # J_0(kappa) = J_0(p kappa) = 0 makes the first row zero
        nep = disk_nep(0)
        p = J0_ZERO_2 / J0_ZERO_1
        assert abs(determinant(nep, J0_ZERO_1, p)) < 1e-13

    def test_frozen_determinant_value(self):
        got = determinant(disk_nep(0), 1.0, 2.0)
        assert abs(got - DISK_DET_M0_K1_P2) <= 1e-12 * abs(DISK_DET_M0_K1_P2)

    def test_kappa_zero_excluded(self):
        with pytest.raises(ValueError):
            evaluate(disk_nep(0), 0.0, 2.0)

    def test_param_domain_enforced(self):
        with pytest.raises(ValueError):
            determinant(disk_nep(0), 2.5, 100.0)
        with pytest.raises(ValueError):
            disk_nep(0).with_param_domain(0.5, 2.0)  # straddles n = 1
        nep = disk_nep(0).with_param_domain(2.0, 4.0)
        assert nep.param_domain == (2.0, 4.0)


class TestAnnulusMatrix:
    def test_entries_as_printed(self):
        m, r, kappa, p = 1, 0.1, 3.2 - 0.2j, 7.0
        L = evaluate(annulus_nep(m, r), kappa, p)
        assert L.shape == (4, 4)
        kr = kappa * r

        def jp(z):
            return bessel_j(m - 1, z) - m / z * bessel_j(m, z)

        def yp(z):
            return bessel_y(m - 1, z) - m / z * bessel_y(m, z)

        rows = [
            [bessel_j(m, kappa), bessel_y(m, kappa),
             bessel_j(m, p * kappa), bessel_y(m, p * kappa)],
            [jp(kappa), yp(kappa), p * jp(p * kappa), p * yp(p * kappa)],
            [bessel_j(m, kr), bessel_y(m, kr),
             bessel_j(m, p * kr), bessel_y(m, p * kr)],
            [jp(kr), yp(kr), p * jp(p * kr), p * yp(p * kr)],
        ]
        want = np.array(rows)
        assert np.allclose(L, want, rtol=1e-12, atol=1e-14)

    def test_determinant_vanishes_identically_at_p_one(self):
        nep = annulus_nep(0, 0.1, param_domain=(0.5, 2.0))
        for kappa in (2.5, 4.0, 3.0 + 0.5j):
            L = evaluate(nep, kappa, 1.0)
            hadamard = np.prod(np.linalg.norm(L, axis=0))
            assert abs(determinant(nep, kappa, 1.0)) < 1e-15 * hadamard

    def test_disk_subblock_consistency(self):
        m, kappa, p = 0, 2.7 + 0.1j, 9.0
        La = evaluate(annulus_nep(m, 0.1, param_domain=(6, 64)), kappa, p)
        Ld = evaluate(disk_nep(m, param_domain=(6, 64)), kappa, p)
        sub = La[np.ix_([0, 1], [0, 2])]
        assert np.allclose(sub, Ld, rtol=1e-13, atol=0)

    def test_determinant_conjugate_symmetry(self):
        nep = annulus_nep(1, 0.1)
        for kappa in (3.1 + 0.7j, 2.2 - 1.1j, 4.4 + 0.05j):
            d = determinant(nep, kappa, 11.0)
            dc = determinant(nep, np.conj(kappa), 11.0)
            assert abs(dc - np.conj(d)) <= 1e-10 * max(abs(d), 1e-300)

    def test_inner_radius_validated(self):
        for bad in (0.0, 1.0, -0.2, 1.7):
            with pytest.raises(ValueError):
                annulus_nep(0, bad)

    def test_kappa_zero_excluded(self):
        with pytest.raises(ValueError):
            evaluate(annulus_nep(0, 0.1), 0.0, 8.0)


class TestDeterminantNumerics:
    def test_direct_expansion_matches_lu_determinant(self, rng):
        nep = annulus_nep(1, 0.1)
        for _ in range(25):
            kappa = complex(2.0 + 2.5 * rng.random(), rng.normal() * 0.8)
            p = 5.0 + 15.0 * rng.random()
            L = evaluate(nep, kappa, p)
            got = determinant(nep, kappa, p)
            want = np.linalg.det(L)
            # accuracy is relative to the Hadamard bound, not |det|: entries
            # reach e^{|Im p kappa|} and the expansion cancels to the result
            hadamard = np.prod(np.linalg.norm(L, axis=0))
            assert abs(got - want) <= 1e-14 * hadamard

    def test_determinant_is_analytic(self, rng):
        # Cauchy-Riemann via finite differences: the kappa-derivative must
        # not depend on the approach direction
        h = 1e-6
        for nep, pval in [(disk_nep(0), 3.0), (annulus_nep(0, 0.1), 20.0)]:
            for _ in range(10):
                kappa = complex(2.0 + rng.random(), rng.normal() * 0.5)
                dx = (determinant(nep, kappa + h, pval)
                      - determinant(nep, kappa - h, pval)) / (2 * h)
                dy = (determinant(nep, kappa + 1j * h, pval)
                      - determinant(nep, kappa - 1j * h, pval)) / (2j * h)
                assert abs(dx - dy) <= 1e-6 * max(abs(dx), abs(dy), 1e-12)


class TestNullspace:
    def test_crossing_eigenvector(self):
        nep = toy_fixture("crossing")
        coeffs, residual = nullspace_vector(nep, 1.0, 1.0)
        assert residual == 0.0
        assert np.allclose(coeffs, [1.0, 0.0], atol=1e-15)

    def test_degenerate_eigenvector_up_to_phase(self):
        nep = toy_fixture("degenerate")
        coeffs, residual = nullspace_vector(nep, 0.0, 1.0)
        assert residual < 1e-15
        assert np.allclose(coeffs, [1.0, 0.0], atol=1e-15)

    def test_phase_convention(self):
        # first nonzero component comes out real-positive
        nep = annulus_nep(0, 0.1)
        coeffs, _ = nullspace_vector(nep, 3.1 + 0.2j, 12.0)
        lead = coeffs[np.argmax(np.abs(coeffs) > 1e-14)]
        assert lead.imag == 0.0
        assert lead.real > 0.0
        assert abs(np.linalg.norm(coeffs) - 1.0) < 1e-13

    def test_near_defective_warns(self):
        # at the crossing toy's coincidence point both singular values vanish
        with pytest.warns(IllConditionedNullspace):
            nullspace_vector(toy_fixture("crossing"), 0.0, 0.0)

    def test_annulus_nullvector_annihilates_printed_matrix(self):
        # solved eigenpairs satisfy L @ coeffs = 0 in the printed basis; the
        # stored sign convention is what makes that literal statement true
        from treig.beyn import BeynConfig, ContourSpec, solve

        nep = annulus_nep(0, 0.1)
        pairs = solve(nep, 8.0, ContourSpec(3.0, 1.5, 1024),
                      BeynConfig(6, 3, rng_seed=0))
        assert pairs
        for pr in pairs:
            L = evaluate(nep, pr.kappa, pr.p)
            colscale = np.max(np.abs(L), axis=0)
            assert np.linalg.norm(L @ pr.coeffs) <= 1e-7 * np.max(colscale)


class TestToys:
    def test_crossing_spectrum(self):
        nep = toy_fixture("crossing")
        assert determinant(nep, 0.25, 0.25) == 0.0
        assert determinant(nep, -0.25, 0.25) == 0.0
        assert abs(determinant(nep, 2.0, 1.0) - 3.0) == 0.0
        # double root at the crossing itself
        assert determinant(nep, 0.0, 0.0) == 0.0

    def test_algebraic_spectrum(self):
        nep = toy_fixture("algebraic")
        for lam in (0.5, -0.5):
            assert determinant(nep, lam, 0.25) == 0.0
        assert abs(determinant(nep, 0.2j, -0.04)) < 1e-17

    def test_veering_spectrum(self):
        nep = toy_fixture("veering", epsilon=0.05)
        for lam in (0.05, -0.05):
            assert abs(determinant(nep, lam, 0.0)) < 1e-18
        # closed form lambda = p +- sqrt(p^2 + eps^2)
        p = 0.3
        lam = p + np.hypot(p, 0.05)
        assert abs(determinant(nep, lam, p)) < 1e-15

    def test_degenerate_spectrum(self):
        nep = toy_fixture("degenerate")
        for p in (-0.7, 0.0, 0.9):
            assert determinant(nep, 0.0, p) == 0.0
            assert abs(determinant(nep, 0.1, p) - 0.01) < 1e-17

    def test_epsilon_validation(self):
        with pytest.raises(ValueError):
            toy_fixture("veering")
        with pytest.raises(ValueError):
            toy_fixture("veering", epsilon=0.0)
        with pytest.raises(ValueError):
            toy_fixture("crossing", epsilon=0.1)
        with pytest.raises(ValueError):
            toy_fixture("nonsense")
