"""Normal-mode spectra: closed forms, decoupling, soft-mode scans."""

import numpy as np
import pytest

from planartrap.constants import TWO_PI
from planartrap.crystal import (
    HarmonicTrap,
    ParameterSweep,
    classify_dimension,
    solve_equilibrium,
)
from planartrap.errors import NotAtEquilibrium, NotPlanar
from planartrap.modes import (
    ModeSpectrum,
    hessian,
    mode_spectrum,
    soft_mode_scan,
    transverse_band,
    transverse_block,
)


@pytest.fixture(scope="module")
def chain_trap(yb):
    return HarmonicTrap(
        TWO_PI * 0.30e6, TWO_PI * 3.0e6, TWO_PI * 2.7e6, species=yb
    )


@pytest.fixture(scope="module")
def two_ion(chain_trap):
    return solve_equilibrium(chain_trap, 2, seed=0)


@pytest.fixture(scope="module")
def planar_10(paper_trap_10):
    return solve_equilibrium(paper_trap_10, 10, seed=0)


class TestHessian:
    def test_symmetry_and_fd(self, chain_trap, two_ion):
        h = hessian(two_ion.positions, chain_trap)
        assert np.abs(h - h.T).max() < 1e-10 * np.abs(h).max()

    def test_not_at_equilibrium_warns(self, chain_trap, two_ion):
        off = two_ion.positions.copy()
        off[:, 1] += 1e-6
        with pytest.warns(NotAtEquilibrium):
            hessian(off, chain_trap)


class TestTwoIonModes:
    def test_axial_pair(self, chain_trap, two_ion):
        spec = mode_spectrum(two_ion.positions, chain_trap)
        x_modes = np.sort(
            spec.frequencies[spec.participation[:, 0] > 0.999]
        )
        wx = chain_trap.omega_x
        np.testing.assert_allclose(
            x_modes, [wx, np.sqrt(3.0) * wx], rtol=1e-9
        )

    def test_transverse_pairs(self, chain_trap, two_ion):
        spec = mode_spectrum(two_ion.positions, chain_trap)
        wx = chain_trap.omega_x
        for axis, wt in ((1, chain_trap.omega_y), (2, chain_trap.omega_z)):
            modes = np.sort(
                spec.frequencies[spec.participation[:, axis] > 0.999]
            )
            np.testing.assert_allclose(
                modes, [np.sqrt(wt**2 - wx**2), wt], rtol=1e-9
            )


class TestSpectrumInvariants:
    def test_com_modes_exact(self, paper_trap_10, planar_10):
        spec = mode_spectrum(planar_10.positions, paper_trap_10)
        # center-of-mass modes survive the Coulomb coupling unchanged
        for w in paper_trap_10.omega:
            assert np.min(np.abs(spec.frequencies - w)) < 1e-9 * w

    def test_eigen_residuals(self, paper_trap_10, planar_10):
        h = hessian(planar_10.positions, paper_trap_10)
        spec = mode_spectrum(planar_10.positions, paper_trap_10)
        hnorm = np.linalg.norm(h)
        for k in range(spec.n_modes):
            r = h @ spec.eigenvectors[:, k] - (
                spec.eigenvalues[k] * spec.eigenvectors[:, k]
            )
            assert np.linalg.norm(r) < 1e-8 * hnorm

    def test_eigenvalue_sum_is_trace(self, paper_trap_10, planar_10):
        h = hessian(planar_10.positions, paper_trap_10)
        spec = mode_spectrum(planar_10.positions, paper_trap_10)
        assert spec.eigenvalues.sum() == pytest.approx(
            np.trace(h), rel=1e-10
        )

    def test_participation_rows_sum_to_one(self, paper_trap_10, planar_10):
        spec = mode_spectrum(planar_10.positions, paper_trap_10)
        np.testing.assert_allclose(
            spec.participation.sum(axis=1), 1.0, rtol=1e-10
        )

    def test_deterministic_sign_convention(self, paper_trap_10, planar_10):
        a = mode_spectrum(planar_10.positions, paper_trap_10)
        b = mode_spectrum(planar_10.positions, paper_trap_10)
        np.testing.assert_array_equal(a.eigenvectors, b.eigenvectors)
        for k in range(a.n_modes):
            j = int(np.argmax(np.abs(a.eigenvectors[:, k])))
            assert a.eigenvectors[j, k] > 0

    def test_no_soft_modes_at_stable_point(self, planar_10, paper_trap_10):
        spec = mode_spectrum(planar_10.positions, paper_trap_10)
        assert not np.any(spec.soft)


class TestTransverseBand:
    def test_planar_y_block_decouples(self, paper_trap_10, planar_10):
        h = hessian(planar_10.positions, paper_trap_10)
        hnorm = np.linalg.norm(h)
        n = len(planar_10.positions)
        mask = np.zeros((3 * n, 3 * n), dtype=bool)
        mask[1::3, :] = True
        mask[:, 1::3] = True
        mask[1::3, 1::3] = False
        assert np.abs(h[mask]).max() < 1e-10 * hnorm

    def test_band_matches_y_block_eigenvalues(self, paper_trap_10, planar_10):
        band = transverse_band(planar_10.positions, paper_trap_10)
        block = transverse_block(planar_10.positions, paper_trap_10)
        vals = np.sort(np.linalg.eigvalsh(block))[::-1]
        np.testing.assert_allclose(band, np.sqrt(vals), rtol=1e-10)
        assert band[0] == pytest.approx(paper_trap_10.omega_y, rel=1e-9)
        assert len(band) == 10
        assert np.all(np.diff(band) <= 0)

    def test_band_defined_for_chain_too(self, chain_trap):
        # a 1D chain is a degenerate planar crystal: y still decouples
        res = solve_equilibrium(chain_trap, 4, seed=0)
        band = transverse_band(res.positions, chain_trap)
        assert band[0] == pytest.approx(chain_trap.omega_y, rel=1e-9)

    def test_band_rejects_three_dimensional_crystal(self, yb):
        trap3d = HarmonicTrap(
            TWO_PI * 0.75e6, TWO_PI * 1.5e6, TWO_PI * 0.975e6, species=yb
        )
        res = solve_equilibrium(trap3d, 10, seed=0)
        assert str(classify_dimension(res.positions)) == "3D"
        with pytest.raises(NotPlanar):
            transverse_band(res.positions, trap3d)


class TestSoftModeScan:
    def test_transition_location_and_monotonicity(self, yb):
        template = HarmonicTrap(
            TWO_PI * 0.5e6, TWO_PI * 1.5e6, TWO_PI * 0.65e6, species=yb
        )
        sweep = ParameterSweep(
            "omega_x", TWO_PI * 1e6 * np.linspace(0.60, 0.82, 12), z_to_x=1.3
        )
        res = soft_mode_scan(template, sweep, 10, seed=0)
        assert np.all(res.converged)
        # the squared soft-mode frequency decreases as omega_x grows
        eig = res.min_eigenvalue
        assert eig[0] > 0 and eig[-1] < 0
        steps = np.diff(eig)
        assert np.all(steps < np.abs(eig).max() * 1e-3)
        assert res.transition is not None
        assert 0.70e6 * TWO_PI < res.transition < 0.73e6 * TWO_PI
        k = res.transition_index
        assert eig[k] > 0 >= eig[k + 1]

    def test_requires_ascending_omega_x(self, yb):
        template = HarmonicTrap(
            TWO_PI * 0.5e6, TWO_PI * 1.5e6, TWO_PI * 0.65e6, species=yb
        )
        sweep = ParameterSweep(
            "omega_x", TWO_PI * 1e6 * np.linspace(0.8, 0.6, 5), z_to_x=1.3
        )
        with pytest.raises(Exception):
            soft_mode_scan(template, sweep, 10, seed=0)
