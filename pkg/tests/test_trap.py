"""Electrode bases, secular frequencies, axis geometry, stability bound."""

import numpy as np
import pytest

from planartrap.constants import AMU, ECHARGE, EPS0, TWO_PI, YB171_MASS_AMU
from planartrap.errors import (
    AxesNotAligned,
    DegenerateAxes,
    IndeterminateRatio,
    InputError,
    NoSolution,
    RankDeficient,
    UnstableAxis,
)
from planartrap.trap import (
    ElectrodeBasis,
    IonSpecies,
    RfDrive,
    TrapConfiguration,
    axis_rotation_angle,
    fit_quadratic_basis,
    frequency_difference,
    planarity_from_bound,
    rf_field_at,
    rf_null,
    secular_frequencies,
    solve_rotation_ratio,
    stability_bound,
    total_static_curvature,
)


def diag_basis(label, xx, yy, field=None):
    c = np.diag([xx, yy, -(xx + yy)])
    return ElectrodeBasis(label=label, curvature=c, linear_field=field or np.zeros(3))


def simple_trap(
    dc_xx=2e6,
    dc_yy=3e6,
    v_dc=1.0,
    kappa_rf=6e7,
    v_rf=80.0,
    omega_rf=TWO_PI * 40e6,
    species=None,
):
    """One DC electrode plus a pure y-z RF quadrupole, axes on the lab frame."""
    if species is None:
        species = IonSpecies.from_amu(YB171_MASS_AMU)
    dc = diag_basis("DC", dc_xx, dc_yy)
    rf = ElectrodeBasis(label="RF", curvature=np.diag([0.0, kappa_rf, -kappa_rf]))
    return TrapConfiguration(
        species=species,
        dc_electrodes=((dc, v_dc),),
        rf_basis=rf,
        rf_drive=RfDrive(v_rf=v_rf, omega_rf=omega_rf),
    )


class TestElectrodeBasis:
    def test_rejects_asymmetric_curvature(self):
        c = np.diag([1.0, 1.0, -2.0])
        c[0, 1] = 1e-3
        with pytest.raises(InputError):
            ElectrodeBasis(label="bad", curvature=c)

    def test_rejects_trace_violation(self):
        with pytest.raises(InputError):
            ElectrodeBasis(label="bad", curvature=np.diag([1.0, 1.0, -1.0]))

    def test_zero_curvature_allowed(self):
        b = ElectrodeBasis(label="flat", curvature=np.zeros((3, 3)))
        assert np.all(b.curvature == 0.0)

    def test_arrays_frozen(self):
        b = diag_basis("DC", 1.0, 2.0)
        with pytest.raises(ValueError):
            b.curvature[0, 0] = 5.0


class TestIonSpecies:
    def test_amu_round_trip(self):
        s = IonSpecies.from_amu(YB171_MASS_AMU)
        assert s.mass == pytest.approx(YB171_MASS_AMU * AMU, rel=1e-15)
        assert s.mass_amu == pytest.approx(YB171_MASS_AMU, rel=1e-15)
        assert s.charge_e == pytest.approx(1.0, rel=1e-15)

    def test_rejects_nonpositive_mass(self):
        with pytest.raises(InputError):
            IonSpecies(mass=0.0, charge=ECHARGE)


class TestTrapConfiguration:
    def test_duplicate_labels_rejected(self):
        b = diag_basis("DC", 1.0, 1.0)
        rf = ElectrodeBasis(label="RF", curvature=np.zeros((3, 3)))
        with pytest.raises(InputError):
            TrapConfiguration(
                species=IonSpecies.from_amu(171.0),
                dc_electrodes=((b, 1.0), (b, 2.0)),
                rf_basis=rf,
                rf_drive=RfDrive(v_rf=1.0, omega_rf=1.0),
            )

    def test_with_voltages_partial_update(self, reference):
        updated = reference.with_voltages({"C": 2.0})
        assert updated.voltage_of("C") == 2.0
        assert updated.voltage_of("NC") == reference.voltage_of("NC")
        with pytest.raises(InputError):
            reference.with_voltages({"missing": 1.0})

    def test_with_rf_voltage(self, reference):
        assert reference.with_rf_voltage(10.0).rf_drive.v_rf == 10.0

    def test_total_static_curvature_is_voltage_weighted(self, reference):
        total = total_static_curvature(reference)
        manual = sum(
            reference.basis_of(lbl).curvature * reference.voltage_of(lbl)
            for lbl in reference.dc_labels
        )
        np.testing.assert_allclose(total, manual, rtol=0, atol=0)


class TestSecularFrequencies:
    def test_pure_rf_closed_form(self):
        """Pure y-z RF quadrupole: omega = sqrt(2) e V beta' / (m Omega) with
        beta' = kappa'/2, and q = 2 e V kappa' / (m Omega^2)."""
        kappa = 6e7
        v_rf = 80.0
        omega_rf = TWO_PI * 40e6
        cfg = simple_trap(dc_xx=0.0, dc_yy=0.0, v_dc=0.0, kappa_rf=kappa,
                          v_rf=v_rf, omega_rf=omega_rf)
        m = cfg.species.mass
        e = cfg.species.charge
        sec = secular_frequencies(cfg)
        expected = np.sqrt(2.0) * e * v_rf * (kappa / 2.0) / (m * omega_rf)
        assert sec.omega_y == pytest.approx(expected, rel=1e-12)
        assert sec.omega_z == pytest.approx(expected, rel=1e-12)
        assert sec.omega_x == 0.0
        q_expected = 2.0 * e * v_rf * kappa / (m * omega_rf**2)
        np.testing.assert_allclose(sec.q[1:], q_expected, rtol=1e-12)
        assert sec.q[0] == 0.0

    def test_dc_plus_rf_quadrature(self):
        """omega_i^2 = (e/m) k_i + pseudopotential contribution, additive."""
        cfg = simple_trap()
        m, e = cfg.species.mass, cfg.species.charge
        sec = secular_frequencies(cfg)
        dc_only = secular_frequencies(cfg.with_rf_voltage(0.0), allow_unstable=True)
        rf_only = secular_frequencies(
            simple_trap(dc_xx=0.0, dc_yy=0.0, v_dc=0.0)
        )
        np.testing.assert_allclose(
            sec.omega**2,
            np.sign(dc_only.omega_squared) * dc_only.omega**2 + rf_only.omega**2,
            rtol=1e-12,
        )

    def test_zero_everything_gives_zeros(self):
        cfg = simple_trap(dc_xx=0.0, dc_yy=0.0, v_dc=0.0, v_rf=0.0)
        sec = secular_frequencies(cfg)
        np.testing.assert_array_equal(sec.omega, 0.0)
        assert not sec.unstable

    def test_unstable_axis_raises_with_payload(self):
        cfg = simple_trap(dc_xx=-5e6, dc_yy=2.5e6, v_rf=0.0)
        with pytest.raises(UnstableAxis) as err:
            secular_frequencies(cfg)
        assert err.value.axis == "x"
        assert err.value.omega_squared < 0

    def test_allow_unstable_keeps_magnitude(self):
        cfg = simple_trap(dc_xx=-5e6, dc_yy=2.5e6, v_rf=0.0)
        sec = secular_frequencies(cfg, allow_unstable=True)
        assert sec.unstable == ("x",)
        assert sec.omega_x > 0
        assert sec.omega_squared[0] < 0

    def test_axis_assignment_tracks_rotated_frame(self, yb):
        """A y-z rotated static block keeps its frequencies attached to the
        nearest lab axes."""
        theta = np.radians(10.0)
        lam = np.array([4e6, -9e6])
        v = np.array([np.sin(theta), np.cos(theta)])
        w = np.array([v[1], -v[0]])
        block = lam[1] * np.outer(v, v) + lam[0] * np.outer(w, w)
        c = np.zeros((3, 3))
        c[0, 0] = 5e6
        c[1:, 1:] = block
        c[0, 0] = -np.trace(c) + c[0, 0]
        dc = ElectrodeBasis(label="DC", curvature=c)
        rf = ElectrodeBasis(label="RF", curvature=np.diag([0.0, 9e7, -9e7]))
        cfg = TrapConfiguration(
            species=yb,
            dc_electrodes=((dc, 1.0),),
            rf_basis=rf,
            rf_drive=RfDrive(v_rf=80.0, omega_rf=TWO_PI * 40e6),
        )
        sec = secular_frequencies(cfg)
        # the z-assigned principal axis should lie close to lab z
        vz = sec.principal_axes[:, 2]
        assert abs(vz[2]) > abs(vz[1])
        assert sec.omega_y > sec.omega_z

    def test_mathieu_q_warning_above_threshold(self, yb):
        cfg = simple_trap(kappa_rf=6e8, v_rf=200.0)
        with pytest.warns(UserWarning):
            secular_frequencies(cfg)


class TestFrequencyDifference:
    def test_matches_direct_difference(self, reference):
        sec = secular_frequencies(reference)
        diff = frequency_difference(reference)
        assert diff.difference == pytest.approx(
            sec.omega_y**2 - sec.omega_z**2, rel=1e-9
        )
        assert diff.difference == pytest.approx(
            diff.coefficient * reference.voltage_of("NC"), rel=1e-12
        )

    def test_rf_independence_for_symmetric_quadrupole(self, reference):
        base = frequency_difference(reference)
        for v in (20.0, 50.0, 120.0):
            d = frequency_difference(reference.with_rf_voltage(v))
            assert d.coefficient == pytest.approx(base.coefficient, rel=1e-9)

    def test_requires_aligned_axes(self, reference):
        tilted = reference.with_voltages({"NC": 3.0})
        with pytest.raises(AxesNotAligned):
            frequency_difference(tilted)


class TestRotationGeometry:
    def test_solve_rotation_ratio_reference(self, reference):
        ratio = solve_rotation_ratio(reference, ("C",), ("NC",))
        assert ratio == pytest.approx(5.11, rel=1e-12)

    def test_ratio_degenerate_when_no_cross_terms(self):
        cfg = simple_trap()
        with pytest.raises(IndeterminateRatio):
            solve_rotation_ratio(cfg, ("DC",), ("DC",))

    def test_no_solution_when_second_set_lacks_cross_term(self, reference, yb):
        flat = ElectrodeBasis(label="FLAT", curvature=np.diag([2e6, 1e6, -3e6]))
        cfg = TrapConfiguration(
            species=yb,
            dc_electrodes=(
                (reference.basis_of("C"), 1.0),
                (flat, 1.0),
            ),
            rf_basis=reference.rf_basis,
            rf_drive=reference.rf_drive,
        )
        with pytest.raises(NoSolution):
            solve_rotation_ratio(cfg, ("C",), ("FLAT",))

    def test_axis_rotation_angle_reference_groups(self, reference):
        only_c = reference.with_voltages({"NC": 0.0})
        only_nc = reference.with_voltages({"C": 0.0})
        assert axis_rotation_angle(only_c) == pytest.approx(-5.7, abs=1e-9)
        assert axis_rotation_angle(only_nc) == pytest.approx(22.9, abs=1e-9)
        assert axis_rotation_angle(reference) == pytest.approx(0.0, abs=1e-9)

    def test_axis_rotation_angle_degenerate(self, yb):
        cfg = simple_trap(dc_xx=2e6, dc_yy=-1e6, v_rf=0.0)
        # yy == zz and no cross term: direction undefined
        with pytest.raises(DegenerateAxes):
            axis_rotation_angle(cfg)


class TestStabilityBound:
    def test_documented_value(self):
        bound = stability_bound(10, TWO_PI * 1.5e6)
        assert bound == pytest.approx(TWO_PI * 0.688e6, abs=TWO_PI * 1e3)

    def test_formula(self):
        n, wy = 7, TWO_PI * 2.0e6
        assert stability_bound(n, wy) == pytest.approx(
            wy / (2.264 * n) ** 0.25, rel=1e-12
        )

    def test_planarity_from_bound(self):
        wy = TWO_PI * 1.5e6
        b = stability_bound(10, wy)
        assert planarity_from_bound(10, 0.9 * b, wy, 0.9 * b) == "planar"
        assert (
            planarity_from_bound(10, 1.1 * b, wy, 1.1 * b) == "three_dimensional"
        )
        assert (
            planarity_from_bound(10, 1.1 * b, wy, 0.9 * b) == "indeterminate"
        )

    def test_rejects_bad_input(self):
        with pytest.raises(InputError):
            stability_bound(0, 1.0)
        with pytest.raises(InputError):
            stability_bound(3, -1.0)


class TestRfGeometry:
    def test_rf_field_linear_in_position(self, reference):
        pos = np.array([1e-6, -2e-6, 3e-6])
        f1 = rf_field_at(reference, pos)
        f2 = rf_field_at(reference, 2.0 * pos)
        np.testing.assert_allclose(f2, 2.0 * f1, rtol=1e-12)

    def test_rf_null_at_origin_without_offset_field(self, reference):
        np.testing.assert_allclose(rf_null(reference), np.zeros(3), atol=1e-18)

    def test_rf_null_with_linear_field(self, yb):
        kappa = 6e7
        rf = ElectrodeBasis(
            label="RF",
            curvature=np.diag([0.0, kappa, -kappa]),
            linear_field=np.array([0.0, 12.0, -7.0]),
        )
        cfg = TrapConfiguration(
            species=yb,
            dc_electrodes=((diag_basis("DC", 2e6, 3e6), 1.0),),
            rf_basis=rf,
            rf_drive=RfDrive(v_rf=80.0, omega_rf=TWO_PI * 40e6),
        )
        null = rf_null(cfg)
        np.testing.assert_allclose(
            rf_field_at(cfg, null), np.zeros(3), atol=1e-9 * 12.0
        )


class TestFitQuadraticBasis:
    def test_round_trip_exact(self, reference, rng):
        basis = reference.basis_of("C")
        pts = rng.uniform(-1e-4, 1e-4, size=(40, 3))
        samples = [
            (p, 0.5 * p @ basis.curvature @ p + basis.linear_field @ p)
            for p in pts
        ]
        fit = fit_quadratic_basis(samples, label="refit")
        scale = np.abs(basis.curvature).max()
        np.testing.assert_allclose(
            fit.basis.curvature, basis.curvature, rtol=0, atol=1e-10 * scale
        )
        np.testing.assert_allclose(
            fit.basis.linear_field, basis.linear_field, atol=1e-8
        )
        assert fit.rms_residual < 1e-10

    def test_laplace_enforced_on_noisy_data(self, rng):
        c = np.diag([3e6, 1e6, -4e6])
        pts = rng.uniform(-1e-4, 1e-4, size=(60, 3))
        samples = [
            (p, 0.5 * p @ c @ p + rng.normal(0.0, 1e-9)) for p in pts
        ]
        fit = fit_quadratic_basis(samples)
        assert abs(np.trace(fit.basis.curvature)) < 1e-9 * np.linalg.norm(
            fit.basis.curvature
        )

    def test_rank_deficient_raises(self):
        pts = [np.array([float(i), 0.0, 0.0]) for i in range(12)]
        samples = [(p, 0.0) for p in pts]
        with pytest.raises(RankDeficient):
            fit_quadratic_basis(samples)
