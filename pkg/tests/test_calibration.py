"""Imperfection-coefficient fitting and basis correction."""

import math

import numpy as np
import pytest

from planartrap.calibration import (
    CalibrationRecord,
    apply_correction,
    correct_configuration,
    correction_offset,
    fit_eta,
    radial_eta_pair,
    records_from_rows,
    simulate_counterpart,
)
from planartrap.constants import TWO_PI
from planartrap.errors import (
    InputError,
    InsufficientVariation,
    MixedConditions,
    RotationDrift,
    UnknownElectrode,
    UnstableAxis,
)
from planartrap.trap import secular_frequencies


def synthetic_records(template, group, voltages, axis, eta, noise=None, rng=None):
    """Measured omega^2 = eta * simulated omega^2, optional relative
    frequency noise."""
    records = []
    for v in voltages:
        rec0 = CalibrationRecord(
            voltages={lbl: template.voltage_of(lbl) for lbl in template.dc_labels}
            | {group: v},
            measured_frequency=1.0,
            axis=axis,
        )
        w_sim = simulate_counterpart(rec0, template)
        w_meas = math.sqrt(eta) * w_sim
        if noise:
            w_meas *= 1.0 + noise * rng.standard_normal()
        records.append(
            CalibrationRecord(
                voltages=rec0.voltages, measured_frequency=w_meas, axis=axis
            )
        )
    return records


class TestRecords:
    def test_records_from_rows_fills_base_voltages(self, reference):
        rows = [
            {
                "electrode_group": "C",
                "voltage": 0.9,
                "axis": "y",
                "measured_frequency": TWO_PI * 1.49e6,
                "sigma": None,
            }
        ]
        (rec,) = records_from_rows(rows, reference)
        assert rec.voltages["C"] == 0.9
        assert rec.voltages["NC"] == reference.voltage_of("NC")

    def test_unknown_group_rejected(self, reference):
        rows = [
            {
                "electrode_group": "Q",
                "voltage": 1.0,
                "axis": "y",
                "measured_frequency": 1.0,
            }
        ]
        with pytest.raises(UnknownElectrode):
            records_from_rows(rows, reference)

    def test_record_validation(self):
        with pytest.raises(InputError):
            CalibrationRecord(voltages={}, measured_frequency=1.0, axis="w")
        with pytest.raises(InputError):
            CalibrationRecord(voltages={}, measured_frequency=-1.0, axis="x")


class TestFitEta:
    def test_noise_free_recovery_exact(self, reference):
        for eta in (0.87, 1.11, 1.92):
            records = synthetic_records(
                reference, "C", np.linspace(0.9, 1.1, 6), "x", eta
            )
            fit = fit_eta(records, reference)
            assert fit.eta == pytest.approx(eta, abs=1e-10)
            assert abs(fit.intercept) < 1e-6 * (TWO_PI * 1e6) ** 2
            assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
            assert fit.electrode == "C"
            assert fit.axis == "x"

    def test_reorder_invariance(self, reference):
        records = synthetic_records(
            reference, "C", np.linspace(0.85, 1.15, 7), "y", 1.05
        )
        fit_fwd = fit_eta(records, reference)
        fit_rev = fit_eta(records[::-1], reference)
        assert fit_fwd.eta == pytest.approx(fit_rev.eta, rel=1e-12)
        assert fit_fwd.intercept == pytest.approx(fit_rev.intercept, rel=1e-9)

    def test_exact_affine_data_recovered(self, reference):
        """Points exactly on y = eta x + b come back with both coefficients."""
        eta, b_rel = 1.3, 0.05
        voltages = np.linspace(0.7, 1.25, 8)
        records = []
        for v in voltages:
            rec0 = CalibrationRecord(
                voltages={"C": v, "NC": reference.voltage_of("NC")},
                measured_frequency=1.0,
                axis="x",
            )
            w2 = simulate_counterpart(rec0, reference) ** 2
            records.append(
                CalibrationRecord(
                    voltages=rec0.voltages,
                    measured_frequency=math.sqrt(eta * w2 + b_rel * w2),
                    axis="x",
                )
            )
        fit = fit_eta(records, reference)
        # the offset term is proportional to x here, so it folds into the
        # slope; a genuinely affine set needs a constant b
        assert fit.eta == pytest.approx(eta + b_rel, abs=1e-10)
        b_const = 0.05 * simulate_counterpart(records[0], reference) ** 2
        records2 = [
            CalibrationRecord(
                voltages=r.voltages,
                measured_frequency=math.sqrt(
                    eta * simulate_counterpart(r, reference) ** 2 + b_const
                ),
                axis="x",
            )
            for r in records
        ]
        fit2 = fit_eta(records2, reference)
        assert fit2.eta == pytest.approx(eta, abs=1e-10)
        assert fit2.intercept == pytest.approx(b_const, rel=1e-9)

    def test_weights_change_heteroscedastic_fit(self, reference, rng):
        voltages = np.linspace(0.9, 1.1, 8)
        base = synthetic_records(reference, "C", voltages, "x", 1.1,
                                 noise=0.005, rng=rng)
        # tiny sigma on half the points makes them dominate a weighted fit
        weighted = [
            CalibrationRecord(
                voltages=r.voltages,
                measured_frequency=r.measured_frequency,
                axis=r.axis,
                sigma=(1e-4 if i < 4 else 1e3) * r.measured_frequency,
            )
            for i, r in enumerate(base)
        ]
        fit_w = fit_eta(weighted, reference)
        fit_u = fit_eta(base, reference)
        assert fit_w.eta != pytest.approx(fit_u.eta, rel=1e-12)

    def test_mixed_axes_rejected(self, reference):
        records = synthetic_records(
            reference, "C", np.linspace(0.9, 1.1, 4), "x", 1.0
        ) + synthetic_records(
            reference, "C", np.linspace(0.9, 1.1, 4), "y", 1.0
        )
        with pytest.raises(InputError):
            fit_eta(records, reference)

    def test_no_variation_rejected(self, reference):
        records = synthetic_records(reference, "C", [1.0, 1.0, 1.0], "x", 1.0)
        with pytest.raises(InsufficientVariation):
            fit_eta(records, reference)

    def test_two_stepped_groups_rejected(self, reference):
        a = synthetic_records(reference, "C", [0.9, 1.1], "x", 1.0)
        b = synthetic_records(reference, "NC", [5.0, 5.2], "x", 1.0)
        with pytest.raises(MixedConditions):
            fit_eta(a + b, reference)


class TestRadialPair:
    def test_pair_recovers_etas(self, reference):
        volts = np.linspace(0.92, 1.08, 6)
        rec_y = synthetic_records(reference, "C", volts, "y", 1.04)
        rec_z = synthetic_records(reference, "C", volts, "z", 0.97)
        pair = radial_eta_pair(rec_y, rec_z, reference)
        assert pair.eta_y == pytest.approx(1.04, abs=1e-10)
        assert pair.eta_z == pytest.approx(0.97, abs=1e-10)
        assert pair.eta_avg == pytest.approx((1.04 + 0.97) / 2.0, abs=1e-10)

    def test_rotation_drift_guard(self, reference):
        # stays stable down to 0.6 V but the axes rotate past the 2 deg guard
        volts = np.linspace(0.6, 1.25, 5)
        rec_y = synthetic_records(reference, "C", volts, "y", 1.0)
        rec_z = synthetic_records(reference, "C", volts, "z", 1.0)
        with pytest.raises(RotationDrift):
            radial_eta_pair(rec_y, rec_z, reference)


class TestCorrection:
    def test_identity_at_unit_eta(self, reference):
        basis = reference.basis_of("C")
        out = apply_correction(basis, 1.0, 1.0)
        np.testing.assert_array_equal(out.curvature, basis.curvature)

    def test_trace_zero_and_axial_exact(self, reference):
        basis = reference.basis_of("C")
        out = apply_correction(basis, 0.93, 1.07)
        c = out.curvature
        assert np.trace(c) == pytest.approx(0.0, abs=1e-9 * np.abs(c).max())
        assert c[0, 0] == pytest.approx(0.93 * basis.curvature[0, 0], rel=1e-14)
        assert c[1, 2] == pytest.approx(1.07 * basis.curvature[1, 2], rel=1e-14)
        # anisotropy scales exactly with the radial eta
        assert c[1, 1] - c[2, 2] == pytest.approx(
            1.07 * (basis.curvature[1, 1] - basis.curvature[2, 2]), rel=1e-12
        )

    def test_offset_closed_form(self, reference):
        basis = reference.basis_of("C")
        shift = correction_offset(basis, 0.93, 1.07)
        assert shift == pytest.approx(
            -(0.93 - 1.07) * basis.curvature[0, 0] / 2.0, rel=1e-14
        )

    def test_rejects_nonpositive_eta(self, reference):
        with pytest.raises(InputError):
            apply_correction(reference.basis_of("C"), 0.0, 1.0)

    def test_axial_frequency_scales_as_sqrt_eta(self, reference):
        """With RF off and both groups corrected, the axial frequency
        shrinks by exactly sqrt(eta_axial)."""
        eta_a = 0.97
        base = reference.with_rf_voltage(0.0)
        corrected = correct_configuration(
            base, {"C": (eta_a, 1.0), "NC": (eta_a, 1.0)}
        )
        w0 = secular_frequencies(base, allow_unstable=True)
        w1 = secular_frequencies(corrected, allow_unstable=True)
        assert w1.omega_x == pytest.approx(
            math.sqrt(eta_a) * w0.omega_x, rel=1e-12
        )

    def test_refit_after_axial_correction_returns_unity(self, reference):
        eta_a = 1.23
        records = synthetic_records(
            reference, "C", np.linspace(0.9, 1.1, 5), "x", eta_a
        )
        fit = fit_eta(records, reference)
        corrected = correct_configuration(
            reference, {lbl: (fit.eta, 1.0) for lbl in reference.dc_labels}
        )
        # same measured data against the corrected model
        refit = fit_eta(records, corrected)
        assert refit.eta == pytest.approx(1.0, abs=1e-9)

    def test_correct_configuration_leaves_other_groups(self, reference):
        out = correct_configuration(reference, {"C": (0.9, 1.1)})
        np.testing.assert_array_equal(
            out.basis_of("NC").curvature, reference.basis_of("NC").curvature
        )
        assert out.voltage_of("C") == reference.voltage_of("C")

    def test_unknown_label_rejected(self, reference):
        with pytest.raises(UnknownElectrode):
            correct_configuration(reference, {"Q": (1.0, 1.0)})


class TestSimulateCounterpart:
    def test_matches_direct_configuration(self, reference):
        rec = CalibrationRecord(
            voltages={"C": 1.0, "NC": 5.11},
            measured_frequency=TWO_PI * 1.5e6,
            axis="y",
        )
        w = simulate_counterpart(rec, reference)
        sec = secular_frequencies(reference)
        assert w == pytest.approx(sec.omega_y, rel=1e-12)

    def test_unstable_axis_raises(self, reference):
        rec = CalibrationRecord(
            voltages={"C": 3.0, "NC": 5.11},
            measured_frequency=TWO_PI * 0.3e6,
            axis="z",
        )
        with pytest.raises(UnstableAxis):
            simulate_counterpart(rec, reference)
