import dataclasses

import numpy as np
import pytest

from multilayer_gpt import disks, inverse
from multilayer_gpt.conf import settings as app_settings
from multilayer_gpt.constants import Stage
from multilayer_gpt.disks import Certificate, MultipoleSpectrum
from multilayer_gpt.exceptions import (
    CertificateFailed,
    ConfigError,
    DegenerateDipole,
    GeometryConflict,
    IllConditionedFit,
    NoConvergence,
    PeelExhausted,
)
from multilayer_gpt.inverse import InverseReport, MeasurementSet
from multilayer_gpt.models import ConcentricDisks, HarmonicBackground


def circle_points(radius, count, start=0.0, stop=2.0 * np.pi):
    theta = start + (stop - start) * np.arange(count) / count
    return np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)


def measure(structure, background, radius=2.0, count=64):
    points = circle_points(radius, count)
    field = disks.field_eval(structure, background, points)
    values = background.evaluate(points) + field
    return MeasurementSet(
        points,
        values,
        background,
        enclosing_radius=structure.outer_radius,
        enclosing_center=structure.center,
    )


def with_noise(measurements, level, seed):
    rng = np.random.default_rng(seed)
    perturbation = measurements.perturbation()
    scale = level * np.sqrt(np.mean(perturbation**2))
    return MeasurementSet(
        measurements.points,
        measurements.values + rng.normal(0.0, scale, len(measurements)),
        measurements.background,
        enclosing_radius=measurements.enclosing_radius,
        enclosing_center=measurements.enclosing_center,
        noise_level=level,
    )


def assert_recovers(report, structure):
    np.testing.assert_allclose(report.center, structure.center, atol=1e-6)
    np.testing.assert_allclose(report.radii, structure.radii, rtol=1e-6)
    np.testing.assert_allclose(report.sigmas, structure.sigmas, rtol=1e-5)


@pytest.fixture()
def measurements(three_layer, alternating_background):
    return measure(three_layer, alternating_background)


class TestMeasurementSet:
    def test_point_inside_enclosing_circle(self):
        with pytest.raises(GeometryConflict):
            MeasurementSet(
                np.array([[0.5, 0.0]]), np.array([1.0]), enclosing_radius=1.0
            )

    def test_length_mismatch(self):
        with pytest.raises(GeometryConflict):
            MeasurementSet(np.array([[2.0, 0.0], [0.0, 2.0]]), np.array([1.0]))

    def test_tabulated_background_only(self):
        measurements = MeasurementSet(
            np.array([[2.0, 0.0]]), np.array([1.5]), tabulated=np.array([1.0])
        )

        np.testing.assert_allclose(measurements.perturbation(), [0.5])
        with pytest.raises(ConfigError):
            measurements.require_background()

    def test_translated(self, measurements):
        moved = measurements.translated((1.0, -0.5))
        np.testing.assert_allclose(
            moved.perturbation(), measurements.perturbation(), atol=1e-12
        )

    def test_residual_floor_follows_noise(self, measurements):
        noisy = with_noise(measurements, 1e-4, seed=1)

        assert inverse.residual_floor(measurements) == app_settings.RESIDUAL_FLOOR
        assert inverse.residual_floor(noisy) == pytest.approx(3e-4)


class TestExtractMultipoles:
    def test_noiseless(self, measurements, three_layer):
        spectrum = inverse.extract_multipoles(measurements, (0.0, 0.0), 12)

        assert spectrum.orders == list(range(1, 13))
        for n in spectrum.orders:
            expected = disks.multipole(three_layer, n)
            assert spectrum[n] == pytest.approx(expected, rel=1e-6)
        assert spectrum.residual <= 1e-12

    def test_zero_data(self, full_background):
        points = 2.0 * np.stack(
            [np.cos(np.linspace(0, 6, 40)), np.sin(np.linspace(0, 6, 40))], axis=1
        )
        measurements = MeasurementSet(
            points, full_background.evaluate(points), full_background
        )

        spectrum = inverse.extract_multipoles(measurements, (0.0, 0.0), 12)

        np.testing.assert_allclose(list(spectrum.values.values()), 0.0, atol=1e-14)

    def test_too_few_samples(self, three_layer, full_background):
        measurements = measure(three_layer, full_background, count=20)

        with pytest.raises(IllConditionedFit):
            inverse.extract_multipoles(measurements, (0.0, 0.0), 12)

    def test_condition_limit(self, settings, measurements):
        settings.MULTILAYER_GPT_FIT_CONDITION_MAX = 1.0

        with pytest.raises(IllConditionedFit):
            inverse.extract_multipoles(measurements, (0.0, 0.0), 12)

    def test_quarter_arc_with_ridge(self):
        structure = ConcentricDisks((1.0, 0.5), (2.0, 5.0))
        background = HarmonicBackground.from_terms(
            [(1, 1.0, 0.5), (2, 0.3, -0.2), (3, 0.1, 0.05)]
        )
        points = circle_points(2.0, 64, stop=np.pi / 2.0)
        values = background.evaluate(points) + disks.field_eval(
            structure, background, points
        )
        measurements = MeasurementSet(points, values, background)

        spectrum = inverse.extract_multipoles(measurements, (0.0, 0.0), 3, 1e-12)

        for n in (1, 2, 3):
            expected = disks.multipole(structure, n)
            assert spectrum[n] == pytest.approx(expected, rel=1e-3)


class TestLocate:
    def test_origin(self, three_layer):
        background = HarmonicBackground.linear(1.0, 0.5)
        measurements = measure(three_layer, background, radius=3.0)

        center = inverse.locate(measurements)

        np.testing.assert_allclose(center, (0.0, 0.0), atol=1e-6)

    def test_shifted(self, three_layer, linear_background):
        shifted = three_layer.translated((0.3, -0.2))

        center = inverse.locate(measure(shifted, linear_background, radius=10.0))

        np.testing.assert_allclose(center, (0.3, -0.2), atol=1e-6)

    def test_shifted_with_every_order(self, three_layer, alternating_background):
        shifted = three_layer.translated((0.3, -0.2))

        estimate = inverse.locate_center(
            measure(shifted, alternating_background, radius=3.0)
        )

        np.testing.assert_allclose(estimate.center, (0.3, -0.2), atol=1e-6)
        assert estimate.residual <= app_settings.RESIDUAL_FLOOR

    @pytest.mark.parametrize("count", [64, 65, 96, 128])
    def test_constant_phase_background(self, three_layer, full_background, count):
        measurements = measure(three_layer, full_background, count=count)

        estimate = inverse.locate_center(measurements)

        np.testing.assert_allclose(estimate.center, (0.0, 0.0), atol=1e-6)
        assert estimate.residual <= app_settings.RESIDUAL_FLOOR

    def test_translation_covariance(self, three_layer):
        background = HarmonicBackground.linear(1.0, 0.5)
        measurements = measure(three_layer, background, radius=5.0)
        offset = np.array([1.0, -0.5])

        center = inverse.locate(measurements)
        moved = inverse.locate(measurements.translated(offset))

        np.testing.assert_allclose(np.array(moved) - center, offset, atol=1e-6)

    def test_no_single_center_fits(self, alternating_background):
        left = ConcentricDisks((0.3,), (4.0,), center=(-0.5, 0.0))
        right = ConcentricDisks((0.3,), (6.0,), center=(0.5, 0.0))
        points = circle_points(3.0, 64)
        values = (
            alternating_background.evaluate(points)
            + disks.field_eval(left, alternating_background, points)
            + disks.field_eval(right, alternating_background, points)
        )
        measurements = MeasurementSet(points, values, alternating_background)

        with pytest.raises(NoConvergence):
            inverse.locate(measurements)

    def test_vanishing_perturbation(self, linear_background):
        points = np.array([[3.0, 0.0], [0.0, 3.0], [-3.0, 0.0], [0.0, -3.0]])
        measurements = MeasurementSet(
            points, linear_background.evaluate(points), linear_background
        )

        with pytest.raises(DegenerateDipole):
            inverse.locate(measurements)


class TestRecoverRadii:
    def test_single_layer(self):
        structure = ConcentricDisks((0.8,), (3.0,))
        spectrum = disks.multipole_spectrum(structure, range(1, 9))

        estimate = inverse.recover_radii(spectrum, 1)

        assert estimate.radii[0] == pytest.approx(0.8, rel=1e-8)
        assert estimate.sigmas[0] == pytest.approx(3.0, rel=1e-8)
        assert estimate.peeled_radii[0] == pytest.approx(0.8, rel=1e-8)
        assert not estimate.repaired

    def test_three_layers(self, three_layer):
        spectrum = disks.multipole_spectrum(three_layer, range(1, 21))

        estimate = inverse.recover_radii(spectrum, 3)

        np.testing.assert_allclose(estimate.radii, three_layer.radii, rtol=1e-6)
        np.testing.assert_allclose(estimate.sigmas, three_layer.sigmas, rtol=1e-5)

    def test_peel_orders_radii(self, three_layer):
        spectrum = disks.multipole_spectrum(three_layer, range(1, 21))

        radii, lambdas, _ = inverse.peel(spectrum, 3)

        assert radii[0] == pytest.approx(1.0, rel=1e-6)
        assert radii[0] > radii[1] > radii[2] > 0
        assert all(abs(lam) > 0.5 for lam in lambdas)

    def test_no_signal(self):
        spectrum = MultipoleSpectrum((0.0, 0.0), {n: 0.0 for n in range(1, 9)})

        with pytest.raises(PeelExhausted):
            inverse.recover_radii(spectrum, 2)

    def test_spectrum_below_its_errors(self, three_layer):
        exact = disks.multipole_spectrum(three_layer, range(1, 13))
        buried = MultipoleSpectrum(
            exact.center, exact.values, {n: 1.0 for n in exact.orders}
        )

        with pytest.raises(PeelExhausted):
            inverse.recover_radii(buried, 3)

    def test_stopped_refinement_is_not_converged(self, mocker, three_layer):
        spectrum = disks.multipole_spectrum(three_layer, range(1, 21))
        solve = inverse._solve
        mocker.patch.object(
            inverse,
            "_solve",
            side_effect=lambda residuals, start, max_nfev=None: solve(
                residuals, start, max_nfev=1
            ),
        )

        estimate = inverse.recover_radii(spectrum, 3)

        assert not estimate.converged

    @pytest.mark.parametrize("radii", [(1.0, 1.0), (1.0, 0.0)])
    def test_packing_at_ratio_edges(self, radii):
        packed = inverse._pack(radii, (2.0, 5.0))

        assert np.all(np.isfinite(packed))


class TestRecoverSigmas:
    @pytest.fixture()
    def two_layer(self):
        structure = ConcentricDisks((1.0, 0.5), (2.0, 5.0))
        return structure, disks.multipole_spectrum(structure, range(1, 5))

    def test_two_layers(self, two_layer):
        structure, spectrum = two_layer

        estimate = inverse.recover_sigmas(spectrum, structure.radii)

        np.testing.assert_allclose(estimate.sigmas, structure.sigmas, rtol=1e-8)
        assert estimate.orders == (1, 2)
        assert estimate.attempts == 1
        assert estimate.certificate.passed()

    def test_initial_sigmas_are_a_fixed_point(self, two_layer):
        structure, spectrum = two_layer

        estimate = inverse.recover_sigmas(
            spectrum, structure.radii, initial_sigmas=structure.sigmas
        )

        np.testing.assert_allclose(estimate.sigmas, structure.sigmas, rtol=1e-10)

    def test_walks_order_combinations(self, mocker, two_layer):
        structure, spectrum = two_layer
        mocker.patch.object(Certificate, "passed", side_effect=[False, True])

        estimate = inverse.recover_sigmas(spectrum, structure.radii)

        assert estimate.orders == (1, 3)
        assert estimate.attempts == 2
        np.testing.assert_allclose(estimate.sigmas, structure.sigmas, rtol=1e-8)

    def test_vanishing_right_determinant(self):
        radii = (1.0, 0.7, 0.4)
        lambdas = (1.5, 2.0, disks.r3_vanishing_lambda3(radii, 2.0))
        structure = ConcentricDisks.from_contrasts(radii, lambdas)
        spectrum = disks.multipole_spectrum(structure, range(1, 7))

        estimate = inverse.recover_sigmas(
            spectrum, radii, initial_sigmas=structure.sigmas
        )

        assert estimate.orders == (1, 2, 4)
        assert estimate.attempts == 2
        assert estimate.certificate.passed()
        assert estimate.converged
        assert estimate.residual < 1e-8
        np.testing.assert_allclose(estimate.sigmas, structure.sigmas, rtol=1e-8)

    def test_every_certificate_fails(self, mocker, two_layer):
        structure, spectrum = two_layer
        mocker.patch.object(Certificate, "passed", return_value=False)

        with pytest.raises(CertificateFailed):
            inverse.recover_sigmas(spectrum, structure.radii)

    def test_missing_orders(self, two_layer):
        structure, spectrum = two_layer

        with pytest.raises(CertificateFailed):
            inverse.recover_sigmas(spectrum, structure.radii, orders=(1, 7))


class TestFitStructure:
    def test_recovers_from_a_perturbed_start(self, measurements, three_layer):
        fit = inverse.fit_structure(
            measurements, (0.01, -0.01), (1.01, 0.59, 0.31), (2.1, 4.9, 0.52)
        )

        np.testing.assert_allclose(fit.center, (0.0, 0.0), atol=1e-7)
        np.testing.assert_allclose(fit.radii, three_layer.radii, rtol=1e-6)
        np.testing.assert_allclose(fit.sigmas, three_layer.sigmas, rtol=1e-5)
        assert fit.residual <= app_settings.RESIDUAL_FLOOR

    def test_fixed_center(self, measurements, three_layer):
        fit = inverse.fit_structure(
            measurements,
            (0.0, 0.0),
            (1.01, 0.59, 0.31),
            (2.1, 4.9, 0.52),
            fixed_center=True,
        )

        assert fit.center == (0.0, 0.0)
        np.testing.assert_allclose(fit.radii, three_layer.radii, rtol=1e-7)


class TestInvert:
    def test_three_layers(self, measurements, three_layer):
        report = inverse.invert(measurements, 3)

        assert_recovers(report, three_layer)
        assert report.certificates_passed
        assert not report.misfit
        assert report.max_residual <= app_settings.MISFIT_FACTOR
        assert set(report.converged) == {"locate", "radii", "sigmas", "structure"}

    def test_known_center(self, measurements, three_layer):
        options = inverse.InversionOptions(center=(0.0, 0.0))

        report = inverse.invert(measurements, 3, options)

        assert report.center == (0.0, 0.0)
        np.testing.assert_allclose(report.radii, three_layer.radii, rtol=1e-6)
        assert "locate" not in report.converged

    def test_shifted_center(self, three_layer, alternating_background):
        shifted = three_layer.translated((0.3, -0.2))

        report = inverse.invert(measure(shifted, alternating_background, 3.0), 3)

        assert_recovers(report, shifted)

    def test_measurement_radius_five(self, alternating_background):
        structure = ConcentricDisks((1.0, 0.6), (2.0, 5.0), center=(0.3, -0.2))

        report = inverse.invert(measure(structure, alternating_background, 5.0), 2)

        assert_recovers(report, structure)

    def test_exponential_background(self, three_layer, exponential_background):
        shifted = three_layer.translated((0.2, 0.1))

        report = inverse.invert(measure(shifted, exponential_background, 2.0), 3)

        assert_recovers(report, shifted)

    @pytest.mark.parametrize("count", [64, 65, 96, 128])
    def test_constant_phase_background(self, three_layer, full_background, count):
        measurements = measure(three_layer, full_background, count=count)

        report = inverse.invert(measurements, 3)

        assert_recovers(report, three_layer)

    def test_scaling_the_background(self, measurements):
        scaled = MeasurementSet(
            measurements.points,
            7.5 * measurements.values,
            measurements.background.scaled(7.5),
            enclosing_radius=measurements.enclosing_radius,
        )

        report = inverse.invert(measurements, 3)
        rescaled = inverse.invert(scaled, 3)

        np.testing.assert_allclose(rescaled.center, report.center, atol=1e-8)
        np.testing.assert_allclose(rescaled.radii, report.radii, rtol=1e-7)
        np.testing.assert_allclose(rescaled.sigmas, report.sigmas, rtol=1e-6)

    def test_noise_sets_the_error(self, alternating_background):
        structure = ConcentricDisks((1.0, 0.7), (3.0, 0.5), center=(0.1, -0.1))
        clean = measure(structure, alternating_background, radius=1.6, count=128)
        truth = np.array(structure.radii + structure.sigmas)

        medians = []
        for level in (1e-7, 1e-5):
            errors = []
            for seed in range(8):
                report = inverse.invert(with_noise(clean, level, seed), 2)
                estimate = np.array(report.radii + report.sigmas)
                errors.append(np.max(np.abs(estimate - truth) / truth))
            medians.append(np.median(errors))

        assert medians[1] < 1e-2
        assert medians[0] < medians[1] / 5.0

    def test_wrong_layer_count_is_a_misfit(self, three_layer):
        spectrum = disks.multipole_spectrum(three_layer, range(1, 13))
        estimate = inverse.recover_radii(spectrum, 2)

        residuals = inverse.order_residuals(spectrum, estimate.radii, estimate.sigmas)

        assert max(abs(v) for v in residuals.values()) > app_settings.MISFIT_FACTOR

    def test_unconverged_stage_is_reported(self, mocker, measurements):
        recover_radii = inverse.recover_radii
        mocker.patch.object(
            inverse,
            "recover_radii",
            side_effect=lambda *args, **kwargs: dataclasses.replace(
                recover_radii(*args, **kwargs), converged=False
            ),
        )

        report = inverse.invert(measurements, 3)

        assert report.converged["radii"] is False
        assert report.converged["sigmas"] is True
        assert "radii stage stopped before converging" in report.warnings

    def test_certificate_at_final_parameters(self, mocker, measurements):
        mocker.patch.object(Certificate, "passed", side_effect=[True, False])

        report = inverse.invert(measurements, 3)

        assert not report.certificates_passed
        assert any("certificate fails" in warning for warning in report.warnings)

    def test_failing_stage_is_recorded(self, mocker, measurements):
        mocker.patch.object(inverse, "peel", side_effect=PeelExhausted("nothing left"))

        with pytest.raises(PeelExhausted) as excinfo:
            inverse.invert(measurements, 3)

        assert excinfo.value.stage is Stage.radii

    def test_no_center_is_a_locate_failure(self, mocker, measurements):
        mocker.patch.object(
            inverse, "locate_center", side_effect=NoConvergence("no center")
        )

        with pytest.raises(NoConvergence) as excinfo:
            inverse.invert(measurements, 3)

        assert excinfo.value.stage is Stage.locate

    def test_options_from_dict(self):
        options = inverse.InversionOptions.from_dict({"n_max": 8, "orders": [1, 2, 4]})

        assert options.orders == (1, 2, 4)
        with pytest.raises(ConfigError):
            inverse.InversionOptions.from_dict({"nmax": 8})

    def test_report_round_trip(self, measurements):
        report = inverse.invert(measurements, 3)

        assert InverseReport.from_dict(report.to_dict()) == report
