import numpy as np
import pytest

from ltm.errors import CalibrationError, DomainError
from ltm.schemas import CalibrationStage, PowerCurve, SweptAxis
from ltm.services.calibration import (
    add_noise,
    fit_mecsel_linear,
    fit_mecsel_params,
    fit_rabi,
    fit_singlet_coupling,
    predict_threshold_shift,
)
from ltm.services.laser import default_grid, sweep_mecsel_pump
from ltm.services.parameters import with_overrides

GRID = default_grid(0.0, 4.0, 41)


@pytest.fixture
def truth(green_params):
    return with_overrides(green_params, {"mecsel.L_eg": 1.5e6, "mecsel.G_eg": 250e6})


def _curve(params, settings, gray=False, resonant=False):
    if gray:
        params = with_overrides(params, {"nv.Lambda_NV": 0.0})
    if resonant:
        params = with_overrides(params, {"nv.Delta": 0.0})
    return sweep_mecsel_pump(params, GRID, settings=settings)


class TestMecselStage:
    def test_linear_seed_is_exact_on_noiseless_data(self, truth, green_params, settings):
        result = fit_mecsel_linear(_curve(truth, settings, gray=True), green_params, settings)

        assert result.stage is CalibrationStage.MECSEL
        assert result.fitted["L_eg"].value == pytest.approx(1.5e6, rel=1e-6)
        assert result.fitted["G_eg"].value == pytest.approx(250e6, rel=1e-6)
        assert result.sse < 1e-12

    def test_full_fit_agrees_with_seed(self, truth, green_params, settings):
        curve = _curve(truth, settings, gray=True)

        seed = fit_mecsel_linear(curve, green_params, settings)
        result = fit_mecsel_params(curve, green_params, settings)

        for name in ("L_eg", "G_eg"):
            assert result.fitted[name].value == pytest.approx(seed.fitted[name].value, rel=2e-3)
        assert result.method == "Nelder-Mead"
        assert result.dataset_hash == seed.dataset_hash
        assert len(result.dataset_hash) == 64

    def test_requires_lasing_points(self, green_params, settings):
        curve = PowerCurve(swept_axis=SweptAxis.MECSEL_PUMP, points=[(p, 0.0) for p in GRID])

        with pytest.raises(CalibrationError, match="lasing points"):
            fit_mecsel_params(curve, green_params, settings)

    def test_rejects_nv_pump_sweeps(self, truth, green_params, settings):
        curve = _curve(truth, settings, gray=True).model_copy(update={"swept_axis": SweptAxis.NV_PUMP})

        with pytest.raises(CalibrationError, match="expected a mecsel_pump sweep"):
            fit_mecsel_linear(curve, green_params, settings)


class TestNVStages:
    def test_singlet_coupling_round_trip(self, green_params, settings):
        curve = _curve(green_params, settings)
        start = with_overrides(green_params, {"nv.G_S": 1e9})

        result = fit_singlet_coupling(curve, start, settings)

        assert result.stage is CalibrationStage.SINGLET
        assert result.fitted["G_S"].value == pytest.approx(463e6, rel=1e-3)
        assert result.flags == []

    def test_rabi_round_trip(self, green_params, settings):
        curve = _curve(green_params, settings, resonant=True)
        start = with_overrides(green_params, {"nv.Omega": 5e6})

        result = fit_rabi(curve, start, settings)

        assert result.stage is CalibrationStage.RABI
        assert result.fitted["Omega"].value == pytest.approx(0.83e6, rel=1e-3)

    def test_no_absorption_is_flagged(self, green_params, settings):
        curve = _curve(with_overrides(green_params, {"nv.G_S": 0.0}), settings)

        result = fit_singlet_coupling(curve, green_params, settings)

        assert result.fitted["G_S"].value < 1e-3 * settings.calibration_g_s_max
        assert "no NV absorption detected" in result.flags


def _sse(params, data, settings):
    model = sweep_mecsel_pump(params, GRID, settings=settings).outputs
    used = (model > settings.output_floor) | (data.outputs > settings.output_floor)
    return float(np.sum((model[used] - data.outputs[used]) ** 2))


def _assert_single_minimum(values, at):
    values = np.asarray(values)
    assert values[at] < 1e-20
    assert np.all(np.diff(values[: at + 1]) < 0)
    assert np.all(np.diff(values[at:]) > 0)


class TestIdentifiability:
    @pytest.mark.parametrize(
        "key,values",
        [
            ("mecsel.L_eg", [0.8e6, 1.0e6, 1.26e6, 1.5e6, 1.8e6]),
            ("mecsel.G_eg", [170e6, 180e6, 188.3e6, 200e6, 220e6]),
        ],
    )
    def test_gray_curve_pins_each_mecsel_rate(self, green_params, settings, key, values):
        data = _curve(green_params, settings, gray=True)
        gray = with_overrides(green_params, {"nv.Lambda_NV": 0.0})

        sse = [_sse(with_overrides(gray, {key: v}), data, settings) for v in values]

        _assert_single_minimum(sse, 2)

    def test_green_curve_pins_the_singlet_coupling(self, green_params, settings):
        data = _curve(green_params, settings)

        sse = [
            _sse(with_overrides(green_params, {"nv.G_S": g}), data, settings)
            for g in (150e6, 300e6, 463e6, 600e6, 800e6)
        ]

        _assert_single_minimum(sse, 2)

    def test_blue_curve_pins_the_rabi_frequency(self, blue_params, settings):
        data = sweep_mecsel_pump(blue_params, GRID, settings=settings)

        sse = [
            _sse(with_overrides(blue_params, {"nv.Omega": w}), data, settings)
            for w in (0.2e6, 0.4e6, 0.6e6, 0.83e6, 1.1e6, 1.4e6)
        ]

        _assert_single_minimum(sse, 3)


class TestNoise:
    def test_noise_is_reproducible_and_spares_dark_points(self, gray_params, settings):
        curve = _curve(gray_params, settings)

        first = add_noise(curve, 0.01, seed=3)
        second = add_noise(curve, 0.01, seed=3)

        assert first.points == second.points
        dark = curve.outputs == 0.0
        assert np.all(first.outputs[dark] == 0.0)
        assert not np.allclose(first.outputs[~dark], curve.outputs[~dark], rtol=1e-6, atol=0)

    def test_negative_level(self, gray_params, settings):
        with pytest.raises(DomainError):
            add_noise(_curve(gray_params, settings), -0.1)


@pytest.mark.slow
class TestStagedRoundTrip:
    def test_recovers_truth_from_noisy_curves(self, green_params, settings):
        recovered = {"L_eg": [], "G_eg": [], "G_S": [], "Omega": []}
        curves = {
            "gray": _curve(green_params, settings, gray=True),
            "green": _curve(green_params, settings),
            "blue": _curve(green_params, settings, resonant=True),
        }
        start = with_overrides(
            green_params, {"mecsel.L_eg": 2e6, "mecsel.G_eg": 220e6, "nv.G_S": 1e9, "nv.Omega": 5e6}
        )

        for seed in range(20):
            mecsel = fit_mecsel_params(add_noise(curves["gray"], 0.01, seed), start, settings)
            params = with_overrides(
                start, {"mecsel.L_eg": mecsel.fitted["L_eg"].value, "mecsel.G_eg": mecsel.fitted["G_eg"].value}
            )
            singlet = fit_singlet_coupling(add_noise(curves["green"], 0.01, seed), params, settings)
            params = with_overrides(params, {"nv.G_S": singlet.fitted["G_S"].value})
            rabi = fit_rabi(add_noise(curves["blue"], 0.01, seed), params, settings)
            for result in (mecsel, singlet, rabi):
                for name, value in result.fitted.items():
                    recovered[name].append(value.value)

        assert np.median(recovered["L_eg"]) == pytest.approx(1.26e6, rel=0.01)
        assert np.median(recovered["G_eg"]) == pytest.approx(188.3e6, rel=0.01)
        assert np.median(recovered["G_S"]) == pytest.approx(463e6, rel=0.01)
        assert np.median(recovered["Omega"]) == pytest.approx(0.83e6, rel=0.03)

    def test_predicted_threshold_shift(self, green_params, settings):
        shift = predict_threshold_shift(green_params, settings=settings)

        assert shift.swept_axis is SweptAxis.MECSEL_PUMP
        assert shift.off_resonant == pytest.approx(1.53, rel=0.10)
        assert shift.resonant == pytest.approx(1.82, rel=0.10)
        assert shift.resonant > shift.off_resonant

    def test_predicted_turn_off_shift(self, nv_sweep_params, settings):
        shift = predict_threshold_shift(nv_sweep_params, SweptAxis.NV_PUMP, settings=settings)

        assert shift.swept_axis is SweptAxis.NV_PUMP
        assert shift.off_resonant == pytest.approx(4.3, rel=0.15)
        assert shift.resonant < shift.off_resonant
