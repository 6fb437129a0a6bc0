import io
import json
import math

import pytest

from ltm.errors import DataFileError
from ltm.schemas import (
    CalibrationResult,
    CalibrationStage,
    FittedValue,
    LorentzianFit,
    LorentzianResonance,
    ModelParams,
    OdmrSpectrum,
    PowerCurve,
    SweptAxis,
)
from ltm.utils import (
    calibration_report,
    fit_report,
    params_hash,
    points_hash,
    read_fit_report,
    read_odmr,
    read_power_curve,
    read_sensor_registry,
    write_json,
    write_odmr,
    write_power_curve,
)


@pytest.fixture
def curve():
    return PowerCurve(
        swept_axis=SweptAxis.NV_PUMP,
        points=[(0.0, 0.1), (1.0, 0.05), (2.0, 0.0)],
        fixed_params=ModelParams(),
        label="nv-pump",
    )


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestPowerCurveFiles:
    def test_write_then_read(self, tmp_path, curve):
        path = tmp_path / "curve.csv"
        with open(path, "w", encoding="utf-8", newline="") as stream:
            write_power_curve(curve, stream)

        loaded = read_power_curve(path)

        assert loaded.points == curve.points
        assert loaded.swept_axis is SweptAxis.NV_PUMP
        assert loaded.label == "nv-pump"

    def test_metadata_lines(self, curve):
        stream = io.StringIO()
        write_power_curve(curve, stream)
        lines = stream.getvalue().splitlines()

        assert lines[0] == "# label: nv-pump"
        assert lines[1] == "# swept_axis: nv_pump"
        assert lines[2] == f"# params_hash: {params_hash(ModelParams())}"
        assert lines[3] == "pump_w,output_w"

    def test_no_metadata(self, curve):
        stream = io.StringIO()
        write_power_curve(curve, stream, metadata=False)

        assert stream.getvalue().splitlines()[0] == "pump_w,output_w"

    def test_axis_argument_wins_over_metadata(self, tmp_path):
        path = _write(tmp_path, "c.csv", "# swept_axis: nv_pump\npump_w,output_w\n0,1\n1,2\n")

        assert read_power_curve(path, SweptAxis.MECSEL_PUMP).swept_axis is SweptAxis.MECSEL_PUMP

    @pytest.mark.parametrize(
        "body,message",
        [
            ("pump,out\n0,1\n", "expected header"),
            ("pump_w,output_w\n0,1\n0,2\n", "strictly ascending"),
            ("pump_w,output_w\n0,-1\n", "negative output"),
            ("pump_w,output_w\n0,abc\n", "not a number"),
            ("pump_w,output_w\n0,1,2\n", "expected 2 columns"),
            ("pump_w,output_w\n", "no data rows"),
            ("# only a comment\n", "no header row"),
        ],
    )
    def test_malformed_files(self, tmp_path, body, message):
        path = _write(tmp_path, "bad.csv", body)

        with pytest.raises(DataFileError, match=message):
            read_power_curve(path)

    def test_errors_carry_the_line(self, tmp_path):
        path = _write(tmp_path, "bad.csv", "# label: x\npump_w,output_w\n0,1\n1,oops\n")

        with pytest.raises(DataFileError) as exc:
            read_power_curve(path)
        assert exc.value.line == 4
        assert str(exc.value).startswith(f"{path}:4:")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFileError, match="cannot open"):
            read_power_curve(tmp_path / "missing.csv")


class TestOdmrFiles:
    def test_write_then_read(self, tmp_path):
        spectrum = OdmrSpectrum(points=[(-1e6, 0.2), (0.0, 0.1), (1e6, 0.2)], label="odmr")
        path = tmp_path / "odmr.csv"
        with open(path, "w", encoding="utf-8", newline="") as stream:
            write_odmr(spectrum, stream)

        loaded = read_odmr(path, ModelParams())

        assert loaded.points == spectrum.points
        assert loaded.label == "odmr"
        assert loaded.params_snapshot == ModelParams()


class TestSensorRegistry:
    def test_reads_flags(self, tmp_path):
        path = _write(
            tmp_path,
            "sensors.csv",
            "name,sensitivity_t_sqrthz,dynamic_range_t,flux_concentrator,closed_loop\n"
            "squid,1e-15,1e-6,yes,no\n"
            "vapor cell,1e-13,1e-7,0,1\n",
        )

        sensors = read_sensor_registry(path)

        assert [s.name for s in sensors] == ["squid", "vapor cell"]
        assert sensors[0].flux_concentrator and not sensors[0].closed_loop
        assert sensors[1].closed_loop
        assert all(s.flagged for s in sensors)

    def test_bad_flag(self, tmp_path):
        path = _write(
            tmp_path,
            "sensors.csv",
            "name,sensitivity_t_sqrthz,dynamic_range_t,flux_concentrator,closed_loop\nx,1e-12,1e-4,maybe,no\n",
        )

        with pytest.raises(DataFileError, match="not a boolean"):
            read_sensor_registry(path)

    def test_non_positive_values(self, tmp_path):
        path = _write(
            tmp_path,
            "sensors.csv",
            "name,sensitivity_t_sqrthz,dynamic_range_t,flux_concentrator,closed_loop\nx,0,1e-4,no,no\n",
        )

        with pytest.raises(DataFileError, match="must be positive"):
            read_sensor_registry(path)


class TestReports:
    def test_fit_report_round_trip(self, tmp_path):
        fit = LorentzianFit(
            baseline=8.39e16,
            resonances=[LorentzianResonance(center=0.0, fwhm=7.85e6, contrast=0.97)],
            residual_rms=1.0,
            covariance=[[1.0]],
            parameter_names=["baseline"],
            bounds={"baseline": (0.0, float("inf"))},
            flags=["contrast_at_bound:1"],
            iterations=12,
        )
        path = tmp_path / "fit.json"
        with open(path, "w", encoding="utf-8") as stream:
            write_json(fit_report(fit), stream)

        payload = json.loads(path.read_text(encoding="utf-8"))
        assert payload["bounds"]["baseline"] == [0.0, None]
        loaded = read_fit_report(path)
        assert loaded.resonances == fit.resonances
        assert loaded.baseline == fit.baseline
        assert loaded.flags == fit.flags

    def test_undefined_covariance_survives_a_round_trip(self, tmp_path):
        fit = LorentzianFit(
            baseline=8.39e16,
            resonances=[LorentzianResonance(center=0.0, fwhm=7.85e6, contrast=1.0)],
            residual_rms=0.0,
            covariance=[[1.0, float("nan")], [float("nan"), 4.0]],
            parameter_names=["baseline", "center_1"],
        )
        path = tmp_path / "fit.json"
        with open(path, "w", encoding="utf-8") as stream:
            write_json(fit_report(fit), stream)

        loaded = read_fit_report(path)

        assert loaded.covariance[0][0] == 1.0
        assert math.isnan(loaded.covariance[0][1])
        assert loaded.covariance[1][1] == 4.0

    def test_not_a_fit_report(self, tmp_path):
        path = _write(tmp_path, "x.json", '{"resonances": []}')

        with pytest.raises(DataFileError, match="not a fit report"):
            read_fit_report(path)

    def test_invalid_json(self, tmp_path):
        path = _write(tmp_path, "x.json", "{")

        with pytest.raises(DataFileError, match="invalid JSON"):
            read_fit_report(path)

    def test_infinities_become_null(self):
        stream = io.StringIO()

        write_json({"eta": float("inf"), "values": [1.0, float("nan")]}, stream)

        assert json.loads(stream.getvalue()) == {"eta": None, "values": [1.0, None]}

    def test_calibration_report(self):
        result = CalibrationResult(
            fitted={"G_S": FittedValue(value=463e6, std_error=None)},
            sse=1e-6,
            iterations=40,
            stage=CalibrationStage.SINGLET,
            method="grid scan + bounded Brent",
            n_points=25,
            dataset_hash=points_hash([(1.0, 2.0)]),
        )

        report = calibration_report(result)

        assert report["stage"] == "singlet"
        assert report["fitted"]["G_S"] == {"value": 463e6, "std_error": None}
        assert len(report["dataset_hash"]) == 64

    def test_hashes_are_stable(self):
        assert params_hash(ModelParams()) == params_hash(ModelParams())
        assert points_hash([(1.0, 2.0)]) != points_hash([(1.0, 2.5)])
