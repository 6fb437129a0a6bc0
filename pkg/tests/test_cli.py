import json

import pytest

from ltm.main import run
from ltm.utils import read_power_curve
from tests.conftest import DATA_DIR


def _json(capsys):
    return json.loads(capsys.readouterr().out)


class TestSimulate:
    def test_simulate_power_then_fit_threshold(self, tmp_path, capsys):
        curve_path = tmp_path / "gray.csv"

        code = run(["simulate-power", "--set", "nv.Lambda_NV=0", "--range", "0:2.5:51", "--label", "gray",
                    "-o", str(curve_path)])

        assert code == 0
        curve = read_power_curve(curve_path)
        assert curve.label == "gray"
        assert len(curve.points) == 51

        assert run(["fit-threshold", str(curve_path), "--points", "10"]) == 0
        payload = _json(capsys)
        assert payload["threshold_w"] == pytest.approx(1.209, rel=1e-3)
        assert payload["slope_efficiency"] == pytest.approx(0.2815, rel=2e-3)

    def test_output_is_deterministic(self, tmp_path, capsys):
        args = ["simulate-power", "--set", "nv.Lambda_NV=0", "--range", "1:2:5", "--noise", "0.01", "--seed", "4"]

        assert run(args) == 0
        first = capsys.readouterr().out
        assert run(args) == 0
        assert capsys.readouterr().out == first

    def test_plot_data(self, tmp_path):
        plot = tmp_path / "plot.dat"

        code = run(["simulate-power", "--set", "nv.Lambda_NV=0", "--range", "1:2:3", "--no-meta",
                    "-o", str(tmp_path / "c.csv"), "--plot-data", str(plot)])

        assert code == 0
        lines = plot.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "# pump_w output_w"
        assert len(lines) == 4
        assert (tmp_path / "c.csv").read_text(encoding="utf-8").startswith("pump_w,output_w")

    def test_simulate_odmr(self, tmp_path):
        path = tmp_path / "odmr.csv"

        code = run(["simulate-odmr", "--mecsel-pump", "1.65", "--range=-40e6:40e6:5", "-o", str(path)])

        assert code == 0
        rows = [line for line in path.read_text(encoding="utf-8").splitlines() if not line.startswith("#")]
        assert rows[0] == "frequency_hz,output_w"
        center = rows[3].split(",")
        assert float(center[0]) == 0.0
        assert float(center[1]) == 0.0

    def test_dry_run_prints_resolved_parameters(self, capsys):
        code = run(["simulate-power", "--config", str(DATA_DIR / "nv_pump_sweep.cfg"), "--set", "nv.Delta=0",
                    "--range", "0:1:2", "--dry-run"])

        assert code == 0
        out = capsys.readouterr().out
        assert "mecsel.G_eg = 354000000.0" in out
        assert "nv.Delta = 0.0" in out


class TestFitting:
    def test_calibrate_gray_curve(self, tmp_path, capsys):
        curve_path = tmp_path / "gray.csv"
        config_out = tmp_path / "fitted.cfg"
        run(["simulate-power", "--set", "nv.Lambda_NV=0", "--range", "0:3:31", "-o", str(curve_path)])

        code = run(["calibrate", "--gray", str(curve_path), "--write-config", str(config_out)])

        assert code == 0
        payload = _json(capsys)
        (stage,) = payload["stages"]
        assert stage["stage"] == "mecsel"
        assert stage["fitted"]["G_eg"]["value"] == pytest.approx(188.3e6, rel=2e-3)
        assert "mecsel.L_eg = " in config_out.read_text(encoding="utf-8")

    def test_blue_without_green(self, tmp_path, capsys):
        curve_path = tmp_path / "gray.csv"
        run(["simulate-power", "--set", "nv.Lambda_NV=0", "--range", "0:3:31", "-o", str(curve_path)])

        code = run(["calibrate", "--gray", str(curve_path), "--blue", str(curve_path)])

        assert code == 2
        assert "--blue needs --green" in capsys.readouterr().err

    def test_fit_odmr(self, tmp_path, capsys):
        spectrum = tmp_path / "odmr.csv"
        run(["simulate-odmr", "--mecsel-pump", "3", "--range=-20e6:20e6:81", "-o", str(spectrum)])

        code = run(["fit-odmr", str(spectrum), "-k", "1", "-o", str(tmp_path / "fit.json")])

        assert code == 0
        payload = json.loads((tmp_path / "fit.json").read_text(encoding="utf-8"))
        assert payload["resonances"][0]["center_hz"] == pytest.approx(0.0, abs=0.1e6)
        assert payload["parameter_names"] == ["baseline", "center_1", "fwhm_1", "contrast_1"]

        assert run(["sensitivity", "--fit", str(tmp_path / "fit.json")]) == 0
        report = _json(capsys)
        assert report["eta_general"] > 0
        assert report["gyromagnetic_ratio_hz_per_t"] == pytest.approx(2.8025e10, rel=1e-4)


class TestAnalysis:
    def test_sensitivity_from_numbers(self, capsys):
        code = run(["sensitivity", "--fwhm", "7.85e6", "--contrast", "0.97", "--baseline", "8.39e16"])

        assert code == 0
        report = _json(capsys)
        assert report["eta_general"] == pytest.approx(3.275e-13, rel=1e-3)
        assert report["dynamic_range"] == pytest.approx(280.1e-6, rel=5e-3)

    def test_sensitivity_from_watts(self, capsys):
        code = run(["sensitivity", "--fwhm", "7.85e6", "--contrast", "0.97", "--baseline-watts", "0.016"])

        assert code == 0
        assert _json(capsys)["inputs"]["baseline"] == pytest.approx(8.393e16, rel=1e-3)

    def test_sensitivity_needs_a_baseline(self, capsys):
        code = run(["sensitivity", "--fwhm", "7.85e6", "--contrast", "0.97"])

        assert code == 2
        assert "exactly one of --baseline" in capsys.readouterr().err

    def test_compare_sensors(self, tmp_path, capsys):
        registry = tmp_path / "sensors.csv"
        registry.write_text(
            "name,sensitivity_t_sqrthz,dynamic_range_t,flux_concentrator,closed_loop\n"
            "a,1e-12,1e-4,no,no\n"
            "b,1e-10,1e-2,no,no\n"
            "ltm,1e-13,1e-4,no,no\n",
            encoding="utf-8",
        )

        code = run(["compare-sensors", str(registry), "--reference", "ltm"])

        assert code == 0
        payload = _json(capsys)
        assert payload["reference"]["deviation_factor"] == pytest.approx(10.0)
        assert [p["name"] for p in payload["points"]] == ["a", "b"]

    def test_unknown_reference(self, tmp_path, capsys):
        registry = tmp_path / "sensors.csv"
        registry.write_text(
            "name,sensitivity_t_sqrthz,dynamic_range_t,flux_concentrator,closed_loop\na,1e-12,1e-4,no,no\n",
            encoding="utf-8",
        )

        assert run(["compare-sensors", str(registry), "--reference", "nope"]) == 2


class TestErrors:
    def test_invalid_parameters_exit_1(self, capsys):
        code = run(["simulate-power", "--set", "nv.L21=-1", "--range", "0:1:2"])

        assert code == 1
        assert capsys.readouterr().err.startswith("error: invalid parameters: negative rate L21")

    def test_bad_config_line(self, config_file, capsys):
        path = config_file("nv.L21 = 66.16e6\nbogus\n")

        assert run(["simulate-power", "--config", str(path), "--range", "0:1:2"]) == 1
        assert "line 2" in capsys.readouterr().err

    def test_missing_option_is_a_usage_error(self, capsys):
        assert run(["simulate-power"]) == 2
        assert "--range" in capsys.readouterr().err

    def test_bad_range(self, capsys):
        assert run(["simulate-power", "--range", "2:1:5"]) == 2

    def test_unreadable_data_file(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("pump_w,output_w\n0,x\n", encoding="utf-8")

        assert run(["fit-threshold", str(path)]) == 1
        assert f"{path}:2:" in capsys.readouterr().err


class TestDryRun:
    def test_fit_threshold_reads_the_curve_only(self, tmp_path, capsys):
        path = tmp_path / "c.csv"
        path.write_text("# label: demo\npump_w,output_w\n0,0\n1,0.1\n2,0.2\n", encoding="utf-8")

        assert run(["fit-threshold", str(path), "--dry-run"]) == 0
        assert capsys.readouterr().out == "demo: 3 points swept over mecsel_pump, 2 lasing\n"

    def test_compare_sensors_summary(self, capsys):
        code = run(["compare-sensors", str(DATA_DIR / "sensors_example.csv"), "--reference", "ltm", "--dry-run"])

        assert code == 0
        assert "reference 'ltm'" in capsys.readouterr().out

    def test_calibrate_validates_curves(self, tmp_path, capsys):
        path = tmp_path / "c.csv"
        path.write_text("pump_w,output_w\n1,0\n0,1\n", encoding="utf-8")

        assert run(["calibrate", "--gray", str(path), "--dry-run"]) == 1
        assert "strictly ascending" in capsys.readouterr().err
