"""File formats: power-curve / ODMR / sensor-registry CSV, JSON reports, hashing."""

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Any, Iterable, Optional, TextIO

from ltm.errors import DataFileError
from ltm.schemas import (
    CalibrationResult,
    LorentzianFit,
    LorentzianResonance,
    ModelParams,
    OdmrSpectrum,
    PowerCurve,
    SensorPoint,
    SweptAxis,
)

POWER_HEADER = ("pump_w", "output_w")
ODMR_HEADER = ("frequency_hz", "output_w")
REGISTRY_HEADER = ("name", "sensitivity_t_sqrthz", "dynamic_range_t", "flux_concentrator", "closed_loop")

_TRUE = {"1", "true", "yes", "y"}
_FALSE = {"0", "false", "no", "n", ""}


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def params_hash(params: ModelParams) -> str:
    """Digest of the canonical config text."""
    from ltm.services.parameters import dump_config

    return sha256_text(dump_config(params))


def points_hash(points: Iterable[tuple[float, float]]) -> str:
    return sha256_text("\n".join(f"{x!r},{y!r}" for x, y in points))


# --- CSV ---


def _write_metadata(stream: TextIO, metadata: dict[str, str]) -> None:
    for key, value in metadata.items():
        stream.write(f"# {key}: {value}\n")


def _write_pairs(stream: TextIO, header: tuple[str, str], points, metadata: Optional[dict[str, str]]) -> None:
    if metadata:
        _write_metadata(stream, metadata)
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for x, y in points:
        writer.writerow((repr(float(x)), repr(float(y))))


def _read_rows(stream: TextIO, source: str) -> tuple[dict[str, str], list[tuple[int, list[str]]]]:
    metadata: dict[str, str] = {}
    rows = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            if sep:
                metadata[key.strip()] = value.strip()
            continue
        rows.append((lineno, next(csv.reader([line]))))
    if not rows:
        raise DataFileError("no header row", source)
    return metadata, rows


def _read_pairs(stream: TextIO, header: tuple[str, str], source: str):
    metadata, rows = _read_rows(stream, source)
    first_line, first = rows[0]
    if tuple(c.strip() for c in first) != header:
        raise DataFileError(f"expected header '{','.join(header)}'", source, first_line)

    points = []
    for lineno, row in rows[1:]:
        if len(row) != 2:
            raise DataFileError(f"expected 2 columns, got {len(row)}", source, lineno)
        try:
            x, y = float(row[0]), float(row[1])
        except ValueError:
            raise DataFileError(f"not a number in row '{','.join(row)}'", source, lineno) from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise DataFileError("non-finite value", source, lineno)
        if y < 0:
            raise DataFileError(f"negative output {y}", source, lineno)
        if points and x <= points[-1][0]:
            raise DataFileError("first column must be strictly ascending", source, lineno)
        points.append((x, y))
    if not points:
        raise DataFileError("no data rows", source)
    return metadata, points


def _open_text(path: str | Path):
    try:
        return open(path, encoding="utf-8", newline="")
    except OSError as e:
        raise DataFileError(f"cannot open: {e}", str(path)) from e


def curve_metadata(curve: PowerCurve) -> dict[str, str]:
    metadata = {"label": curve.label, "swept_axis": curve.swept_axis.value}
    if curve.fixed_params is not None:
        metadata["params_hash"] = params_hash(curve.fixed_params)
    return metadata


def write_power_curve(curve: PowerCurve, stream: TextIO, metadata: bool = True) -> None:
    _write_pairs(stream, POWER_HEADER, curve.points, curve_metadata(curve) if metadata else None)


def read_power_curve(path: str | Path, axis: Optional[SweptAxis] = None) -> PowerCurve:
    """Read a power curve; the swept axis comes from the argument, else the metadata, else MECSEL pump."""
    with _open_text(path) as stream:
        metadata, points = _read_pairs(stream, POWER_HEADER, str(path))
    if axis is None:
        try:
            axis = SweptAxis(metadata.get("swept_axis", SweptAxis.MECSEL_PUMP.value))
        except ValueError:
            raise DataFileError(f"unknown swept_axis '{metadata['swept_axis']}'", str(path)) from None
    return PowerCurve(swept_axis=axis, points=points, label=metadata.get("label", Path(path).stem))


def write_odmr(spectrum: OdmrSpectrum, stream: TextIO, metadata: bool = True) -> None:
    meta = None
    if metadata:
        meta = {"label": spectrum.label}
        if spectrum.params_snapshot is not None:
            meta["params_hash"] = params_hash(spectrum.params_snapshot)
    _write_pairs(stream, ODMR_HEADER, spectrum.points, meta)


def read_odmr(path: str | Path, params: Optional[ModelParams] = None) -> OdmrSpectrum:
    with _open_text(path) as stream:
        metadata, points = _read_pairs(stream, ODMR_HEADER, str(path))
    return OdmrSpectrum(points=points, params_snapshot=params, label=metadata.get("label", Path(path).stem))


def _parse_flag(text: str, source: str, lineno: int) -> bool:
    value = text.strip().lower()
    if value in _TRUE:
        return True
    if value in _FALSE:
        return False
    raise DataFileError(f"not a boolean: '{text}'", source, lineno)


def read_sensor_registry(path: str | Path) -> list[SensorPoint]:
    source = str(path)
    with _open_text(path) as stream:
        _, rows = _read_rows(stream, source)
    first_line, first = rows[0]
    if tuple(c.strip() for c in first) != REGISTRY_HEADER:
        raise DataFileError(f"expected header '{','.join(REGISTRY_HEADER)}'", source, first_line)

    sensors = []
    for lineno, row in rows[1:]:
        if len(row) != len(REGISTRY_HEADER):
            raise DataFileError(f"expected {len(REGISTRY_HEADER)} columns, got {len(row)}", source, lineno)
        try:
            sensitivity, dr = float(row[1]), float(row[2])
        except ValueError:
            raise DataFileError("sensitivity and dynamic range must be numbers", source, lineno) from None
        if not (sensitivity > 0 and dr > 0):
            raise DataFileError("sensitivity and dynamic range must be positive", source, lineno)
        sensors.append(
            SensorPoint(
                name=row[0].strip(),
                sensitivity=sensitivity,
                dynamic_range=dr,
                flux_concentrator=_parse_flag(row[3], source, lineno),
                closed_loop=_parse_flag(row[4], source, lineno),
            )
        )
    return sensors


# --- JSON ---


def _finite(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


def fit_report(fit: LorentzianFit) -> dict[str, Any]:
    return {
        "baseline_photons_per_s": fit.baseline,
        "resonances": [
            {"center_hz": r.center, "fwhm_hz": r.fwhm, "contrast": r.contrast} for r in fit.resonances
        ],
        "residual_rms": fit.residual_rms,
        "flags": list(fit.flags),
        "parameter_names": list(fit.parameter_names),
        "covariance": fit.covariance,
        "bounds": {k: [lo, _finite(hi)] for k, (lo, hi) in fit.bounds.items()},
        "iterations": fit.iterations,
    }


def calibration_report(result: CalibrationResult) -> dict[str, Any]:
    return {
        "stage": result.stage.value,
        "fitted": {
            name: {"value": v.value, "std_error": v.std_error} for name, v in result.fitted.items()
        },
        "sse": result.sse,
        "iterations": result.iterations,
        "method": result.method,
        "n_points": result.n_points,
        "loss": result.loss,
        "flags": list(result.flags),
        "dataset_hash": result.dataset_hash,
    }


def _sanitize(value: Any) -> Any:
    if isinstance(value, float):
        return _finite(value)
    if isinstance(value, dict):
        return {k: _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    return value


def write_json(payload: Any, stream: TextIO) -> None:
    """Write indented JSON; infinities and NaNs become null."""
    json.dump(_sanitize(payload), stream, indent=2, allow_nan=False)
    stream.write("\n")


def read_fit_report(path: str | Path) -> LorentzianFit:
    """Rebuild a LorentzianFit from a JSON fit report."""
    source = str(path)
    try:
        with open(path, encoding="utf-8") as stream:
            payload = json.load(stream)
    except OSError as e:
        raise DataFileError(f"cannot open: {e}", source) from e
    except json.JSONDecodeError as e:
        raise DataFileError(f"invalid JSON: {e.msg}", source, e.lineno) from None
    try:
        resonances = [
            LorentzianResonance(center=r["center_hz"], fwhm=r["fwhm_hz"], contrast=r["contrast"])
            for r in payload["resonances"]
        ]
        return LorentzianFit(
            baseline=payload["baseline_photons_per_s"],
            resonances=resonances,
            residual_rms=payload.get("residual_rms", 0.0),
            covariance=[[math.nan if v is None else v for v in row] for row in payload.get("covariance", [])],
            parameter_names=payload.get("parameter_names", []),
            flags=payload.get("flags", []),
            iterations=payload.get("iterations", 0),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DataFileError(f"not a fit report: {e}", source) from None
