"""Model parameters: the `key = value` config format, validation and unit helpers.

Config files carry plain SI numbers only (Hz, W, m, s, T, J). Keys are the
dotted field paths of ModelParams, e.g. ``nv.L21`` or ``cavity.kappa``.
"""

import logging
import math
import re
from pathlib import Path
from typing import Mapping, Optional

from ltm.errors import ConfigError, DomainError, ParameterValidationError
from ltm.schemas import CavityParams, MecselParams, ModelParams, NVParams, PhysicalConstants

logger = logging.getLogger(__name__)

SECTIONS = {
    "nv": NVParams,
    "mecsel": MecselParams,
    "cavity": CavityParams,
    "constants": PhysicalConstants,
}

NV_RATES = ("L21", "L43", "L25", "L45", "L56", "L61", "L63", "Gamma13", "Lambda_NV", "Omega", "G_S")

_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_LINE = re.compile(r"^([A-Za-z_][\w]*\.[A-Za-z_][\w]*)\s*=\s*(\S+)$")


def config_keys() -> list[str]:
    return [f"{section}.{name}" for section, model in SECTIONS.items() for name in model.model_fields]


def _split_key(key: str) -> tuple[str, str]:
    section, _, name = key.partition(".")
    if section not in SECTIONS or name not in SECTIONS[section].model_fields:
        raise ConfigError(f"unknown key '{key}'")
    return section, name


def parse_number(text: str) -> float:
    if not _NUMBER.match(text):
        raise ValueError(f"not a decimal SI number: '{text}'")
    return float(text)


def parse_config(text: str) -> ModelParams:
    """Parse config text into (unvalidated) ModelParams; missing keys take defaults."""
    values: dict[str, dict[str, float]] = {section: {} for section in SECTIONS}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        match = _LINE.match(line)
        if not match:
            raise ConfigError(f"expected 'section.key = value', got '{raw.strip()}'", line=lineno)
        key, value_text = match.groups()
        try:
            section, name = _split_key(key)
        except ConfigError as e:
            raise ConfigError(str(e), line=lineno) from None
        if key in seen:
            raise ConfigError(f"duplicate key '{key}' (first set on line {seen[key]})", line=lineno)
        try:
            values[section][name] = parse_number(value_text)
        except ValueError as e:
            raise ConfigError(str(e), line=lineno) from None
        seen[key] = lineno

    sections = {}
    for section, model in SECTIONS.items():
        missing = [
            name for name, field in model.model_fields.items()
            if field.is_required() and name not in values[section]
        ]
        if missing:
            raise ConfigError(f"missing required key(s): {', '.join(f'{section}.{m}' for m in missing)}")
        sections[section] = model(**values[section])
    return ModelParams(**sections)


def load_config(path: str | Path) -> ModelParams:
    """Read and validate a config file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    params = validate(parse_config(text))
    logger.debug("Loaded config %s", path)
    return params


def dump_config(params: ModelParams) -> str:
    """Emit canonical config text; float repr makes the round-trip exact."""
    lines = []
    for section in SECTIONS:
        model = getattr(params, section)
        for name in type(model).model_fields:
            lines.append(f"{section}.{name} = {float(getattr(model, name))!r}")
    return "\n".join(lines) + "\n"


def parse_override(text: str) -> tuple[str, float]:
    key, sep, value = text.partition("=")
    key, value = key.strip(), value.strip()
    if not sep or not key or not value:
        raise ConfigError(f"override must look like key=value, got '{text}'")
    _split_key(key)
    try:
        return key, parse_number(value)
    except ValueError as e:
        raise ConfigError(f"override {key}: {e}") from None


def with_overrides(params: ModelParams, overrides: Mapping[str, float]) -> ModelParams:
    """Return a copy of params with dotted-key values replaced (not validated)."""
    updates: dict[str, dict[str, float]] = {}
    for key, value in overrides.items():
        section, name = _split_key(key)
        updates.setdefault(section, {})[name] = float(value)
    changed = {
        section: getattr(params, section).model_copy(update=fields)
        for section, fields in updates.items()
    }
    return params.model_copy(update=changed)


def validate(params: ModelParams) -> ModelParams:
    """Check every invariant and raise with the complete list of violations."""
    violations = []

    for section in SECTIONS:
        model = getattr(params, section)
        for name in type(model).model_fields:
            if not math.isfinite(getattr(model, name)):
                violations.append(f"non-finite value {section}.{name}")

    nv = params.nv
    for name in NV_RATES + ("pump_rate_per_watt",):
        if getattr(nv, name) < 0:
            violations.append(f"negative rate {name}")
    if not nv.N_NV > 0:
        violations.append("ensemble size must be positive (nv.N_NV)")

    mecsel = params.mecsel
    for name in ("L_eg", "G_eg", "Lambda_ge", "pump_rate_per_watt"):
        if getattr(mecsel, name) < 0:
            violations.append(f"negative rate {name}")
    if not mecsel.N_2M > 0:
        violations.append("ensemble size must be positive (mecsel.N_2M)")

    cavity = params.cavity
    if not cavity.kappa_mirror > 0:
        violations.append("mirror loss must be positive")
    if cavity.kappa_mirror > cavity.kappa:
        violations.append("mirror loss exceeds total loss")
    if not cavity.wavelength > 0:
        violations.append("wavelength must be positive")

    constants = params.constants
    for name in type(constants).model_fields:
        if not getattr(constants, name) > 0:
            violations.append(f"physical constant {name} must be positive")

    if violations:
        raise ParameterValidationError(violations)
    return params


def pump_power_to_rate(power: float, rate_per_watt: float) -> float:
    if power < 0:
        raise DomainError(f"pump power must be non-negative, got {power} W")
    return power * rate_per_watt


def photon_energy(wavelength: float, constants: Optional[PhysicalConstants] = None) -> float:
    """Energy of one photon (J) at the given vacuum wavelength (m)."""
    if not wavelength > 0:
        raise DomainError(f"wavelength must be positive, got {wavelength} m")
    constants = constants or PhysicalConstants()
    return constants.planck_h * constants.speed_of_light / wavelength


def photon_rate(power: float, wavelength: float, constants: Optional[PhysicalConstants] = None) -> float:
    """Convert an optical power (W) into a photon rate (1/s)."""
    return power / photon_energy(wavelength, constants)


def pump_rate_from_cross_section(
    cross_section: float,
    intensity: float,
    wavelength: float,
    constants: Optional[PhysicalConstants] = None,
) -> float:
    """Optical pump rate sigma*I/E_ph (Hz) for an absorption cross section (m^2) and intensity (W/m^2)."""
    if cross_section < 0 or intensity < 0:
        raise DomainError("cross section and intensity must be non-negative")
    return cross_section * intensity / photon_energy(wavelength, constants)
