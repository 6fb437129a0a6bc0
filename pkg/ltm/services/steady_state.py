"""Steady state of the coupled NV / MECSEL / cavity rate model.

At fixed photon number N both media reduce to small linear problems. The
cavity photon number is then the root of the net gain g(N) = dN/dt / N.
"""

import logging
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import brentq

from ltm.config import LtmSettings, get_settings
from ltm.errors import (
    DegenerateSteadyStateError,
    DomainError,
    NonMonotoneGainError,
    RunawayGainError,
    SingularAssemblyError,
    SteadyStateError,
)
from ltm.schemas import Family, MecselState, ModelParams, NVParams, NVState, PhotonSolution
from ltm.services.parameters import photon_energy

logger = logging.getLogger(__name__)

NV_STATE_NAMES = ("rho11", "rho22", "rho33", "rho44", "rho55", "rho66", "rho13_re", "rho13_im")

_RESIDUAL_TOL = 1e-9
_NULLSPACE_RCOND = 1e-13
_CLIP_TOL = 1e-12


def nv_rate_matrix(nv: NVParams, n_photons: float) -> np.ndarray:
    """Generator M of dx/dt = M x for x = (rho11..rho66, Re rho13, Im rho13).

    Levels: 1/3 ground m_S=0/+-1, 2/4 excited, 5 upper singlet, 6 lower
    singlet. Columns sum to zero over the populations, so the trace is kept.
    """
    lam = nv.Lambda_NV
    omega = nv.Omega
    delta = nv.Delta
    dephasing = nv.Gamma13 + lam
    absorb = nv.G_S * n_photons / nv.N_NV
    singlet_decay = nv.L61 + nv.L63

    return np.array(
        [
            [-lam, nv.L21, 0.0, 0.0, 0.0, nv.L61, 0.0, -2.0 * omega],
            [lam, -(nv.L21 + nv.L25), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, -lam, nv.L43, 0.0, nv.L63, 0.0, 2.0 * omega],
            [0.0, 0.0, lam, -(nv.L43 + nv.L45), 0.0, 0.0, 0.0, 0.0],
            [0.0, nv.L25, 0.0, nv.L45, -nv.L56, absorb, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, nv.L56, -absorb - singlet_decay, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -dephasing, -delta],
            [omega, 0.0, -omega, 0.0, 0.0, 0.0, delta, -dephasing],
        ]
    )


def _decoupled_states(matrix: np.ndarray) -> tuple[list[str], int]:
    kernel = null_space(matrix, rcond=_NULLSPACE_RCOND)
    dimension = kernel.shape[1]
    support = np.any(np.abs(kernel) > 1e-9, axis=1) if dimension else np.zeros(len(matrix), bool)
    return [name for name, used in zip(NV_STATE_NAMES, support) if used], dimension


def nv_steady_state(params: ModelParams, n_photons: float) -> NVState:
    """Solve the NV block at fixed photon number.

    The first (population) row of the generator is replaced by the trace
    constraint, which removes the one redundant equation.
    """
    if n_photons < 0:
        raise DomainError(f"photon number must be non-negative, got {n_photons}")
    nv = params.nv
    matrix = nv_rate_matrix(nv, n_photons)

    if nv.Lambda_NV == 0 and nv.Omega == 0:
        states, dimension = _decoupled_states(matrix)
        raise DegenerateSteadyStateError(states or ["rho11", "rho33"], max(dimension, 2))

    system = matrix.copy()
    system[0] = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0]
    rhs = np.zeros(8)
    rhs[0] = 1.0
    try:
        x = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError:
        states, dimension = _decoupled_states(matrix)
        if dimension > 1:
            raise DegenerateSteadyStateError(states, dimension) from None
        raise SingularAssemblyError("NV steady-state system is singular") from None

    if not np.all(np.isfinite(x)):
        raise SingularAssemblyError("NV steady-state solution is not finite")
    scale = np.linalg.norm(matrix, ord=np.inf) * max(np.linalg.norm(x, ord=np.inf), 1.0)
    residual = np.linalg.norm(matrix @ x, ord=np.inf) / scale
    if residual > _RESIDUAL_TOL:
        raise SingularAssemblyError(f"NV steady-state residual {residual:.3g} exceeds {_RESIDUAL_TOL:g}")

    populations = x[:6]
    populations[(populations < 0) & (populations > -_CLIP_TOL)] = 0.0
    return NVState(**dict(zip(NV_STATE_NAMES, (float(v) for v in x))))


def mecsel_steady_state(params: ModelParams, n_photons: float) -> MecselState:
    if n_photons < 0:
        raise DomainError(f"photon number must be non-negative, got {n_photons}")
    m = params.mecsel
    stimulated = m.G_eg * n_photons / m.N_2M
    denominator = m.Lambda_ge + m.L_eg + 2.0 * stimulated
    if denominator <= 0:
        raise SteadyStateError("MECSEL rates are all zero; the population ratio is undefined")
    rho_ee = (m.Lambda_ge + stimulated) / denominator
    return MecselState(rho_gg=1.0 - rho_ee, rho_ee=rho_ee)


def _check_families(families: Sequence[Family]) -> None:
    if not families:
        raise DomainError("at least one NV family is required")
    if any(f.weight < 0 for f in families):
        raise DomainError("family weights must be non-negative")
    total = sum(f.weight for f in families)
    if abs(total - 1.0) > 1e-9:
        raise DomainError(f"family weights must sum to 1, got {total:.12g}")


def _family_params(params: ModelParams, family: Family) -> ModelParams:
    return params.model_copy(update={"nv": params.nv.model_copy(update={"Delta": family.delta})})


def _default_families(params: ModelParams) -> list[Family]:
    return [Family(weight=1.0, delta=params.nv.Delta)]


def _singlet_absorption(params: ModelParams, families: Sequence[Family], n_photons: float) -> float:
    # Without NV pumping the singlet is unreachable and rho66 is exactly 0.
    if params.nv.Lambda_NV == 0:
        return 0.0
    total = 0.0
    for family in families:
        state = nv_steady_state(_family_params(params, family), n_photons)
        total += family.weight * state.rho66
    return params.nv.G_S * total


def _net_gain(params: ModelParams, families: Sequence[Family], n_photons: float) -> float:
    mecsel = mecsel_steady_state(params, n_photons)
    gain = params.mecsel.G_eg * mecsel.inversion
    return gain - _singlet_absorption(params, families, n_photons) - params.cavity.kappa


def net_gain(params: ModelParams, n_photons: float) -> float:
    """Net cavity gain g(N) = dN/dt / N in Hz."""
    return _net_gain(params, _default_families(params), n_photons)


def _family_states(
    params: ModelParams, families: Sequence[Family], n_photons: float
) -> list[Optional[NVState]]:
    if params.nv.Lambda_NV == 0 and params.nv.Omega == 0:
        return [None] * len(families)
    return [nv_steady_state(_family_params(params, f), n_photons) for f in families]


def _ensemble_state(families: Sequence[Family], states: list[Optional[NVState]]) -> Optional[NVState]:
    if states[0] is None:
        return None
    if len(states) == 1:
        return states[0]
    averaged = sum(f.weight * np.array([getattr(s, k) for k in NV_STATE_NAMES]) for f, s in zip(families, states))
    return NVState(**dict(zip(NV_STATE_NAMES, (float(v) for v in averaged))))


def _find_roots_on_grid(gain, grid: np.ndarray, values: np.ndarray, settings: LtmSettings) -> list[float]:
    roots = []
    for i in range(len(grid) - 1):
        if values[i] > 0 >= values[i + 1] or values[i] <= 0 < values[i + 1]:
            roots.append(brentq(gain, grid[i], grid[i + 1], xtol=settings.root_xtol, rtol=settings.root_rtol))
    return roots


def _solve(
    params: ModelParams,
    families: Sequence[Family],
    settings: LtmSettings,
    check_monotone: bool,
) -> PhotonSolution:
    def gain(n: float) -> float:
        return _net_gain(params, families, n)

    g0 = gain(0.0)
    if g0 <= 0:
        logger.debug("Below threshold: g(0) = %.6g Hz", g0)
        states = _family_states(params, families, 0.0)
        return PhotonSolution(
            n_photons=0.0,
            lasing=False,
            nv=_ensemble_state(families, states),
            mecsel=mecsel_steady_state(params, 0.0),
            stability_derivative=g0,
            gain_at_zero=g0,
            family_states=states,
        )

    n_max = settings.root_n_max
    lo, hi = 0.0, min(params.mecsel.N_2M, n_max)
    while gain(hi) > 0:
        if hi >= n_max:
            raise RunawayGainError(n_max)
        lo, hi = hi, min(hi * 10.0, n_max)

    if check_monotone and settings.monotonicity_samples > 1:
        grid = np.concatenate(([0.0], np.geomspace(max(hi * 1e-9, 1.0), hi, settings.monotonicity_samples)))
        values = np.array([gain(n) for n in grid])
        roots = _find_roots_on_grid(gain, grid, values, settings)
        if len(roots) > 1:
            raise NonMonotoneGainError(roots)

    n_star = brentq(gain, lo, hi, xtol=settings.root_xtol, rtol=settings.root_rtol)

    h = max(1.0, 1e-6 * n_star)
    lower = max(n_star - h, 0.0)
    stability = ((n_star + h) * gain(n_star + h) - lower * gain(lower)) / (n_star + h - lower)
    if stability >= 0:
        logger.warning("Photon number N=%.6g is not a stable fixed point (d(Ng)/dN=%.3g)", n_star, stability)

    states = _family_states(params, families, n_star)
    logger.debug("Lasing: N = %.6g photons, g(0) = %.6g Hz", n_star, g0)
    return PhotonSolution(
        n_photons=n_star,
        lasing=True,
        nv=_ensemble_state(families, states),
        mecsel=mecsel_steady_state(params, n_star),
        stability_derivative=stability,
        gain_at_zero=g0,
        family_states=states,
    )


def solve_photon_number(
    params: ModelParams,
    settings: Optional[LtmSettings] = None,
    check_monotone: bool = True,
) -> PhotonSolution:
    """Self-consistent cavity photon number for one NV family at params.nv.Delta."""
    return _solve(params, _default_families(params), settings or get_settings(), check_monotone)


def multi_family_steady_state(
    params: ModelParams,
    families: Sequence[Family],
    settings: Optional[LtmSettings] = None,
    check_monotone: bool = True,
) -> PhotonSolution:
    """Like solve_photon_number, with the singlet absorption averaged over NV families.

    Each family shares params.nv but has its own microwave detuning.
    """
    _check_families(families)
    return _solve(params, list(families), settings or get_settings(), check_monotone)


def output_power(n_photons: float, params: ModelParams) -> float:
    if n_photons < 0:
        raise DomainError(f"photon number must be non-negative, got {n_photons}")
    cavity = params.cavity
    return photon_energy(cavity.wavelength, params.constants) * cavity.kappa_mirror * n_photons
