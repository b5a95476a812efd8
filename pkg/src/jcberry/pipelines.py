"""
End-to-end analysis chains: simulate a protocol, fit the traces, extract
phases or couplings. The command line ``reproduce`` commands and the
acceptance checks are thin wrappers around these.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import analytic, estimation, protocols
from .dynamics import IntegrationControl
from .protocols import DeviceParams
from .records import ExperimentRecord

TWO_PI = 2.0 * math.pi
MHZ = TWO_PI * 1e6
PHI_R_GRID = np.linspace(0.0, TWO_PI, 24, endpoint=False)

# coupling for which A = pi / (g tau) equals 0.52 us / tau
FIG3_COUPLING = math.pi / 0.52e-6


def fig3_device(**overrides) -> DeviceParams:
    return DeviceParams(**{"g": FIG3_COUPLING, **overrides})


@dataclass(frozen=True)
class RamseyPhase:
    gamma: float
    reference: estimation.SinusoidFit
    loop: estimation.SinusoidFit
    records: tuple = ()


def _ramsey_fit(record: ExperimentRecord) -> estimation.SinusoidFit:
    fit = estimation.fit_sinusoid(record.grid, record["p_e"], frequency=1.0)
    if not fit.converged:
        raise estimation.FitError(f"Ramsey pattern unusable: {fit.diagnosis}")
    return fit


def ramsey_loop_phase(
    n: int,
    branch: str,
    tau: float,
    device: DeviceParams,
    ctrl: Optional[IntegrationControl] = None,
    dphi: float = TWO_PI,
    phi_r_grid=PHI_R_GRID,
) -> RamseyPhase:
    """Phase shift between the dphi=0 reference and the dphi loop, in [0, 2 pi)."""
    ref = protocols.ramsey_geometric(n, branch, tau, 0.0, phi_r_grid, device, ctrl)
    loop = protocols.ramsey_geometric(n, branch, tau, dphi, phi_r_grid, device, ctrl)
    fr, fl = _ramsey_fit(ref), _ramsey_fit(loop)
    return RamseyPhase(estimation.ramsey_phase(fr, fl), fr, fl, (ref, loop))


def fstate_loop_phase(
    n: int,
    k: int,
    device: DeviceParams,
    ctrl: Optional[IntegrationControl] = None,
    dphi: float = TWO_PI,
    phi_r_grid=PHI_R_GRID,
) -> RamseyPhase:
    ref = protocols.fstate_loop(n, k, 0.0, phi_r_grid, device, ctrl)
    loop = protocols.fstate_loop(n, k, dphi, phi_r_grid, device, ctrl)
    fr, fl = _ramsey_fit(ref), _ramsey_fit(loop)
    return RamseyPhase(estimation.ramsey_phase(fr, fl), fr, fl, (ref, loop))


# --------------------------------------------------------------------------
# echo


@dataclass(frozen=True)
class EchoDesign:
    dphi_grid: np.ndarray
    tau: float


def echo_design(
    device: DeviceParams,
    n: int,
    delta: float,
    *,
    time_per_cycle: float = 2e-6,
    min_periods: float = 2.0,
    points: int = 25,
) -> EchoDesign:
    """Phase-sweep span and pulse length for an echo trace.

    The span covers at least one full 2 pi cycle and at least
    ``min_periods`` oscillations of the expected pattern; the pulse length
    scales with the span so the sweep rate stays at 2 pi per
    ``time_per_cycle``.
    """
    c = abs(math.cos(analytic.mixing_angle(device.g, delta, n).theta))
    span = TWO_PI if c < 1e-3 else max(TWO_PI, min_periods * math.pi / c)
    return EchoDesign(np.linspace(0.0, span, points), time_per_cycle * span / TWO_PI)


@dataclass(frozen=True)
class EchoPhase:
    """Extracted |gamma_plus - gamma_minus| and its signed value."""

    magnitude: float
    signed: float
    fit: estimation.SinusoidFit
    record: ExperimentRecord


def echo_phase(
    n: int,
    delta: float,
    device: DeviceParams,
    ctrl: Optional[IntegrationControl] = None,
    *,
    tau: Optional[float] = None,
    dphi_grid=None,
    detuning_error: float = 0.0,
    workers: int = 1,
) -> EchoPhase:
    design = echo_design(device, n, delta)
    grid = design.dphi_grid if dphi_grid is None else np.asarray(dphi_grid, dtype=float)
    tau = design.tau if tau is None else tau
    rec = protocols.echo_openloop(n, delta, tau, grid, device, ctrl, detuning_error=detuning_error, workers=workers)
    fit = estimation.fit_sinusoid(rec.grid, rec["p_f"])
    mag = estimation.geometric_phase_from_frequency(fit)
    return EchoPhase(mag, estimation.signed_phase_difference(mag, delta), fit, rec)


# --------------------------------------------------------------------------
# figure tables


def fig3c_table(taus: Sequence[float], device: DeviceParams, branches=("minus", "plus"), n: int = 0, ctrl=None) -> list[dict]:
    rows = []
    for tau in taus:
        for br in branches:
            ph = ramsey_loop_phase(n, br, float(tau), device, ctrl)
            rows.append({
                "tau_us": float(tau) * 1e6,
                "adiabaticity": analytic.adiabaticity(device.g, float(tau)),
                "branch": br,
                "gamma_rad": ph.gamma,
                "model_rad": math.pi,
                "residual_rad": ph.gamma - math.pi,
            })
    return rows


def fig3d_table(ns: Iterable[int], device: DeviceParams, tau: float = 20e-6, k: int = 40, ctrl=None) -> list[dict]:
    """Resonant loop phases for both dressed states (duration ``tau``) and
    for |f,n> (``k`` cyclic periods) at each photon number."""
    rows = []
    for n in ns:
        for state in ("minus", "plus", "f"):
            if state == "f":
                gamma = fstate_loop_phase(n, k, device, ctrl).gamma
            else:
                gamma = ramsey_loop_phase(n, state, tau, device, ctrl).gamma
            rows.append({"n": int(n), "state": state, "gamma_rad": gamma, "model_rad": math.pi, "residual_rad": gamma - math.pi})
    return rows


@dataclass(frozen=True)
class Fig4cResult:
    rows: list
    fit: estimation.FitResult


def fig4c_table(ns: Iterable[int], deltas: Sequence[float], device: DeviceParams, ctrl=None, workers: int = 1) -> Fig4cResult:
    """Echo phase differences versus detuning per photon number, plus the shared-g fit."""
    rows, datasets = [], []
    for n in ns:
        vals = []
        for d in deltas:
            est = echo_phase(int(n), float(d), device, ctrl, workers=workers)
            model = float(analytic.berry_phase_closed(device.g, float(d), int(n)).difference)
            vals.append(est.signed)
            rows.append({"n": int(n), "delta_mhz": float(d) / MHZ, "gamma_diff_rad": est.signed,
                         "model_rad": model, "residual_rad": est.signed - model})
        datasets.append((int(n), np.asarray(deltas, dtype=float), np.array(vals)))
    return Fig4cResult(rows, estimation.global_fit_berry(datasets))


# --------------------------------------------------------------------------
# Rabi calibration


@dataclass(frozen=True)
class RabiCalibration:
    g_n: dict
    centers: dict
    omega_r: dict
    gn_fit: estimation.FitResult
    linear_fit: estimation.FitResult


def rabi_calibration(
    device: DeviceParams,
    deltas,
    taus,
    ns: Sequence[int] = (0,),
    drive_amplitude: float = 1.0,
    ctrl=None,
    workers: int = 1,
    amplitude_scale_error: float = 0.0,
) -> RabiCalibration:
    """Rabi spectroscopy per photon number, Omega_R(delta) fits, then g_n^2 = g^2 (n+1)."""
    g_n, centers, omegas = {}, {}, {}
    for n in ns:
        recs = protocols.rabi_spectroscopy(deltas, taus, drive_amplitude, device, ctrl, n=n, workers=workers,
                                           amplitude_scale_error=amplitude_scale_error)
        w = np.array([estimation.rabi_frequency(r) for r in recs])
        fit = estimation.fit_rabi(deltas, w)
        g_n[n], centers[n], omegas[n] = fit["g"], fit["center"], w
    n_arr = np.array(list(ns), dtype=float)
    g2 = np.array([g_n[n] ** 2 for n in ns])
    gn_fit = estimation.fit_gn(n_arr, g2)
    lin = estimation.fit_linear(n_arr, g2) if len(ns) >= 2 else None
    return RabiCalibration(g_n, centers, omegas, gn_fit, lin)
