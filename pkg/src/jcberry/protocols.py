"""
Experiment builders: Fock preparation, resonant Ramsey loop, |f,n> loop,
detuned open-loop spin echo, Rabi spectroscopy and echo-phase calibration.

Every builder is a pure function of its arguments. Grid points that need
separate schedules are evaluated through ``_map`` and assembled in grid
order, so results do not depend on ``workers``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import core
from .core import StateVector
from .dynamics import (
    ControlSchedule,
    IntegrationControl,
    InstantRotation,
    coupling_pulse,
    evolve,
    gap,
    pulse_duration_for_area,
    rotation,
    stark_detuning_error,
)
from .records import ExperimentRecord, combined_digest

TWO_PI = 2.0 * math.pi
MHZ = TWO_PI * 1e6
BRANCHES = ("minus", "plus")


@dataclass(frozen=True)
class DeviceParams:
    """Device constants in SI units (angular frequencies in rad/s).

    Only ``g``, ``n_max``, ``rise_time``, ``echo_gap``, ``frame_slip`` and the
    drive calibration (``g_per_amplitude``, ``stark_c2``) enter the dynamics.
    Transition and cavity frequencies and the decay times are kept for
    documentation.

    The photon-number dependent shifts are quadratic polynomials in ``n``
    given as ``(c0, c1, c2)``; ``dispersive_fg=None`` applies the sum rule
    Delta_fg = Delta_ge + Delta_ef.
    """

    g: float = 4.49 * MHZ
    n_max: int = 4
    omega_ge: float = 10.651e9 * TWO_PI
    omega_ef: float = 10.217e9 * TWO_PI
    cavity_modes: tuple = (7.828e9 * TWO_PI, 9.041e9 * TWO_PI, 11.432e9 * TWO_PI)
    t1: float = 4.9e-6
    t2_star: float = 2.0e-6
    rise_time: float = 3e-9
    echo_gap: float = 10e-9
    frame_slip: float = 0.0
    g_per_amplitude: Optional[float] = None
    stark_c2: float = 0.0
    dispersive_ge: tuple = (0.0, 0.0, 0.0)
    dispersive_ef: tuple = (0.0, 0.0, 0.0)
    dispersive_fg: Optional[tuple] = None

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError("g must be > 0")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1 to hold a coupled pair")
        object.__setattr__(self, "cavity_modes", tuple(self.cavity_modes))
        for name in ("dispersive_ge", "dispersive_ef", "dispersive_fg"):
            val = getattr(self, name)
            if val is not None:
                val = tuple(float(c) for c in val)
                if len(val) != 3:
                    raise ValueError(f"{name} needs three polynomial coefficients")
                object.__setattr__(self, name, val)

    @property
    def coupling_per_amplitude(self) -> float:
        return self.g if self.g_per_amplitude is None else self.g_per_amplitude

    def snapshot(self) -> dict:
        d = asdict(self)
        d["cavity_modes"] = list(self.cavity_modes)
        for k in ("dispersive_ge", "dispersive_ef", "dispersive_fg"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d


def _map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _check_cutoff(n: int, n_max: int) -> None:
    if n < 0:
        raise ValueError("photon number must be >= 0")
    if n + 1 > n_max:
        raise IndexError(f"photon number n={n} needs n_max >= {n + 1}, got {n_max}")


def level_curves(states: Sequence[StateVector]) -> dict[str, np.ndarray]:
    pops = [core.level_populations(s) for s in states]
    return {f"p_{lv}": np.array([p[lv] for p in pops]) for lv in ("g", "e", "f")}


def ground_state(n_max: int) -> StateVector:
    return StateVector.basis(n_max, "g", 0)


# --------------------------------------------------------------------------
# preparation


def fock_prep(n: int, n_max: int, finite_duration: Optional[float] = None) -> ControlSchedule:
    """Ladder of pi pulses taking |g,0> to |g,n>.

    Each rung is pi on g-e, pi on e-f, then pi on f,m-g,m+1. Pulses are
    instantaneous unless ``finite_duration`` (seconds per pulse) is given.
    """
    if n < 0:
        raise ValueError("photon number must be >= 0")
    if n > n_max:
        raise IndexError(f"|g,{n}> needs n_max >= {n}, got {n_max}")
    d = finite_duration or 0.0
    segs = []
    for m in range(n):
        segs += [
            rotation("ge", math.pi, duration=d),
            rotation("ef", math.pi, duration=d),
            rotation("fg", math.pi, n=m, duration=d),
        ]
    return ControlSchedule(segs, n_max)


def prepare_f(n: int, n_max: int) -> ControlSchedule:
    """|g,0> to |f,n>."""
    _check_cutoff(n, n_max)
    return fock_prep(n, n_max).then(rotation("ge", math.pi), rotation("ef", math.pi))


def prepare_ef_superposition(n: int, n_max: int) -> ControlSchedule:
    """|g,0> to (|e,n> + |f,n>)/sqrt(2)."""
    _check_cutoff(n, n_max)
    return fock_prep(n, n_max).then(rotation("ge", math.pi), rotation("ef", math.pi / 2))


def apply_ef_analysis(state: StateVector, phi_r: np.ndarray) -> list[StateVector]:
    """Final pi/2 pulse on e-f with phase ``phi_r``, for each grid value."""
    a, b = InstantRotation("ef", math.pi / 2).pairs(state.n_max)
    out = []
    for ph in np.atleast_1d(phi_r):
        u = InstantRotation("ef", math.pi / 2, float(ph)).matrix()
        amps = np.array(state.amplitudes)
        pa, pb = amps[a].copy(), amps[b].copy()
        amps[a] = u[0, 0] * pa + u[0, 1] * pb
        amps[b] = u[1, 0] * pa + u[1, 1] * pb
        out.append(StateVector(amps, state.n_max))
    return out


# --------------------------------------------------------------------------
# resonant Ramsey loop (branch-selective) and the |f,n> loop


def branch_phase(branch: str) -> float:
    """Coupling phase of the mapping pulse that sends |f,n> into the chosen dressed state."""
    if branch not in BRANCHES:
        raise ValueError(f"branch must be one of {BRANCHES}")
    return -math.pi / 2 if branch == "minus" else math.pi / 2


def mapping_pulse_duration(device: DeviceParams, n: int) -> float:
    """Resonant pulse rotating |f,n> halfway to |g,n+1> (Bloch angle pi/2)."""
    return pulse_duration_for_area(math.pi / 4, device.g * math.sqrt(n + 1), device.rise_time)


def ramsey_schedule(
    device: DeviceParams, n: int, branch: str, tau: float, dphi: float, *, ramp: bool = True
) -> ControlSchedule:
    """Coupling part of the Ramsey loop (preparation and analysis excluded).

    ``ramp=False`` with ``tau=0`` drops the middle pulse altogether.
    """
    _check_cutoff(n, device.n_max)
    if tau < 0 or (ramp and not tau > 0):
        raise ValueError("tau must be > 0")
    phi_c = branch_phase(branch)
    t_map = mapping_pulse_duration(device, n)
    segs = [coupling_pulse(t_map, device.g, phase=phi_c, subspace=n, rise_time=device.rise_time, label="map-in")]
    if ramp:
        segs.append(coupling_pulse(tau, device.g, phase=0.0, sweep=dphi, subspace=n, rise_time=device.rise_time, label="loop"))
    else:
        dphi = 0.0
    segs.append(
        coupling_pulse(t_map, device.g, phase=phi_c + math.pi + dphi, subspace=n, rise_time=device.rise_time, label="map-out")
    )
    return ControlSchedule(segs, device.n_max)


def _ramsey_record(name, full: ControlSchedule, phi_r_grid, device, ctrl, metadata) -> ExperimentRecord:
    final = evolve(full, ground_state(full.n_max), ctrl)
    states = apply_ef_analysis(final, phi_r_grid)
    return ExperimentRecord(
        name=name,
        variable="phi_r_rad",
        grid=np.asarray(phi_r_grid, dtype=float),
        curves=level_curves(states),
        digest=full.digest(),
        device=device.snapshot(),
        metadata=metadata,
    )


def ramsey_geometric(
    n: int,
    branch: str,
    tau: float,
    dphi: float,
    phi_r_grid,
    device: DeviceParams = DeviceParams(),
    ctrl: Optional[IntegrationControl] = None,
    *,
    ramp: bool = True,
) -> ExperimentRecord:
    """Ramsey pattern P(phi_R) after a coupling-phase loop on a dressed state.

    The sequence is: prepare (|e,n> + |f,n>)/sqrt(2); map |f,n> onto the
    ``branch`` dressed state with a resonant pulse; sweep the coupling phase
    by ``dphi`` over ``tau``; map back; pi/2 on e-f with phase phi_R.
    """
    body = ramsey_schedule(device, n, branch, tau, dphi, ramp=ramp)
    full = prepare_ef_superposition(n, device.n_max) + body
    meta = {"n": n, "branch": branch, "tau_s": tau, "dphi_rad": dphi, "ramp": ramp}
    return _ramsey_record("ramsey_geometric", full, phi_r_grid, device, ctrl, meta)


def fstate_loop_duration(device: DeviceParams, n: int, k) -> float:
    """Cyclic durations tau = pi k / (g sqrt(n+1)); integer ``k >= 1`` only."""
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise ValueError("k must be an integer >= 1 for a cyclic |f,n> evolution")
    return math.pi * int(k) / (device.g * math.sqrt(n + 1))


def fstate_loop(
    n: int,
    k: int,
    dphi: float,
    phi_r_grid,
    device: DeviceParams = DeviceParams(),
    ctrl: Optional[IntegrationControl] = None,
) -> ExperimentRecord:
    """Ramsey pattern for a phase loop applied directly to |f,n>."""
    _check_cutoff(n, device.n_max)
    tau = fstate_loop_duration(device, n, k)
    loop = coupling_pulse(tau, device.g, phase=0.0, sweep=dphi, subspace=n, rise_time=0.0, label="loop")
    full = prepare_ef_superposition(n, device.n_max).then(loop)
    meta = {"n": n, "k": int(k), "tau_s": tau, "dphi_rad": dphi}
    return _ramsey_record("fstate_loop", full, phi_r_grid, device, ctrl, meta)


# --------------------------------------------------------------------------
# detuned open-loop spin echo


def echo_schedule(
    device: DeviceParams,
    n: int,
    delta: float,
    tau: float,
    dphi: float,
    *,
    detuning_error: float = 0.0,
    frame_slip: Optional[float] = None,
    calibrated_slip: Optional[float] = None,
) -> ControlSchedule:
    """Two coupling pulses with the second one in the swapped frame.

    First pulse: detuning ``delta``, phase ramp 0 -> dphi. Gap of
    ``device.echo_gap`` during which the drive frame slips by ``frame_slip``.
    Second pulse: detuning ``-delta``, phase ramp pi + dphi -> pi + 2 dphi,
    offset by the calibrated slip. ``detuning_error`` is added to both
    pulses (a drive-frequency miscalibration).
    """
    _check_cutoff(n, device.n_max)
    if not tau > 0:
        raise ValueError("tau must be > 0")
    slip = device.frame_slip if frame_slip is None else frame_slip
    cal = slip if calibrated_slip is None else calibrated_slip
    r = device.rise_time
    segs = [coupling_pulse(tau, device.g, phase=0.0, sweep=dphi, detuning=delta + detuning_error, subspace=n, rise_time=r, label="echo-1")]
    if device.echo_gap > 0:
        segs.append(gap(device.echo_gap, detuning=-slip / device.echo_gap, subspace=n))
    segs.append(
        coupling_pulse(
            tau,
            device.g,
            phase=math.pi + dphi + cal,
            sweep=dphi,
            detuning=-delta + detuning_error,
            subspace=n,
            rise_time=r,
            label="echo-2",
        )
    )
    return ControlSchedule(segs, device.n_max)


def echo_openloop(
    n: int,
    delta: float,
    tau: float,
    dphi_grid,
    device: DeviceParams = DeviceParams(),
    ctrl: Optional[IntegrationControl] = None,
    *,
    detuning_error: float = 0.0,
    frame_slip: Optional[float] = None,
    calibrated_slip: Optional[float] = None,
    workers: int = 1,
) -> ExperimentRecord:
    """P(dphi) after the echo sequence started from |f,n>."""
    dphi_grid = np.asarray(dphi_grid, dtype=float)
    start = evolve(prepare_f(n, device.n_max), ground_state(device.n_max))

    def point(dp):
        sch = echo_schedule(device, n, delta, tau, float(dp), detuning_error=detuning_error,
                            frame_slip=frame_slip, calibrated_slip=calibrated_slip)
        return sch.digest(), evolve(sch, start, ctrl)

    results = _map(point, list(dphi_grid), workers)
    meta = {"n": n, "delta_rad_s": delta, "tau_s": tau, "detuning_error_rad_s": detuning_error}
    return ExperimentRecord(
        name="echo_openloop",
        variable="dphi_rad",
        grid=dphi_grid,
        curves=level_curves([s for _, s in results]),
        digest=combined_digest(d for d, _ in results),
        device=device.snapshot(),
        metadata=meta,
    )


# --------------------------------------------------------------------------
# calibration experiments


def rabi_spectroscopy(
    delta_grid,
    tau_grid,
    drive_amplitude: float = 1.0,
    device: DeviceParams = DeviceParams(),
    ctrl: Optional[IntegrationControl] = None,
    *,
    n: int = 0,
    amplitude_scale_error: float = 0.0,
    workers: int = 1,
) -> list[ExperimentRecord]:
    """Rabi oscillations |f,n> <-> |g,n+1> versus pulse length, one record per detuning.

    The coupling is ``coupling_per_amplitude * drive_amplitude``. The Stark
    shift of the drive is compensated at the nominal amplitude; a nonzero
    ``amplitude_scale_error`` leaves the residual c2 ((1+e)^2 - 1) A^2 as an
    extra detuning and scales the coupling by (1+e).
    """
    delta_grid = np.asarray(delta_grid, dtype=float)
    tau_grid = np.asarray(tau_grid, dtype=float)
    if delta_grid.size == 0 or tau_grid.size == 0:
        raise ValueError("detuning and duration grids must be nonempty")
    _check_cutoff(n, device.n_max)
    g_eff = device.coupling_per_amplitude * drive_amplitude * (1.0 + amplitude_scale_error)
    if not g_eff > 0:
        raise ValueError("drive amplitude must give a positive coupling")
    residual = stark_detuning_error(drive_amplitude, device.stark_c2, amplitude_scale_error)
    start = evolve(prepare_f(n, device.n_max), ground_state(device.n_max))
    r = min(device.rise_time, float(tau_grid.min()) / 2)

    def point(args):
        dl, tau = args
        sch = ControlSchedule([coupling_pulse(float(tau), g_eff, detuning=float(dl) + residual, subspace=n, rise_time=r)], device.n_max)
        return sch.digest(), evolve(sch, start, ctrl)

    records = []
    for dl in delta_grid:
        res = _map(point, [(dl, t) for t in tau_grid], workers)
        records.append(
            ExperimentRecord(
                name="rabi_spectroscopy",
                variable="tau_s",
                grid=tau_grid,
                curves=level_curves([s for _, s in res]),
                digest=combined_digest(d for d, _ in res),
                device=device.snapshot(),
                metadata={"n": n, "delta_rad_s": float(dl), "drive_amplitude": drive_amplitude,
                          "amplitude_scale_error": amplitude_scale_error},
            )
        )
    return records


def echo_phase_calibration(
    phi0_grid,
    tau_grid,
    device: DeviceParams = DeviceParams(),
    ctrl: Optional[IntegrationControl] = None,
    *,
    n: int = 0,
    frame_slip: Optional[float] = None,
    workers: int = 1,
) -> ExperimentRecord:
    """Oscillation amplitude versus the applied inter-pulse phase phi0.

    Two resonant pulses of equal length tau (swept over ``tau_grid``) are
    separated by the echo gap, the second one shifted in phase by phi0. The
    amplitude is half the peak-to-peak spread of P_f over the tau grid; it is
    smallest when phi0 - phi_s = pi.
    """
    phi0_grid = np.asarray(phi0_grid, dtype=float)
    tau_grid = np.asarray(tau_grid, dtype=float)
    if phi0_grid.size == 0 or tau_grid.size == 0:
        raise ValueError("phase and duration grids must be nonempty")
    _check_cutoff(n, device.n_max)
    slip = device.frame_slip if frame_slip is None else frame_slip
    start = evolve(prepare_f(n, device.n_max), ground_state(device.n_max))
    r = min(device.rise_time, float(tau_grid.min()) / 2)

    def point(args):
        phi0, tau = args
        segs = [coupling_pulse(float(tau), device.g, subspace=n, rise_time=r)]
        if device.echo_gap > 0:
            segs.append(gap(device.echo_gap, detuning=-slip / device.echo_gap, subspace=n))
        segs.append(coupling_pulse(float(tau), device.g, phase=float(phi0), subspace=n, rise_time=r))
        sch = ControlSchedule(segs, device.n_max)
        return sch.digest(), core.population(evolve(sch, start, ctrl), "f")

    amp, p_min, digests = [], [], []
    for phi0 in phi0_grid:
        res = _map(point, [(phi0, t) for t in tau_grid], workers)
        pf = np.array([p for _, p in res])
        digests += [d for d, _ in res]
        amp.append(0.5 * (pf.max() - pf.min()))
        p_min.append(pf.min())
    return ExperimentRecord(
        name="echo_phase_calibration",
        variable="phi0_rad",
        grid=phi0_grid,
        curves={"amplitude": np.array(amp), "p_f_min": np.array(p_min)},
        digest=combined_digest(digests),
        device=device.snapshot(),
        metadata={"n": n, "frame_slip_rad": slip},
    )


def estimate_frame_slip(record: ExperimentRecord) -> float:
    """phi_s from a calibration record: the amplitude is c0 + c1 cos phi0 + c2 sin phi0,
    minimal at phi0* = phi_s + pi. Returned in (-pi, pi]."""
    x = record.grid
    design = np.column_stack([np.ones_like(x), np.cos(x), np.sin(x)])
    coef, *_ = np.linalg.lstsq(design, record["amplitude"], rcond=None)
    phi_min = math.atan2(-coef[2], -coef[1])
    slip = phi_min - math.pi
    return float(-((-slip + math.pi) % TWO_PI - math.pi))


# --------------------------------------------------------------------------
# photon-number dependent shifts


def _poly(c, n):
    n = np.asarray(n, dtype=float)
    return c[0] + c[1] * n + c[2] * n * n


def stark_ladder_report(n_grid, device: DeviceParams = DeviceParams()) -> dict[str, np.ndarray]:
    """Shifts Delta_ge(n), Delta_ef(n), Delta_fg(n) and the additivity residual
    Delta_fg - (Delta_ge + Delta_ef)."""
    n = np.asarray(list(n_grid), dtype=float)
    ge = _poly(device.dispersive_ge, n)
    ef = _poly(device.dispersive_ef, n)
    fg = ge + ef if device.dispersive_fg is None else _poly(device.dispersive_fg, n)
    return {"n": n, "delta_ge": ge, "delta_ef": ef, "delta_fg": fg, "residual": fg - (ge + ef)}
