"""
Time-dependent Schrodinger propagation of pulse schedules in the drive frame.

A schedule is an ordered list of segments. Coupling segments drive the
{|f,n>, |g,n+1>} blocks with an envelope, a detuning and a linearly ramped
coupling phase; rotation segments apply ideal (or constant-rate) rotations on
the g-e, e-f or f,n-g,n+1 transitions. The |e,m> levels, |g,0> and |f,n_max>
carry no Hamiltonian.

Integration is fixed-step and 4th order. Step propagators are computed for
all steps of a segment at once and then multiplied in time order, so a
schedule of 10^5 steps costs a handful of array operations.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from . import core
from .core import StateVector

logger = logging.getLogger(__name__)

RISE_TIME = 3e-9
DEFAULT_MAX_STEP = 1e-9
STEPS_PER_SEGMENT = 200
_CHUNK = 8192

_G1 = 0.5 - math.sqrt(3.0) / 6.0
_G2 = 0.5 + math.sqrt(3.0) / 6.0


class IntegrationError(RuntimeError):
    """Step refinement did not reach the requested tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (achieved residual {residual:.3e})")
        self.residual = residual


# --------------------------------------------------------------------------
# schedule description


@dataclass(frozen=True)
class Envelope:
    """Coupling envelope.

    ``square_with_rise`` ramps up and down with raised-cosine edges of length
    ``rise_time``; ``ideal_instant`` switches on and off instantaneously.
    ``amplitude`` is the bare coupling g (rad/s); block n sees g sqrt(n+1).
    """

    kind: str = "square_with_rise"
    amplitude: float = 0.0
    rise_time: float = RISE_TIME

    def __post_init__(self):
        if self.kind not in ("square_with_rise", "ideal_instant"):
            raise ValueError(f"unknown envelope kind {self.kind!r}")
        if self.rise_time < 0:
            raise ValueError("rise_time must be >= 0")
        if self.kind == "ideal_instant":
            object.__setattr__(self, "rise_time", 0.0)

    def shape(self, t, duration: float) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        r = self.rise_time
        if r == 0.0:
            return np.ones_like(t)
        up = 0.5 * (1.0 - np.cos(np.pi * np.clip(t / r, 0.0, 1.0)))
        down = 0.5 * (1.0 - np.cos(np.pi * np.clip((duration - t) / r, 0.0, 1.0)))
        return np.minimum(up, down)

    def area(self, duration: float) -> float:
        """Integral of the envelope over the segment."""
        return self.amplitude * (duration - self.rise_time)


TRANSITIONS = ("ge", "ef", "fg")


@dataclass(frozen=True)
class InstantRotation:
    """Rotation exp(-i angle/2 (e^{i phase}|b><a| + h.c.)) on the pair (a, b).

    Pairs are (|g,m>, |e,m>) for ``ge``, (|e,m>, |f,m>) for ``ef`` (all m), and
    (|f,n>, |g,n+1>) for ``fg``. With ``phase = pi/2`` the rotation is real and
    sends |a> to +|b> for ``angle = pi``.
    """

    transition: str
    angle: float
    phase: float = math.pi / 2
    n: Optional[int] = None

    def __post_init__(self):
        if self.transition not in TRANSITIONS:
            raise ValueError(f"transition must be one of {TRANSITIONS}")
        if self.transition == "fg" and (self.n is None or self.n < 0):
            raise ValueError("fg rotations need a photon index n >= 0")

    def pairs(self, n_max: int) -> tuple[np.ndarray, np.ndarray]:
        if self.transition == "fg":
            if self.n + 1 > n_max:
                raise IndexError(f"f,{self.n}-g,{self.n + 1} needs n_max >= {self.n + 1}")
            a, b = core.pair_indices(self.n)
            return np.array([a]), np.array([b])
        m = np.arange(n_max + 1)
        if self.transition == "ge":
            return 3 * m, 3 * m + 1
        return 3 * m + 1, 3 * m + 2

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.angle / 2), math.sin(self.angle / 2)
        return np.array(
            [[c, -1j * s * np.exp(-1j * self.phase)], [-1j * s * np.exp(1j * self.phase), c]],
            dtype=complex,
        )


@dataclass(frozen=True)
class ControlSegment:
    duration: float = 0.0
    coupling: Optional[Envelope] = None
    phase_start: float = 0.0
    phase_sweep: float = 0.0
    detuning: float = 0.0
    subspace: Optional[int] = None
    rotation: Optional[InstantRotation] = None
    label: str = ""

    def __post_init__(self):
        if (self.coupling is None) == (self.rotation is None):
            raise ValueError("a segment carries exactly one of coupling or rotation")
        if self.duration < 0 or not math.isfinite(self.duration):
            raise ValueError("segment duration must be finite and >= 0")
        if self.rotation is not None and self.phase_sweep != 0.0:
            raise ValueError("rotation segments cannot sweep the phase")
        if self.coupling is not None:
            if self.duration == 0.0:
                raise ValueError("coupling segments need a positive duration")
            if self.coupling.rise_time > self.duration / 2:
                raise ValueError("rise_time exceeds half the segment duration")

    @property
    def is_instant(self) -> bool:
        return self.rotation is not None and self.duration == 0.0

    def phase_at(self, t_rel):
        if self.duration == 0.0:
            return self.phase_start
        return self.phase_start + self.phase_sweep * np.asarray(t_rel) / self.duration

    def blocks(self, n_max: int) -> np.ndarray:
        if self.subspace is None:
            return np.arange(n_max)
        if self.subspace + 1 > n_max:
            raise IndexError(f"subspace n={self.subspace} needs n_max >= {self.subspace + 1}")
        return np.array([self.subspace])


def coupling_pulse(
    duration: float,
    g: float,
    *,
    phase: float = 0.0,
    sweep: float = 0.0,
    detuning: float = 0.0,
    subspace: Optional[int] = None,
    rise_time: float = RISE_TIME,
    label: str = "",
) -> ControlSegment:
    kind = "square_with_rise" if rise_time > 0 else "ideal_instant"
    return ControlSegment(
        duration=duration,
        coupling=Envelope(kind, g, rise_time),
        phase_start=phase,
        phase_sweep=sweep,
        detuning=detuning,
        subspace=subspace,
        label=label,
    )


def gap(duration: float, *, detuning: float = 0.0, subspace: Optional[int] = None, label: str = "gap") -> ControlSegment:
    """Free evolution; a nonzero ``detuning`` models a frame slip."""
    return ControlSegment(
        duration=duration,
        coupling=Envelope("ideal_instant", 0.0, 0.0),
        detuning=detuning,
        subspace=subspace,
        label=label,
    )


def rotation(transition: str, angle: float, phase: float = math.pi / 2, n: Optional[int] = None, duration: float = 0.0, label: str = "") -> ControlSegment:
    return ControlSegment(duration=duration, rotation=InstantRotation(transition, angle, phase, n), label=label or f"{transition}:{angle:.6g}")


def pulse_duration_for_area(area: float, g_eff: float, rise_time: float = RISE_TIME) -> float:
    """Duration giving integral g_eff * shape dt = area for a raised-cosine edged pulse."""
    return area / g_eff + rise_time


@dataclass(frozen=True)
class ControlSchedule:
    segments: tuple = ()
    n_max: int = 2

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.n_max < 0:
            raise ValueError("n_max must be >= 0")

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def boundaries(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    def then(self, *segments: ControlSegment) -> "ControlSchedule":
        return ControlSchedule(self.segments + tuple(segments), self.n_max)

    def __add__(self, other: "ControlSchedule") -> "ControlSchedule":
        return ControlSchedule(self.segments + other.segments, max(self.n_max, other.n_max))

    def to_dict(self) -> dict:
        def seg(s):
            d = asdict(s)
            return {k: v for k, v in d.items() if v is not None and v != ""}

        return {"n_max": self.n_max, "segments": [seg(s) for s in self.segments]}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class IntegrationControl:
    """Step and refinement settings.

    ``base_step=None`` uses min(1 ns, segment/200) for every segment.
    ``method`` is ``"magnus4"`` (unitary, default) or ``"rk4"``.
    """

    base_step: Optional[float] = None
    tolerance: float = 1e-8
    max_refinements: int = 6
    method: str = "magnus4"

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if self.method not in ("magnus4", "rk4"):
            raise ValueError("method must be 'magnus4' or 'rk4'")
        if self.base_step is not None and not self.base_step > 0:
            raise ValueError("base_step must be > 0")


# --------------------------------------------------------------------------
# Hamiltonian


def _block_hamiltonians(seg: ControlSegment, t_rel: np.ndarray, blocks: np.ndarray) -> np.ndarray:
    """H blocks at times ``t_rel``; shape (len(t), len(blocks), 2, 2)."""
    t_rel = np.asarray(t_rel, dtype=float)
    amp = seg.coupling.amplitude * seg.coupling.shape(t_rel, seg.duration)
    phase = seg.phase_at(t_rel)
    c = amp[:, None] * np.sqrt(blocks + 1.0)[None, :]
    off = c * np.exp(1j * np.asarray(phase))[..., None] if np.ndim(phase) else c * np.exp(1j * phase)
    h = np.zeros(t_rel.shape + (blocks.size, 2, 2), dtype=complex)
    h[..., 0, 0] = -seg.detuning / 2.0
    h[..., 1, 1] = seg.detuning / 2.0
    h[..., 0, 1] = np.conj(off)
    h[..., 1, 0] = off
    return h


def _rotation_generator(rot: InstantRotation, duration: float) -> np.ndarray:
    rate = rot.angle / duration
    return 0.5 * rate * np.array([[0, np.exp(-1j * rot.phase)], [np.exp(1j * rot.phase), 0]], dtype=complex)


def hamiltonian_at(schedule: ControlSchedule, t: float) -> np.ndarray:
    """Full-space Hamiltonian at time ``t`` (seconds from the schedule start)."""
    total = schedule.total_duration
    if t < 0 or t > total * (1 + 1e-12) + 1e-18:
        raise ValueError(f"t={t} outside [0, {total}]")
    dim = core.dimension(schedule.n_max)
    h = np.zeros((dim, dim), dtype=complex)
    t0 = 0.0
    timed = [s for s in schedule.segments if s.duration > 0]
    for k, seg in enumerate(timed):
        t1 = t0 + seg.duration
        if t < t1 or k == len(timed) - 1:
            if seg.coupling is not None:
                blocks = seg.blocks(schedule.n_max)
                hb = _block_hamiltonians(seg, np.array([t - t0]), blocks)[0]
                for b, blk in zip(blocks, hb):
                    i, j = core.pair_indices(int(b))
                    h[np.ix_([i, j], [i, j])] = blk
            else:
                gen = _rotation_generator(seg.rotation, seg.duration)
                for a, b in zip(*seg.rotation.pairs(schedule.n_max)):
                    h[np.ix_([a, b], [a, b])] = gen
            return h
        t0 = t1
    return h


# --------------------------------------------------------------------------
# stepping


def _expm_traceless(m: np.ndarray) -> np.ndarray:
    """exp(-i M) for traceless Hermitian 2x2 matrices M (batched)."""
    a = m[..., 0, 0].real
    b = m[..., 0, 1]
    r = np.sqrt(a * a + np.abs(b) ** 2)
    cos_r = np.cos(r)
    sinc = np.where(r > 1e-300, np.sin(r) / np.where(r > 1e-300, r, 1.0), 1.0)
    out = np.empty(m.shape, dtype=complex)
    out[..., 0, 0] = cos_r - 1j * sinc * a
    out[..., 1, 1] = cos_r + 1j * sinc * a
    out[..., 0, 1] = -1j * sinc * b
    out[..., 1, 0] = -1j * sinc * np.conj(b)
    return out


def _step_propagators(seg, t_start, h, nsteps, blocks, method):
    """Per-step 2x2 block propagators for steps starting at t_start + k h."""
    k = np.arange(nsteps)
    base = t_start + k * h
    if method == "magnus4":
        h1 = _block_hamiltonians(seg, base + _G1 * h, blocks)
        h2 = _block_hamiltonians(seg, base + _G2 * h, blocks)
        comm = h2 @ h1 - h1 @ h2
        m = 0.5 * h * (h1 + h2) - 1j * (math.sqrt(3.0) / 12.0) * h * h * comm
        return _expm_traceless(m)
    a1 = -1j * _block_hamiltonians(seg, base, blocks)
    a2 = -1j * _block_hamiltonians(seg, base + 0.5 * h, blocks)
    a3 = -1j * _block_hamiltonians(seg, base + h, blocks)
    eye = np.eye(2, dtype=complex)
    k1 = a1
    k2 = a2 @ (eye + 0.5 * h * k1)
    k3 = a2 @ (eye + 0.5 * h * k2)
    k4 = a3 @ (eye + h * k3)
    return eye + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _chain(mats: np.ndarray) -> np.ndarray:
    """Time-ordered product M[N-1] ... M[0] over the leading axis."""
    while mats.shape[0] > 1:
        tail = None
        if mats.shape[0] % 2:
            tail, mats = mats[-1:], mats[:-1]
        mats = mats[1::2] @ mats[0::2]
        if tail is not None:
            mats = np.concatenate([mats, tail])
    return mats[0]


def _subintervals(seg: ControlSegment) -> list[tuple[float, float]]:
    r = seg.coupling.rise_time if seg.coupling is not None else 0.0
    cuts = sorted({0.0, r, seg.duration - r, seg.duration})
    return [(a, b) for a, b in zip(cuts[:-1], cuts[1:]) if b > a]


def _segment_step(seg: ControlSegment, ctrl: IntegrationControl, scale: float) -> float:
    h = ctrl.base_step if ctrl.base_step is not None else min(DEFAULT_MAX_STEP, seg.duration / STEPS_PER_SEGMENT)
    return h * scale


def _segment_block_propagator(seg, blocks, h_target, method):
    total = np.broadcast_to(np.eye(2, dtype=complex), (blocks.size, 2, 2)).copy()
    for a, b in _subintervals(seg):
        nsteps = max(1, int(math.ceil((b - a) / h_target - 1e-9)))
        h = (b - a) / nsteps
        for start in range(0, nsteps, _CHUNK):
            cnt = min(_CHUNK, nsteps - start)
            steps = _step_propagators(seg, a + start * h, h, cnt, blocks, method)
            total = _chain(steps) @ total
    return total


def _rotation_full(rot: InstantRotation, n_max: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    a, b = rot.pairs(n_max)
    return a, b, rot.matrix()


def _apply_pairs(psi: np.ndarray, a, b, u: np.ndarray) -> np.ndarray:
    """Apply 2x2 block(s) ``u`` on index pairs (a, b); psi has shape (dim, k)."""
    pa, pb = psi[a], psi[b]
    if u.ndim == 2:
        na = u[0, 0] * pa + u[0, 1] * pb
        nb = u[1, 0] * pa + u[1, 1] * pb
    else:
        na = u[:, 0, 0, None] * pa + u[:, 0, 1, None] * pb
        nb = u[:, 1, 0, None] * pa + u[:, 1, 1, None] * pb
    psi[a], psi[b] = na, nb
    return psi


def _segment_pairs(seg: ControlSegment, n_max: int):
    blocks = seg.blocks(n_max)
    idx = np.array([core.pair_indices(int(n)) for n in blocks], dtype=int).reshape(-1, 2)
    return blocks, idx[:, 0], idx[:, 1]


def _propagate(schedule: ControlSchedule, psi: np.ndarray, ctrl: IntegrationControl, scale: float) -> np.ndarray:
    psi = np.array(psi, dtype=complex, copy=True)
    n_max = schedule.n_max
    for seg in schedule.segments:
        if seg.rotation is not None:
            a, b, u = _rotation_full(seg.rotation, n_max)
            # finite-duration rotations have a constant generator: exact
            psi = _apply_pairs(psi, a, b, u)
            continue
        blocks, a, b = _segment_pairs(seg, n_max)
        if blocks.size == 0:
            continue
        u = _segment_block_propagator(seg, blocks, _segment_step(seg, ctrl, scale), ctrl.method)
        psi = _apply_pairs(psi, a, b, u)
    return psi


def _converged(schedule, psi0, ctrl):
    scale = 1.0
    prev = _propagate(schedule, psi0, ctrl, scale)
    needs_steps = any(s.coupling is not None for s in schedule.segments)
    if not needs_steps:
        return prev
    err = float("inf")
    for _ in range(ctrl.max_refinements):
        scale /= 2.0
        cur = _propagate(schedule, psi0, ctrl, scale)
        err = float(np.max(np.abs(cur - prev)))
        if err < ctrl.tolerance:
            return cur
        prev = cur
    raise IntegrationError(f"no convergence after {ctrl.max_refinements} step halvings", err)


def _renormalize(psi: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(psi, axis=0)
    drift = float(np.max(np.abs(norms - 1.0)))
    if drift > 1e-9:
        logger.warning("norm drift %.3e corrected by renormalization", drift)
    elif drift > 1e-13:
        logger.debug("norm drift %.3e corrected by renormalization", drift)
    return psi / norms


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # shape (len(times), dim)
    n_max: int

    def populations(self) -> np.ndarray:
        return np.abs(self.states) ** 2

    def to_csv(self, path, track: Optional[tuple] = None) -> None:
        """Write t_seconds, |amplitude|^2 per basis label, and optionally the phase of ``track``."""
        basis = core.make_basis(self.n_max)
        header = ["t_seconds"] + [f"p_{b.name}" for b in basis]
        track_idx = None
        if track is not None:
            track_idx = core.label(*track).index
            header.append(f"phase_{core.label(*track).name}_rad")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for t, st in zip(self.times, self.states):
                row = [repr(float(t))] + [repr(float(abs(x) ** 2)) for x in st]
                if track_idx is not None:
                    row.append(repr(float(np.angle(st[track_idx]))))
                w.writerow(row)


def _trajectory(schedule, psi0, ctrl, scale, every):
    """Sequential propagation recording the state every ``every`` steps."""
    psi = np.array(psi0, dtype=complex).reshape(-1, 1)
    times, states = [0.0], [psi[:, 0].copy()]
    t0 = 0.0
    for seg in schedule.segments:
        if seg.rotation is not None:
            a, b, u = _rotation_full(seg.rotation, schedule.n_max)
            psi = _apply_pairs(psi, a, b, u)
            t0 += seg.duration
            times.append(t0)
            states.append(psi[:, 0].copy())
            continue
        blocks, ia, ib = _segment_pairs(seg, schedule.n_max)
        h_target = _segment_step(seg, ctrl, scale)
        count = 0
        for a, b in _subintervals(seg):
            nsteps = max(1, int(math.ceil((b - a) / h_target - 1e-9)))
            h = (b - a) / nsteps
            steps = _step_propagators(seg, a, h, nsteps, blocks, ctrl.method)
            for k in range(nsteps):
                psi = _apply_pairs(psi, ia, ib, steps[k])
                count += 1
                if count % every == 0:
                    times.append(t0 + a + (k + 1) * h)
                    states.append(psi[:, 0].copy())
        t0 += seg.duration
        if times[-1] != t0:
            times.append(t0)
            states.append(psi[:, 0].copy())
    return Trajectory(np.array(times), np.array(states), schedule.n_max)


def evolve(
    schedule: ControlSchedule,
    initial: StateVector,
    ctrl: Optional[IntegrationControl] = None,
    *,
    trajectory: bool = False,
    sample_every: int = 1,
):
    """Propagate ``initial`` through ``schedule``.

    The step is halved until two successive runs agree to ``ctrl.tolerance``
    in the max-norm of the final amplitudes; ``IntegrationError`` is raised
    after ``ctrl.max_refinements`` halvings. With ``trajectory=True`` a
    ``(state, Trajectory)`` pair is returned, the trajectory being sampled
    at the accepted step size.
    """
    ctrl = ctrl or IntegrationControl()
    if initial.n_max != schedule.n_max:
        raise core.DimensionError(f"state n_max={initial.n_max} but schedule n_max={schedule.n_max}")
    if abs(initial.norm() - 1.0) > 1e-9:
        raise ValueError("initial state must be normalized")
    psi = _converged(schedule, initial.amplitudes.reshape(-1, 1), ctrl)
    out = StateVector(_renormalize(psi)[:, 0], schedule.n_max)
    if not trajectory:
        return out
    # locate the accepted scale again for the sampled run
    scale = _accepted_scale(schedule, initial.amplitudes.reshape(-1, 1), ctrl)
    return out, _trajectory(schedule, initial.amplitudes, ctrl, scale, max(1, sample_every))


def _accepted_scale(schedule, psi0, ctrl) -> float:
    scale = 1.0
    prev = _propagate(schedule, psi0, ctrl, scale)
    for _ in range(ctrl.max_refinements):
        scale /= 2.0
        cur = _propagate(schedule, psi0, ctrl, scale)
        if np.max(np.abs(cur - prev)) < ctrl.tolerance:
            return scale
        prev = cur
    return scale


def evolve_raw(schedule: ControlSchedule, psi: np.ndarray, ctrl: Optional[IntegrationControl] = None, scale: float = 1.0) -> np.ndarray:
    """Single fixed-step pass without refinement; ``psi`` has shape (dim,) or (dim, k)."""
    ctrl = ctrl or IntegrationControl()
    arr = np.asarray(psi, dtype=complex)
    out = _propagate(schedule, arr.reshape(arr.shape[0], -1), ctrl, scale)
    return out.reshape(arr.shape)


def propagator(schedule: ControlSchedule, ctrl: Optional[IntegrationControl] = None) -> np.ndarray:
    """Full-space propagator, column k being the evolved basis state k."""
    ctrl = ctrl or IntegrationControl()
    dim = core.dimension(schedule.n_max)
    u = _converged(schedule, np.eye(dim, dtype=complex), ctrl)
    return _renormalize(u)


# --------------------------------------------------------------------------
# calibration helpers


def stark_shift_model(amplitude, c2: float):
    """Drive-induced shift c2 * amplitude^2 of the coupled transition (rad/s)."""
    return c2 * np.asarray(amplitude, dtype=float) ** 2 if np.ndim(amplitude) else c2 * float(amplitude) ** 2


def stark_detuning_error(amplitude: float, c2: float, scale_error: float) -> float:
    """Frequency error left after compensating the Stark shift at a wrong drive amplitude.

    The drive is set for ``amplitude`` while the device sees
    ``amplitude * (1 + scale_error)``.
    """
    return stark_shift_model(amplitude * (1.0 + scale_error), c2) - stark_shift_model(amplitude, c2)


def aligned_phase(v: core.SubspaceVector, branch: str, g: float, delta: float = 0.0) -> tuple[float, float]:
    """Coupling phase that makes ``v`` the ``branch`` dressed state.

    Returns ``(phi, overlap)`` where ``overlap`` is |<psi_branch(phi)|v>|^2.
    """
    from .analytic import CouplingParams, eigenstates

    if branch not in ("minus", "plus"):
        raise ValueError("branch must be 'minus' or 'plus'")
    a, b = v.amplitudes
    if abs(a) < 1e-15:
        raise ValueError("state has no |f,n> component; alignment undefined")
    phi = float(np.angle(b / a)) + (math.pi if branch == "minus" else 0.0)
    minus, plus = eigenstates(CouplingParams(g=g, delta=delta, n=v.n, phi=phi))
    ref = minus if branch == "minus" else plus
    return phi, abs(ref.vdot(v.normalize())) ** 2
