"""
Closed-form theory for a single {|f,n>, |g,n+1>} block.

Matrix convention (rotating frame, basis order (|f,n>, |g,n+1>))::

    H_n = [[ -delta/2,               g sqrt(n+1) e^{-i phi} ],
           [  g sqrt(n+1) e^{+i phi}, +delta/2              ]]

With this sign of the coupling phase the dressed states

    psi_minus = cos(theta/2)|f,n> - sin(theta/2) e^{i phi}|g,n+1>
    psi_plus  = sin(theta/2)|f,n> + cos(theta/2) e^{i phi}|g,n+1>

are eigenvectors with energies -/+ 1/2 sqrt(delta^2 + 4 g^2 (n+1)), and their
Berry connection gives the open-path phases returned by
``geometric_phase_open``. All frequencies are angular (rad/s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import SubspaceVector

TWO_PI = 2.0 * math.pi


def wrap_phase(x, lower: float = -math.pi):
    """Map ``x`` into ``[lower, lower + 2 pi)``."""
    return np.mod(np.asarray(x, dtype=float) - lower, TWO_PI) + lower


def wrap_pm_pi(x):
    """Map into (-pi, pi]."""
    y = -wrap_phase(-np.asarray(x, dtype=float))
    return float(y) if np.ndim(y) == 0 else y


@dataclass(frozen=True)
class CouplingParams:
    g: float
    delta: float = 0.0
    n: int = 0
    phi: float = 0.0

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError("coupling g must be > 0")
        if self.n < 0 or int(self.n) != self.n:
            raise ValueError("photon index n must be a non-negative integer")

    @property
    def g_n(self) -> float:
        """Effective block coupling g sqrt(n+1)."""
        return self.g * math.sqrt(self.n + 1)

    @property
    def rabi(self) -> float:
        """Generalized Rabi frequency sqrt(delta^2 + 4 g^2 (n+1))."""
        return math.hypot(self.delta, 2.0 * self.g_n)


@dataclass(frozen=True)
class MixingAngle:
    theta: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= math.pi:
            raise ValueError("mixing angle must lie in [0, pi]")

    def __float__(self):
        return self.theta


@dataclass(frozen=True)
class PhasePair:
    """Phases for the (minus, plus) dressed states, stored unreduced."""

    minus: float
    plus: float

    def reduced(self) -> "PhasePair":
        return PhasePair(float(wrap_phase(self.minus, 0.0)), float(wrap_phase(self.plus, 0.0)))

    @property
    def difference(self) -> float:
        """plus - minus."""
        return self.plus - self.minus

    def __iter__(self):
        yield self.minus
        yield self.plus


@dataclass(frozen=True)
class SemiclassicalField:
    mu: float
    alpha: float
    phi: float = 0.0
    delta: float = 0.0

    @property
    def vector(self) -> np.ndarray:
        b = 2.0 * self.mu * self.alpha
        return np.array([b * math.cos(self.phi), b * math.sin(self.phi), self.delta])


def _theta(theta) -> float:
    return theta.theta if isinstance(theta, MixingAngle) else float(theta)


def hamiltonian_block(p: CouplingParams) -> np.ndarray:
    c = p.g_n
    return np.array(
        [
            [-p.delta / 2.0, c * np.exp(-1j * p.phi)],
            [c * np.exp(1j * p.phi), p.delta / 2.0],
        ],
        dtype=complex,
    )


def block_energies(p: CouplingParams) -> PhasePair:
    half = 0.5 * p.rabi
    return PhasePair(-half, half)


def mixing_angle(g: float, delta: float, n: int = 0) -> MixingAngle:
    """theta = atan2(2 g sqrt(n+1), delta); pi/2 at resonance, (pi/2, pi) for delta < 0."""
    if not g > 0:
        raise ValueError("g must be > 0")
    return MixingAngle(math.atan2(2.0 * g * math.sqrt(n + 1), delta))


def eigenstates(p: CouplingParams) -> tuple[SubspaceVector, SubspaceVector]:
    """(psi_minus, psi_plus) with real non-negative |f,n> coefficients."""
    th = mixing_angle(p.g, p.delta, p.n).theta
    c, s = math.cos(th / 2.0), math.sin(th / 2.0)
    ph = np.exp(1j * p.phi)
    minus = SubspaceVector([c, -s * ph], p.n)
    plus = SubspaceVector([s, c * ph], p.n)
    return minus, plus


def berry_phase_closed(g: float, delta: float, n: int = 0) -> PhasePair:
    """Closed-loop Berry phases pi [1 -/+ delta / sqrt(delta^2 + 4 g^2 (n+1))]."""
    if not g > 0:
        raise ValueError("g must be > 0")
    cos_t = delta / math.hypot(delta, 2.0 * g * math.sqrt(n + 1))
    return PhasePair(math.pi * (1.0 + cos_t), math.pi * (1.0 - cos_t))


def geometric_phase_open(theta, dphi: float) -> PhasePair:
    """Open-path phases -(1 -/+ cos theta) dphi / 2 of psi_minus / psi_plus."""
    ct = math.cos(_theta(theta))
    return PhasePair(-(1.0 - ct) * dphi / 2.0, -(1.0 + ct) * dphi / 2.0)


def dynamic_phase(g: float, delta: float, n: int, tau: float) -> PhasePair:
    """xi_-/+ = -/+ (tau/2) sqrt(delta^2 + 4 g^2 (n+1)), i.e. E_-/+ * tau.

    The phase factor physically acquired under exp(-i H t) is exp(-i xi).
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    half = 0.5 * tau * math.hypot(delta, 2.0 * g * math.sqrt(n + 1))
    return PhasePair(-half, half)


@dataclass(frozen=True)
class OpenLoopTerms:
    """Branch weights and phases of the open-loop interference formula."""

    a_minus: complex
    a_plus: complex
    chi_minus: float
    chi_plus: float

    @property
    def probability(self) -> float:
        am, ap = abs(self.a_minus), abs(self.a_plus)
        return (ap - am) ** 2 + 4.0 * ap * am * math.cos(0.5 * (self.chi_plus - self.chi_minus)) ** 2


def openloop_terms(initial: SubspaceVector, p: CouplingParams, tau: float, dphi: float) -> OpenLoopTerms:
    """A_alpha and chi_alpha for a single sudden-on, adiabatic-ramp, sudden-off pulse.

    The ramp runs from ``p.phi`` to ``p.phi + dphi``.
    """
    start = eigenstates(p)
    end = eigenstates(replace(p, phi=p.phi + dphi))
    xi = dynamic_phase(p.g, p.delta, p.n, tau)
    gam = geometric_phase_open(mixing_angle(p.g, p.delta, p.n), dphi)
    out = {}
    for k, (s0, s1, x, gm) in enumerate(zip(start, end, xi, gam)):
        before = s0.vdot(initial)          # <psi_alpha(0)|init>
        after = s1.vdot(initial)           # <psi_alpha(dphi)|init>
        a = np.conj(after) * before
        chi = x + gm + (np.angle(before) if before != 0 else 0.0) - (np.angle(after) if after != 0 else 0.0)
        out[k] = (complex(a), float(chi))
    return OpenLoopTerms(out[0][0], out[1][0], out[0][1], out[1][1])


def openloop_probability_general(initial: SubspaceVector, p: CouplingParams, tau: float, dphi: float) -> float:
    """Return-probability to ``initial`` after an adiabatic open-loop pulse.

    Evaluated as |sum_alpha <i|psi_alpha(dphi)> e^{i xi + i gamma} <psi_alpha(0)|i>|^2.
    ``openloop_terms(...).probability`` gives the same number through the
    A/chi decomposition.
    """
    if abs(initial.norm() - 1.0) > 1e-9:
        raise ValueError("initial state must be normalized")
    start = eigenstates(p)
    end = eigenstates(replace(p, phi=p.phi + dphi))
    xi = dynamic_phase(p.g, p.delta, p.n, tau)
    gam = geometric_phase_open(mixing_angle(p.g, p.delta, p.n), dphi)
    amp = 0j
    for s0, s1, x, gm in zip(start, end, xi, gam):
        amp += initial.vdot(s1) * np.exp(1j * (x + gm)) * s0.vdot(initial)
    return float(abs(amp) ** 2)


def openloop_probability_fstate(g: float, delta: float, n: int, tau: float, dphi: float) -> float:
    """cos^2 theta + sin^2 theta cos^2[(xi+ - xi- + gamma+ - gamma-)/2] for the |f,n> start."""
    th = mixing_angle(g, delta, n).theta
    xi = dynamic_phase(g, delta, n, tau)
    gam = geometric_phase_open(th, dphi)
    arg = 0.5 * (xi.plus - xi.minus + gam.plus - gam.minus)
    return math.cos(th) ** 2 + math.sin(th) ** 2 * math.cos(arg) ** 2


def echo_substitution(p: CouplingParams) -> CouplingParams:
    """Parameters of sigma_y H sigma_y: delta -> -delta, phi -> pi - phi."""
    return replace(p, delta=-p.delta, phi=math.pi - p.phi)


def echo_conjugated(h: np.ndarray) -> np.ndarray:
    """e^{-i sigma_y pi/2} H e^{i sigma_y pi/2}."""
    r = np.array([[0, -1], [1, 0]], dtype=complex)  # e^{-i sigma_y pi/2}
    return r @ h @ r.conj().T


def linear_ramp_propagator(p: CouplingParams, tau: float, dphi: float) -> np.ndarray:
    """Exact 2x2 propagator for constant amplitude and a linear phase ramp.

    In the frame co-rotating with the coupling phase the Hamiltonian is
    constant, so the evolution is a single matrix exponential. No adiabatic
    approximation is made.
    """
    rate = dphi / tau if tau > 0 else 0.0
    c = p.g_n
    h_rot = np.array([[-p.delta / 2.0, c], [c, p.delta / 2.0 + rate]], dtype=complex)
    d0 = np.diag([1.0, np.exp(1j * p.phi)])
    d1 = np.diag([1.0, np.exp(1j * (p.phi + dphi))])
    return d1 @ _expm_hermitian(h_rot, tau) @ d0.conj().T


def _expm_hermitian(h: np.ndarray, t: float) -> np.ndarray:
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def solid_angle_cap(theta) -> float:
    th = _theta(theta)
    if not 0.0 <= th <= math.pi:
        raise ValueError("theta must lie in [0, pi]")
    return TWO_PI * (1.0 - math.cos(th))


def berry_from_solid_angle(omega: float) -> float:
    return omega / 2.0


def bloch_vector(v: SubspaceVector) -> np.ndarray:
    """Bloch vector with |f,n> at the north pole."""
    a, b = v.amplitudes / v.norm()
    ab = np.conj(a) * b
    return np.array([2 * ab.real, 2 * ab.imag, abs(a) ** 2 - abs(b) ** 2])


def triangle_excess(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Signed solid angle of geodesic triangles (rows of unit vectors).

    Positive for counter-clockwise orientation seen from outside the sphere.
    """
    num = np.einsum("...i,...i->...", a, np.cross(b, c))
    den = 1.0 + np.einsum("...i,...i->...", a, b) + np.einsum("...i,...i->...", b, c) + np.einsum("...i,...i->...", c, a)
    return 2.0 * np.arctan2(num, den)


def closed_path_area(path_fn, anchor: np.ndarray, tol: float = 1e-8, max_points: int = 1 << 20) -> float:
    """Signed area of anchor -> path(0..1) -> anchor with geodesic closing legs.

    ``path_fn`` maps parameters in [0, 1] to unit vectors. The open path is
    refined by doubling the number of chords until the Richardson-extrapolated
    area changes by less than ``tol``.
    """

    def fan(k: int) -> float:
        pts = path_fn(np.linspace(0.0, 1.0, k + 1))
        anc = np.broadcast_to(anchor, pts[:-1].shape)
        return float(np.sum(triangle_excess(anc, pts[:-1], pts[1:])))

    k = 16
    prev = fan(k)
    best = None
    while k < max_points:
        k *= 2
        cur = fan(k)
        extrap = (4.0 * cur - prev) / 3.0
        if best is not None and abs(extrap - best) < tol:
            return extrap
        best, prev = extrap, cur
    raise RuntimeError("spherical area did not converge")


def geodesic_closure_angles(theta, dphi: float, tol: float = 1e-8) -> tuple[float, float, float]:
    """Solid angles of the open dressed-state paths closed through |f,n>.

    Each eigenstate path (phase 0 -> dphi at fixed mixing angle) is joined to
    the north pole by meridian geodesics, and the enclosed area is integrated
    numerically. Angles are returned in the phase orientation, i.e. such that
    gamma_alpha = omega_alpha / 2. Returns (omega_minus, omega_plus,
    omega_plus - omega_minus).
    """
    th = _theta(theta)
    if not 0.0 <= dphi <= TWO_PI:
        raise ValueError("dphi must lie in [0, 2 pi]")
    if th <= 1e-12 or th >= math.pi - 1e-12:
        raise ValueError("geodesic closure is degenerate: a path endpoint is antipodal to |f,n>")
    if dphi == 0.0:
        return 0.0, 0.0, 0.0
    north = np.array([0.0, 0.0, 1.0])
    omegas = [-closed_path_area(_eigenstate_path(k, th, dphi), north, tol=tol) for k in (0, 1)]
    return omegas[0], omegas[1], omegas[1] - omegas[0]


def _eigenstate_path(which: int, theta: float, dphi: float):
    """Bloch path of psi_minus (which=0) or psi_plus (which=1) for phi in [0, dphi].

    Built from the eigenstate amplitudes, evaluated on arrays.
    """
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)

    def fn(u):
        ph = np.exp(1j * np.asarray(u) * dphi)
        if which == 0:
            a, b = c * np.ones_like(ph), -s * ph
        else:
            a, b = s * np.ones_like(ph), c * ph
        ab = np.conj(a) * b
        return np.stack([2 * ab.real, 2 * ab.imag, np.abs(a) ** 2 - np.abs(b) ** 2], axis=-1)

    return fn


def semiclassical_path(field: SemiclassicalField, dphi: float = TWO_PI) -> tuple[float, float]:
    """Polar angle of the classical effective field and half its swept solid angle.

    The field (2 mu alpha cos phi, 2 mu alpha sin phi, delta) precesses about z;
    an aligned spin picks up (1 - cos theta) dphi / 2.
    """
    theta = math.atan2(2.0 * field.mu * field.alpha, field.delta)
    return theta, (1.0 - math.cos(theta)) * dphi / 2.0


def quantized_equivalent_field(g: float, delta: float, n: int, mu: Optional[float] = None) -> SemiclassicalField:
    """Classical field whose precession cone matches the quantized n-photon block.

    Requires alpha = (g / mu) sqrt(n+1); with mu = g the drive amplitude is
    sqrt(n+1), which stays finite for the vacuum where a classical drive has
    alpha = 0.
    """
    mu = g if mu is None else mu
    return SemiclassicalField(mu=mu, alpha=g * math.sqrt(n + 1) / mu, delta=delta)


def adiabaticity(g: float, tau: float) -> float:
    """A = pi / (g tau)."""
    if not g > 0 or not tau > 0:
        raise ValueError("g and tau must be > 0")
    return math.pi / (g * tau)
