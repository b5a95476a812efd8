"""
Least-squares fitting and phase extraction.

Sinusoid fits start from a coarse scan of candidate frequencies (each one a
linear least-squares problem for offset and quadrature amplitudes) and are
refined with Levenberg-Marquardt, i.e. damped Gauss-Newton, from
``scipy.optimize.least_squares``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .analytic import wrap_pm_pi

TWO_PI = 2.0 * math.pi
VISIBILITY_FLOOR = 0.02
XTOL = 1e-10


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class SinusoidFit:
    """``y = offset + amplitude * sin(frequency * x + phase)``.

    ``frequency`` is angular, per unit of ``x``. ``diagnosis`` is empty for
    a usable fit and otherwise one of ``"zero_amplitude"``,
    ``"low_visibility"``, ``"under_one_period"``, ``"no_convergence"``.
    """

    amplitude: float
    frequency: float
    phase: float
    offset: float
    residual_norm: float
    converged: bool
    stderr: dict = field(default_factory=dict)
    iterations: int = 0
    diagnosis: str = ""

    @property
    def visibility(self) -> float:
        return self.amplitude / abs(self.offset) if self.offset != 0 else math.inf

    @property
    def params(self) -> np.ndarray:
        return np.array([self.offset, self.amplitude, self.frequency, self.phase])


@dataclass(frozen=True)
class FitResult:
    names: tuple
    values: np.ndarray
    stderr: np.ndarray
    residual_norm: float
    iterations: int = 0
    converged: bool = True
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "stderr", np.abs(np.asarray(self.stderr, dtype=float)))

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def error(self, name: str) -> float:
        return float(self.stderr[self.names.index(name)])

    def to_json(self) -> str:
        return json.dumps(
            {
                "parameters": {
                    n: {"estimate": float(v), "standard_error": float(e)}
                    for n, v, e in zip(self.names, self.values, self.stderr)
                },
                "residual_norm": self.residual_norm,
                "iterations": self.iterations,
                "converged": self.converged,
                "uncertainty": "fit standard error from the residual covariance",
            },
            sort_keys=True,
        )


def _stderr(jac: np.ndarray, resid: np.ndarray) -> np.ndarray:
    m, p = jac.shape
    dof = max(m - p, 1)
    s2 = float(resid @ resid) / dof
    try:
        cov = np.linalg.pinv(jac.T @ jac) * s2
    except np.linalg.LinAlgError:
        return np.full(p, np.nan)
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


# --------------------------------------------------------------------------
# sinusoids


def sinusoid_model(p, x):
    c, a, w, ph = p
    return c + a * np.sin(w * np.asarray(x) + ph)


def sinusoid_jacobian(p, x):
    c, a, w, ph = p
    x = np.asarray(x, dtype=float)
    s, co = np.sin(w * x + ph), np.cos(w * x + ph)
    return np.column_stack([np.ones_like(x), s, a * x * co, a * co])


def _linear_at(x, y, w):
    design = np.column_stack([np.ones_like(x), np.sin(w * x), np.cos(w * x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    r = design @ coef - y
    return float(r @ r), coef


def _coarse_frequency(x, y) -> float:
    span = x.max() - x.min()
    w_max = math.pi / float(np.min(np.diff(np.sort(x))))
    w_min = 0.5 * math.pi / span
    step = math.pi / (8.0 * span)
    cands = np.arange(w_min, w_max + step, step)
    best = min(cands, key=lambda w: _linear_at(x, y, w)[0])
    return float(best)


def _canonical(p):
    c, a, w, ph = map(float, p)
    if w < 0:
        w, ph, a = -w, -ph, -a
    if a < 0:
        a, ph = -a, ph + math.pi
    return c, a, w, wrap_pm_pi(ph)


def fit_sinusoid(
    x,
    y,
    frequency: Optional[float] = None,
    *,
    visibility_floor: float = VISIBILITY_FLOOR,
    initial: Optional[SinusoidFit] = None,
) -> SinusoidFit:
    """Least-squares fit of offset + amplitude * sin(frequency * x + phase).

    Parameters
    ----------
    x, y : array_like
        Samples. Without ``frequency`` at least 8 points are needed.
    frequency : float, optional
        Known angular frequency; only offset, amplitude and phase are fitted.
    visibility_floor : float
        Fits with amplitude / |offset| below this are flagged
        ``converged=False`` with ``diagnosis="low_visibility"``.
    initial : SinusoidFit, optional
        Start from these parameters instead of the frequency scan.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    order = np.argsort(x)
    x, y = x[order], y[order]
    if frequency is None and x.size < 8:
        raise ValueError("need at least 8 points when the frequency is not supplied")
    if frequency is not None and x.size < 3:
        raise ValueError("need at least 3 points")

    spread = float(np.ptp(y))
    scale = max(float(np.max(np.abs(y))), 1e-300)
    if spread <= 1e-12 * scale or spread == 0.0:
        c = float(np.mean(y))
        return SinusoidFit(0.0, float(frequency or 0.0), 0.0, c, float(np.linalg.norm(y - c)), False, diagnosis="zero_amplitude")

    if frequency is not None:
        w = float(frequency)
        rss, coef = _linear_at(x, y, w)
        c, a, _, ph = _canonical([coef[0], math.hypot(coef[1], coef[2]), w, math.atan2(coef[2], coef[1])])
        design = np.column_stack([np.ones_like(x), np.sin(w * x + ph), a * np.cos(w * x + ph)])
        resid = sinusoid_model([c, a, w, ph], x) - y
        err = _stderr(design, resid)
        fit = SinusoidFit(a, w, ph, c, float(np.linalg.norm(resid)), True,
                          {"offset": err[0], "amplitude": err[1], "frequency": 0.0, "phase": err[2]}, 1)
        return _flag(fit, x, visibility_floor, check_period=False)

    if initial is not None:
        p0 = initial.params
    else:
        w0 = _coarse_frequency(x, y)
        _, coef = _linear_at(x, y, w0)
        p0 = np.array([coef[0], math.hypot(coef[1], coef[2]), w0, math.atan2(coef[2], coef[1])])
    sol = least_squares(
        lambda p: sinusoid_model(p, x) - y,
        p0,
        jac=lambda p: sinusoid_jacobian(p, x),
        method="lm",
        xtol=XTOL,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=2000,
    )
    if sol.status <= 0 and abs(p0[1]) < visibility_floor * abs(p0[0]):
        # too weak to fit; report the coarse estimate as a low-visibility trace
        sol.x, sol.status = p0, 1
    c, a, w, ph = _canonical(sol.x)
    resid = sinusoid_model([c, a, w, ph], x) - y
    err = _stderr(sinusoid_jacobian([c, a, w, ph], x), resid)
    fit = SinusoidFit(
        a, w, ph, c, float(np.linalg.norm(resid)), bool(sol.status > 0),
        {"offset": err[0], "amplitude": err[1], "frequency": err[2], "phase": err[3]},
        int(sol.nfev), "" if sol.status > 0 else "no_convergence",
    )
    return _flag(fit, x, visibility_floor, check_period=True)


def _flag(fit: SinusoidFit, x, floor, check_period) -> SinusoidFit:
    from dataclasses import replace

    if not fit.converged:
        return fit
    if fit.amplitude == 0.0:
        return replace(fit, converged=False, diagnosis="zero_amplitude")
    if fit.visibility < floor:
        return replace(fit, converged=False, diagnosis="low_visibility")
    if check_period and fit.frequency * float(np.ptp(x)) < TWO_PI * (1 - 1e-9):
        return replace(fit, converged=False, diagnosis="under_one_period")
    return fit


def extract_phase_shift(a: SinusoidFit, b: SinusoidFit, rel_tol: float = 0.01) -> float:
    """phase(a) - phase(b), wrapped into (-pi, pi]."""
    wa, wb = a.frequency, b.frequency
    if abs(wa - wb) > rel_tol * max(abs(wa), abs(wb)):
        raise FitError(f"fitted frequencies differ by more than {rel_tol:.0%}: {wa} vs {wb}")
    return wrap_pm_pi(a.phase - b.phase)


def unwrap_series(phases: Sequence[float], order: Optional[Sequence[float]] = None) -> np.ndarray:
    """Continuity-unwrapped copy of ``phases``, ordered by ``order`` if given,
    with the first point anchored in (-pi, pi]."""
    ph = np.asarray(phases, dtype=float)
    idx = np.argsort(order, kind="stable") if order is not None else np.arange(ph.size)
    out = np.empty_like(ph)
    seq = ph[idx]
    if seq.size:
        seq = np.unwrap(np.concatenate([[wrap_pm_pi(seq[0])], seq[1:]]))
    out[idx] = seq
    return out


def ramsey_phase(ref: SinusoidFit, loop: SinusoidFit) -> float:
    """Geometric phase from a reference/loop Ramsey pair, in [0, 2 pi)."""
    return float(extract_phase_shift(ref, loop) % TWO_PI)


def geometric_phase_from_frequency(fit: SinusoidFit) -> float:
    """gamma = pi * f, f being the number of oscillations per full 2 pi of dphi.

    ``fit.frequency`` is angular per radian of dphi, which is numerically the
    same as the count per 2 pi cycle. A flat trace gives 0.
    """
    if not fit.converged:
        if fit.diagnosis in ("zero_amplitude", "low_visibility"):
            return 0.0
        raise FitError(f"fit not usable: {fit.diagnosis}")
    return math.pi * fit.frequency


def signed_phase_difference(magnitude: float, delta: float) -> float:
    """Attach the sign of gamma_plus - gamma_minus, which is opposite to that of delta."""
    return -math.copysign(magnitude, delta) if delta != 0 else 0.0


# --------------------------------------------------------------------------
# spectroscopy and calibration fits


def rabi_model(delta, g, center):
    return np.sqrt((np.asarray(delta) - center) ** 2 + 4.0 * g * g)


def fit_rabi(delta, omega_r) -> FitResult:
    """Fit Omega_R = sqrt((delta - center)^2 + 4 g^2); ``center`` locates omega_d."""
    d = np.asarray(delta, dtype=float)
    w = np.asarray(omega_r, dtype=float)
    if d.size < 3:
        raise ValueError("need at least 3 detunings")
    i = int(np.argmin(w))
    if i == 0 or i == d.size - 1:
        raise FitError("Rabi-frequency minimum lies at the edge of the detuning grid")
    scale = float(np.max(np.abs(w)))
    sol = least_squares(
        lambda p: (rabi_model(d, p[0] * scale, p[1] * scale) - w) / scale,
        [w[i] / 2 / scale, d[i] / scale],
        method="lm",
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
    )
    g, center = abs(sol.x[0]) * scale, sol.x[1] * scale
    if not d.min() <= center <= d.max():
        raise FitError("fitted resonance outside the detuning grid")
    resid = rabi_model(d, g, center) - w
    err = _stderr(sol.jac, resid / scale) * scale
    return FitResult(("g", "center"), [g, center], err, float(np.linalg.norm(resid)), int(sol.nfev), sol.status > 0)


def rabi_frequency(record, key: str = "p_f") -> float:
    """Angular Rabi frequency of a P(tau) trace."""
    fit = fit_sinusoid(record.grid, record[key])
    if not fit.converged:
        raise FitError(f"Rabi trace fit failed: {fit.diagnosis}")
    return fit.frequency


def _ols(design, y):
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise FitError("rank-deficient design matrix")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = design @ coef - y
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return coef, resid, r2


def fit_linear(x, y) -> FitResult:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    design = np.column_stack([x, np.ones_like(x)])
    coef, resid, r2 = _ols(design, y)
    return FitResult(("slope", "intercept"), coef, _stderr(design, resid), float(np.linalg.norm(resid)),
                     extra={"r_squared": r2})


def fit_quadratic(x, y) -> FitResult:
    """y = c0 + c1 x + c2 x^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    design = np.column_stack([np.ones_like(x), x, x * x])
    coef, resid, r2 = _ols(design, y)
    return FitResult(("c0", "c1", "c2"), coef, _stderr(design, resid), float(np.linalg.norm(resid)),
                     extra={"r_squared": r2})


def fit_gn(n, gn_squared) -> FitResult:
    """Single-parameter fit of g_n^2 = g^2 (n + 1)."""
    m = np.asarray(n, dtype=float) + 1.0
    y = np.asarray(gn_squared, dtype=float)
    if np.any(m < 1):
        raise ValueError("photon numbers must be >= 0")
    g2 = float(m @ y / (m @ m))
    resid = g2 * m - y
    g = math.sqrt(g2)
    err_g2 = _stderr(m[:, None], resid)[0]
    return FitResult(("g",), [g], [err_g2 / (2 * g)], float(np.linalg.norm(resid)))


# --------------------------------------------------------------------------
# global fit of the dressed-state phase difference


def berry_difference_model(delta, g, n):
    """gamma_plus - gamma_minus = -2 pi delta / sqrt(delta^2 + 4 g^2 (n+1))."""
    delta = np.asarray(delta, dtype=float)
    return -TWO_PI * delta / np.sqrt(delta ** 2 + 4.0 * g * g * (n + 1))


def invert_berry_difference(delta: float, value: float, n: int = 0) -> float:
    """Coupling g reproducing a single measured phase difference."""
    if delta == 0 or value == 0 or abs(value) >= TWO_PI:
        raise ValueError("inversion needs 0 < |value| < 2 pi and nonzero delta")
    c = -value / TWO_PI
    if c * delta < 0:
        raise ValueError("sign of the phase difference inconsistent with delta")
    return abs(delta) * math.sqrt(1.0 / (c * c) - 1.0) / (2.0 * math.sqrt(n + 1))


def global_fit_berry(datasets, g0: Optional[float] = None, min_datasets: int = 2) -> FitResult:
    """Shared-g least-squares fit to several (n, delta grid, phase difference) sets.

    Parameters
    ----------
    datasets : iterable of (n, delta, values)
        ``delta`` in rad/s, ``values`` the measured gamma_plus - gamma_minus.
    g0 : float, optional
        Starting value; by default the median of pointwise inversions.
    """
    data = [(int(n), np.asarray(d, dtype=float), np.asarray(v, dtype=float)) for n, d, v in datasets]
    if len(data) < min_datasets:
        raise ValueError(f"need at least {min_datasets} datasets")
    if g0 is None:
        guesses = []
        for n, d, v in data:
            for di, vi in zip(d, v):
                try:
                    guesses.append(invert_berry_difference(di, vi, n))
                except ValueError:
                    pass
        if not guesses:
            raise FitError("no usable points to initialize g")
        g0 = float(np.median(guesses))
    scale = g0

    def resid(p):
        return np.concatenate([berry_difference_model(d, p[0] * scale, n) - v for n, d, v in data])

    sol = least_squares(resid, [1.0], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if sol.status <= 0:
        raise FitError("global fit did not converge")
    r = resid(sol.x)
    g = abs(sol.x[0]) * scale
    err = _stderr(sol.jac / scale, r)
    return FitResult(("g",), [g], err, float(np.linalg.norm(r)), int(sol.nfev), True,
                     {"points": int(r.size), "datasets": len(data)})
