"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion k: PASS|FAIL`` line with the measured
numbers, then asserts at the stated tolerance.
"""

import math

import numpy as np

from jcberry import analytic as an
from jcberry import core, dynamics as dy
from jcberry import estimation as est
from jcberry import pipelines as pl
from jcberry import protocols as pr
from jcberry.analytic import CouplingParams
from jcberry.core import StateVector

MHZ = 2 * math.pi * 1e6
PI = math.pi


def test_criterion_1_resonant_ramsey(criterion):
    gamma = pl.ramsey_loop_phase(0, "minus", 420e-9, pl.fig3_device()).gamma
    err = abs(an.wrap_pm_pi(gamma - PI))
    assert criterion(1, err < 0.05, f"gamma={gamma:.4f} rad, |gamma-pi|={err:.4f} (tol 0.05)")


def test_criterion_2_adiabaticity_crossover(criterion):
    device = pl.fig3_device()
    taus = [0.1e-6, 0.15e-6, 0.2e-6, 0.3e-6, 0.5e-6, 0.7e-6, 1.0e-6, 1.5e-6, 2.0e-6, 3.0e-6, 5.0e-6]
    dev = {}
    for row in pl.fig3c_table(taus, device):
        key = (round(row["tau_us"], 6), row["branch"])
        dev[key] = abs(an.wrap_pm_pi(row["gamma_rad"] - PI))
    slow = max(v for (t, _), v in dev.items() if t >= 1.0)
    fast = max(v for (t, _), v in dev.items() if t <= 0.2)
    ok = slow < 0.1 and fast > 0.1
    assert criterion(2, ok, f"max|gamma-pi| for tau>=1us: {slow:.4f} (need <0.1); for tau<=0.2us: {fast:.4f} (need >0.1)")


def test_criterion_3_photon_number_independence(criterion):
    rows = pl.fig3d_table(range(5), pl.fig3_device(n_max=5), tau=20e-6, k=40)
    mean = float(np.mean([r["gamma_rad"] for r in rows]))
    ok = 3.04 <= mean <= 3.24
    assert criterion(3, ok, f"mean over {len(rows)} phases = {mean:.4f} rad (window [3.04, 3.24])")


def test_criterion_4_detuned_difference_and_global_fit(criterion):
    device = pr.DeviceParams(g=4.49 * MHZ)
    deltas = np.array([-15, -10, -5, -2.5, 0, 2.5, 5, 10, 15]) * MHZ
    res = pl.fig4c_table(range(4), deltas, device, workers=4)
    worst = 0.0
    for r in res.rows:
        if r["model_rad"] == 0.0:
            worst = max(worst, abs(r["gamma_diff_rad"]))  # resonance: both sides are exactly zero
        else:
            worst = max(worst, abs(r["residual_rad"] / r["model_rad"]))
    g_fit = res.fit["g"] / MHZ
    g_err = abs(g_fit / 4.49 - 1)
    ok = worst < 0.02 and g_err < 0.01
    assert criterion(4, ok, f"worst pointwise rel. error {worst:.4f} (tol 0.02); global g = {g_fit:.4f} MHz, rel. error {g_err:.2e} (tol 0.01)")


def test_criterion_5_oracle_equivalence(criterion):
    rng = np.random.default_rng(2024)
    worst_s = 0.0
    for _ in range(1000):
        p = CouplingParams(g=rng.uniform(0.1, 50) * MHZ, delta=rng.uniform(-60, 60) * MHZ, n=int(rng.integers(0, 9)))
        tau = rng.uniform(0, 5e-6)
        dphi = rng.uniform(-4 * PI, 4 * PI)
        general = an.openloop_probability_general(core.SubspaceVector([1, 0], p.n), p, tau, dphi)
        worst_s = max(worst_s, abs(general - an.openloop_probability_fstate(p.g, p.delta, p.n, tau, dphi)))
    worst_g = 0.0
    for theta in np.linspace(0.1, PI - 0.1, 15):
        for dphi in np.linspace(0.2, 2 * PI, 15):
            _, _, diff = an.geodesic_closure_angles(theta, dphi)
            g = an.geometric_phase_open(theta, dphi)
            worst_g = max(worst_g, abs(an.wrap_pm_pi(diff - 2 * (g.plus - g.minus))))
    ok = worst_s < 1e-12 and worst_g < 1e-6
    assert criterion(5, ok, f"reduced vs general max diff {worst_s:.1e} (tol 1e-12); geodesic vs closed form {worst_g:.1e} rad (tol 1e-6)")


def test_criterion_6_adiabatic_numeric_vs_analytic(criterion):
    g = 4.49 * MHZ
    worst = 0.0
    for delta_mhz, n in [(0.0, 0), (5.0, 0), (-8.0, 1), (12.0, 2)]:
        delta = delta_mhz * MHZ
        tau = PI / (0.1 * g)  # A = 0.1
        p = CouplingParams(g=g, delta=delta, n=n)
        xi = an.dynamic_phase(g, delta, n, tau)
        closed = an.berry_phase_closed(g, delta, n)
        s = dy.ControlSchedule([dy.coupling_pulse(tau, g, sweep=2 * PI, detuning=delta, subspace=n, rise_time=0.0)], n + 1)
        for k, br in enumerate(("minus", "plus")):
            v = an.eigenstates(p)[k]
            out = core.project_subspace(dy.evolve(s, core.embed_subspace(v, n + 1)), n)
            berry = an.wrap_pm_pi(float(np.angle(v.vdot(out))) + getattr(xi, br))
            worst = max(worst, abs(an.wrap_pm_pi(berry - getattr(closed, br))))
    assert criterion(6, worst < 1e-3, f"A=0.1 worst |numeric-analytic| = {worst:.4f} rad (tol 1e-3)")


def test_criterion_7_echo_cancellation(criterion):
    device = pr.DeviceParams()
    d1 = -5 * MHZ
    design = pl.echo_design(device, 1, d1)
    a = pl.echo_phase(1, d1, device, tau=design.tau)
    b = pl.echo_phase(1, d1, device, tau=2 * design.tau)
    doubling = abs(a.magnitude - b.magnitude)

    tau_half = 0.89 / (2 * PI * 90e3)
    d = 10 * MHZ
    grid = pl.echo_design(device, 0, d).dphi_grid
    clean = pl.echo_phase(0, d, device, tau=tau_half, dphi_grid=grid)
    dirty = pl.echo_phase(0, d, device, tau=tau_half, dphi_grid=grid, detuning_error=2 * PI * 90e3)
    shift = abs(an.wrap_pm_pi(dirty.fit.phase - clean.fit.phase)) / clean.fit.frequency
    dgamma = abs(dirty.magnitude - clean.magnitude)
    ok = doubling < 1e-2 and abs(shift / 0.89 - 1) < 0.05 and dgamma < 1e-3
    assert criterion(7, ok, f"doubling change {doubling:.2e} (tol 1e-2); pattern shift {shift:.4f} rad (target 0.89); "
                            f"gamma change under error {dgamma:.2e} (tol 1e-3)")


def test_criterion_8_calibration_recovery(criterion):
    deltas = np.linspace(-12, 12, 25) * MHZ
    taus = np.linspace(10e-9, 400e-9, 80)
    parts, ok = [], True
    for g_mhz in (4.12, 6.21):
        device = pr.DeviceParams(g=g_mhz * MHZ)
        cal = pl.rabi_calibration(device, deltas, taus, ns=(0, 1, 2, 3), workers=4)
        g0 = cal.g_n[0] / MHZ
        g_all = cal.gn_fit["g"] / MHZ
        omega0 = cal.omega_r[0][int(np.argmin(np.abs(deltas)))]
        r2 = cal.linear_fit.extra["r_squared"]
        good = (abs(g0 / g_mhz - 1) < 0.01 and abs(g_all / g_mhz - 1) < 0.01
                and abs(omega0 / (2 * device.g) - 1) < 0.01 and r2 > 0.9999)
        ok &= good
        parts.append(f"g={g_mhz}: fit {g0:.4f}/{g_all:.4f} MHz, Omega_R(0)/2g={omega0 / (2 * device.g):.5f}, R2={r2:.6f}")
    assert criterion(8, ok, "; ".join(parts))


def test_criterion_9_property_suites(criterion):
    rng = np.random.default_rng(77)
    failures = []

    # Hermiticity and unitarity
    for _ in range(20):
        p = CouplingParams(g=rng.uniform(0.1, 50) * MHZ, delta=rng.uniform(-60, 60) * MHZ,
                           n=int(rng.integers(0, 9)), phi=rng.uniform(-PI, PI))
        if not core.is_hermitian(an.hamiltonian_block(p)):
            failures.append("hermiticity")
    seg = dy.coupling_pulse(300e-9, 4.49 * MHZ, phase=0.3, sweep=2 * PI, detuning=2 * MHZ, rise_time=10e-9)
    sched = dy.ControlSchedule([seg, dy.rotation("ef", 1.1, 0.2), dy.gap(30e-9, detuning=MHZ)], 3)
    if not core.is_hermitian(dy.hamiltonian_at(sched, 120e-9)):
        failures.append("hermiticity(schedule)")
    if core.unitarity_error(dy.propagator(sched)) > 1e-8:
        failures.append("unitarity")

    # norm preservation
    v = rng.normal(size=12) + 1j * rng.normal(size=12)
    out = dy.evolve(sched, StateVector(v / np.linalg.norm(v), 3))
    if abs(out.norm() - 1) > 1e-10:
        failures.append("norm")

    # closed loop and open loop at 2 pi agree mod 2 pi
    for _ in range(200):
        g, delta, n = rng.uniform(0.1, 50) * MHZ, rng.uniform(-60, 60) * MHZ, int(rng.integers(0, 9))
        o = an.geometric_phase_open(an.mixing_angle(g, delta, n), 2 * PI).reduced()
        c = an.berry_phase_closed(g, delta, n).reduced()
        for x, y in ((o.minus, c.minus), (o.plus, c.plus)):
            dd = abs(x - y)
            if min(dd, 2 * PI - dd) > 1e-12:
                failures.append("mod-2pi")

    # linearity in the sweep: closed form and simulated echo pattern
    for _ in range(200):
        theta, dphi, k = rng.uniform(0, PI), rng.uniform(-10, 10), int(rng.integers(-5, 6))
        base, scaled = an.geometric_phase_open(theta, dphi), an.geometric_phase_open(theta, k * dphi)
        if abs(scaled.minus - k * base.minus) > 1e-12 or abs(scaled.plus - k * base.plus) > 1e-12:
            failures.append("linearity")
    rec = pr.echo_openloop(0, 10 * MHZ, 20e-6, np.linspace(0, 3 * PI, 41))
    fit = est.fit_sinusoid(rec.grid, rec["p_f"])
    y = rec["p_f"]
    r2 = 1 - np.sum((y - est.sinusoid_model(fit.params, rec.grid)) ** 2) / np.sum((y - y.mean()) ** 2)
    if r2 <= 0.9999:
        failures.append(f"echo linearity (R2={r2:.6f})")

    # integrator order
    orders = {}
    conv = dy.ControlSchedule([dy.coupling_pulse(400e-9, 4.49 * MHZ, sweep=2 * PI, detuning=3 * MHZ, rise_time=20e-9)], 2)
    psi = StateVector.basis(2, "f", 0).amplitudes
    for method in ("magnus4", "rk4"):
        ctrl = dy.IntegrationControl(base_step=5e-9, method=method)
        ref = dy.evolve_raw(conv, psi, ctrl, 1 / 32)
        e1 = np.max(np.abs(dy.evolve_raw(conv, psi, ctrl, 1 / 2) - ref))
        e2 = np.max(np.abs(dy.evolve_raw(conv, psi, ctrl, 1 / 4) - ref))
        orders[method] = math.log2(e1 / e2)
        if not 3.5 <= orders[method] <= 4.5:
            failures.append(f"order {method}")

    ok = not failures
    detail = "orders " + ", ".join(f"{k}={v:.2f}" for k, v in orders.items())
    detail += "; failures: " + (", ".join(sorted(set(failures))) if failures else "none")
    assert criterion(9, ok, detail)
