"""Acceptance suite: one test per criterion, at the stated tolerances.

Each test prints a single `ACCEPTANCE <nn> <name>: PASS/FAIL` line (visible
with `pytest -s` or in captured output) and enforces the criterion with a
plain assert.  Benchmarks are fixed-seed and single-threaded; stated runtime
budgets hold on commodity hardware.
"""

import sys
import time

import numpy as np
import pytest

from roughflow.euler2d import (
    Kernel,
    discretize_vorticity,
    pair_period_oracle,
    simulate,
    step_rough_euler,
    wong_zakai_study,
)
from roughflow.gridfield import GridField, bump_field, gaussian_field
from roughflow.osgood import bihari_bound, builtin_modulus
from roughflow.particles import ParticleEnsemble
from roughflow.rde import (
    VectorFieldSet,
    constant_noise,
    expansion_drift,
    inverse_flow,
    jacobian_determinant,
    jacobian_probe_seeds,
    rotation_drift,
    solenoidal_sine_noise,
    solve_flow,
    solve_rde,
)
from roughflow.rough_core import TimeGrid
from roughflow.rough_path import NoiseSpec, canonical_lift, chen_defect, sample_noise
from roughflow.transport import (
    DensityField,
    DriverPair,
    TestFunction,
    TestFunctionSet,
    duality_check,
    lagrangian_sequence,
    particles_from_grid,
    rpde_remainder_diagnostic,
    solve_rce_lagrangian,
    solve_rte_lagrangian,
)

BOX2 = (-2.0, 2.0, -2.0, 2.0)
BOX3 = (-3.0, 3.0, -3.0, 3.0)


def report(num: int, name: str, passed: bool, detail: str, started: float) -> None:
    status = "PASS" if passed else "FAIL"
    line = (
        f"ACCEPTANCE {num:02d} {name}: {status} ({detail}; "
        f"{time.time() - started:.1f}s)"
    )
    print(line, file=sys.stderr)
    assert passed, line


def zero_driver(grid, dim=2):
    return canonical_lift(grid, np.zeros((len(grid), dim)))


def test_01_chen_relation():
    t0 = time.time()
    rng = np.random.default_rng(2718)
    grid = TimeGrid.uniform(0.0, 1.0, 40)
    worst = 0.0
    for _ in range(100):
        z = rng.standard_normal((41, 2)).cumsum(axis=0)
        rp = canonical_lift(grid, z)
        bound = 1e-12 * (1.0 + np.abs(z).max() ** 2)
        worst = max(worst, chen_defect(rp) / bound)
    samplers = [
        NoiseSpec("brownian", 2, grid, seed=1),
        NoiseSpec("fbm", 2, grid, seed=2, hurst=0.45),
        NoiseSpec("fbm", 1, grid, seed=3, hurst=0.8),
    ]
    for spec in samplers:
        rp = sample_noise(spec)
        bound = 1e-12 * (1.0 + np.abs(rp.first_level).max() ** 2)
        worst = max(worst, chen_defect(rp) / bound)
    report(
        1, "chen-relation", worst <= 1.0,
        f"max defect/bound = {worst:.2e} over 100 lifts + 3 samplers", t0,
    )


def test_02_circle_levy_area():
    t0 = time.time()
    grid = TimeGrid.dyadic(12)
    theta = 2 * np.pi * grid.times
    rp = canonical_lift(grid, np.stack([np.cos(theta), np.sin(theta)], axis=1))
    zz = rp.second(0, len(grid) - 1)
    area = 0.5 * (zz[0, 1] - zz[1, 0])
    err = abs(area - np.pi)
    report(2, "circle-levy-area", err <= 1e-3, f"|area - pi| = {err:.2e}", t0)


def test_03_davie_affine_exactness():
    t0 = time.time()
    sigma = np.array([[0.7, -0.2], [0.3, 1.1]])
    vfs = constant_noise(sigma)
    y0 = np.array([1.0, 2.0])
    worst = 0.0
    rng = np.random.default_rng(7)
    for grid in (
        TimeGrid.uniform(0, 1, 16),
        TimeGrid.uniform(0, 1, 1777),
        TimeGrid(np.concatenate([[0.0], np.sort(rng.uniform(0, 1, 61)), [1.0]])),
    ):
        rp = sample_noise(NoiseSpec("brownian", 2, grid, seed=42))
        traj = solve_rde(y0, None, vfs, rp)
        exact = y0 + sigma @ (rp.first_level[-1] - rp.first_level[0])
        worst = max(worst, float(np.abs(traj.terminal - exact).max()))
    report(
        3, "davie-affine-exactness", worst <= 1e-14,
        f"max terminal error = {worst:.2e} across 3 grids", t0,
    )


def test_04_davie_refinement_order():
    t0 = time.time()
    vfs = VectorFieldSet(
        1, 1, lambda x: x[:, :, None], lambda x: np.ones((x.shape[0], 1, 1, 1))
    )
    errs = []
    for lev in (6, 7, 8, 9):
        grid = TimeGrid.dyadic(lev)
        rp = canonical_lift(grid, grid.times.copy())
        traj = solve_rde(np.array([1.0]), None, vfs, rp)
        errs.append(abs(float(traj.terminal[0]) - np.e))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    report(
        4, "davie-refinement-order", bool(np.all(ratios >= 1.8)),
        "halving ratios = " + ", ".join(f"{r:.2f}" for r in ratios), t0,
    )


def test_05_inverse_flow_consistency():
    t0 = time.time()
    base_grid = TimeGrid.dyadic(13)
    base = sample_noise(NoiseSpec("brownian", 2, base_grid, seed=2024)).first_level
    b = rotation_drift(1.0)
    vfs = solenoidal_sine_noise(0.3, 1.0)
    seeds = np.random.default_rng(0).uniform(-1, 1, size=(100, 2))
    errs = []
    for lev in (10, 11, 12, 13):
        f = 2 ** (13 - lev)
        grid = TimeGrid(base_grid.times[::f])
        rp = canonical_lift(grid, base[::f])
        flow = solve_flow(seeds, b, vfs, rp)
        back = inverse_flow(flow.terminal, b, vfs, rp)
        errs.append(float(np.linalg.norm(back - seeds, axis=1).max()))
    ok = errs[0] <= 1e-3 and all(a > b_ for a, b_ in zip(errs, errs[1:]))
    report(
        5, "inverse-flow-consistency", ok,
        "sup errors over halvings = " + ", ".join(f"{e:.2e}" for e in errs), t0,
    )


def test_06_quasi_incompressibility():
    t0 = time.time()
    x = np.array([0.25, -0.15])
    fd = 1e-4
    seeds = jacobian_probe_seeds(x, fd)
    # divergence-free drift + divergence-free rough noise: volume preserved
    grid = TimeGrid.uniform(0, 1, 2000)
    rp = sample_noise(NoiseSpec("brownian", 2, grid, seed=11))
    flow = solve_flow(seeds, rotation_drift(1.0), solenoidal_sine_noise(0.25, 1.3), rp)
    det_err = abs(jacobian_determinant(flow, 1.0, x, fd) - 1.0)
    # compressible control b = c y reproduces exp(c d t)
    c, dim = 0.1, 2
    grid2 = TimeGrid.uniform(0, 1, 1000)
    flow2 = solve_flow(seeds, expansion_drift(c, dim), None, zero_driver(grid2))
    det2 = jacobian_determinant(flow2, 1.0, x, fd)
    exp_err = abs(det2 - np.exp(c * dim))
    ok = det_err <= 1e-3 and exp_err <= 1e-3
    report(
        6, "quasi-incompressibility", ok,
        f"|det-1| = {det_err:.2e}, |det - e^(cd)| = {exp_err:.2e}", t0,
    )


def test_07_bihari_bound():
    t0 = time.time()
    lin = builtin_modulus("linear", 1.0)
    lin_err = abs(bihari_bound(lin, 2.0, np.log(3.0)) - 6.0)
    lin2 = builtin_modulus("linear", 2.0)
    lin_err = max(lin_err, abs(bihari_bound(lin2, 0.3, 0.7) - 0.3 * np.exp(1.4)))
    ll = builtin_modulus("log-lipschitz")
    ll_err = 0.0
    for alpha, beta in ((0.1, 0.5), (1e-3, 1.0)):
        closed = np.exp(1.0 - (1.0 - np.log(alpha)) * np.exp(-beta))
        ll_err = max(ll_err, abs(bihari_bound(ll, alpha, beta) - closed))
    zero_ok = bihari_bound(ll, 0.0, 5.0) == 0.0 and bihari_bound(lin, 0.0, 100.0) == 0.0
    ok = lin_err <= 1e-8 and ll_err <= 1e-6 and zero_ok
    report(
        7, "bihari-bound", ok,
        f"linear err = {lin_err:.2e}, log-lip err = {ll_err:.2e}, M(0,b)=0: {zero_ok}",
        t0,
    )


@pytest.fixture(scope="module")
def duality_pipeline():
    nx = 256
    rho0 = gaussian_field(BOX2, nx, nx, center=(0.3, 0.0), width=0.35)
    f0 = bump_field(BOX2, nx, nx, center=(0.0, -0.2), radius=0.9)
    grid = TimeGrid.dyadic(10)
    rp = sample_noise(NoiseSpec("brownian", 2, grid, seed=77))
    b = rotation_drift(1.0)
    vfs = constant_noise(0.3 * np.eye(2))
    out = [0, 512, 1024]
    rho_seq = solve_rce_lagrangian(DensityField(grid=rho0), b, vfs, rp, out)
    f_seq = solve_rte_lagrangian(f0, b, vfs, rp, out)
    return rho0, rho_seq, f_seq, (b, vfs, rp, out)


def test_08_duality(duality_pipeline):
    t0 = time.time()
    _, rho_seq, f_seq, _ = duality_pipeline
    pairings, drift = duality_check(rho_seq, f_seq)
    report(
        8, "duality", drift <= 0.01,
        f"relative pairing drift = {drift:.2e} on a 256^2 grid", t0,
    )


def test_09_stability(duality_pipeline):
    t0 = time.time()
    rho0, rho_seq, _, (b, vfs, rp, out) = duality_pipeline
    rho0b = gaussian_field(BOX2, 256, 256, center=(0.1, 0.2), width=0.5, amplitude=0.8)
    seq_b = solve_rce_lagrangian(DensityField(grid=rho0b), b, vfs, rp, out)
    d0 = rho0.with_values(rho0.values - rho0b.values).norm("l2")
    sup = max(
        a.grid.with_values(a.grid.values - c.grid.values).norm("l2")
        for a, c in zip(rho_seq, seq_b)
    )
    report(
        9, "stability", sup <= 1.01 * d0,
        f"sup-t distance / initial = {sup / d0:.6f}", t0,
    )


def test_10_euler_pair_period():
    t0 = time.time()
    gamma, dist = 1.0, 0.5
    period_closed = 2 * np.pi**2 * dist**2 / gamma
    oracle = pair_period_oracle(gamma, dist)
    # delta = d/200, dt = T/4000 as stated
    n = 5000
    grid = TimeGrid.uniform(0, 1.25 * period_closed, n)
    rp = zero_driver(grid)
    kern = Kernel.blob(dist / 200)
    pos = ParticleEnsemble(
        np.array([[-dist / 2, 0.0], [dist / 2, 0.0]]), np.array([gamma, gamma])
    )
    angle_prev, total, period = 0.0, 0.0, np.nan
    for i in range(n):
        pos = step_rough_euler(pos, None, rp, (i, i + 1), kern)
        sep = pos.positions[1] - pos.positions[0]
        ang = float(np.arctan2(sep[1], sep[0]))
        d = ang - angle_prev
        d += 2 * np.pi if d < -np.pi else (-2 * np.pi if d > np.pi else 0.0)
        total += d
        angle_prev = ang
        if abs(total) >= 2 * np.pi:
            over = (abs(total) - 2 * np.pi) / abs(d)
            period = grid.times[i + 1] - over * (grid.times[1] - grid.times[0])
            break
    rel = abs(period - period_closed) / period_closed
    rel_oracle = abs(oracle - period_closed) / period_closed
    ok = rel <= 0.02 and rel_oracle <= 1e-6
    report(
        10, "euler-pair-period", ok,
        f"simulated rel err = {rel:.4f}, oracle rel err = {rel_oracle:.1e}", t0,
    )


def test_11_lp_conservation():
    t0 = time.time()
    omega0 = gaussian_field(BOX3, 80, 80, width=0.5)
    ens = discretize_vorticity(omega0, threshold=6e-4)
    assert 1800 <= len(ens) <= 2200  # the stated N = 2000 blob budget
    kern = Kernel.blob(ens.delta)
    grid = TimeGrid.dyadic(8)
    rp = sample_noise(NoiseSpec("brownian", 2, grid, seed=12))
    vfs = solenoidal_sine_noise(0.2, 1.0)
    recon = GridField.empty(BOX3, 96, 96)
    res = simulate(ens, kern, vfs, rp, [0, 128, 256], recon)
    l1 = np.abs(res.norms_l1 - res.norms_l1[0]).max() / res.norms_l1[0]
    l2 = np.abs(res.norms_l2 - res.norms_l2[0]).max() / res.norms_l2[0]
    circ_ok = bool(np.all(res.total_circulation == res.total_circulation[0]))
    ok = l1 <= 0.02 and l2 <= 0.02 and circ_ok
    report(
        11, "lp-conservation", ok,
        f"N = {len(ens)}, L1 drift = {l1:.2e}, L2 drift = {l2:.2e}, "
        f"circulation bitwise constant: {circ_ok}", t0,
    )


def test_12_translation_equivariance():
    t0 = time.time()
    omega0 = gaussian_field(BOX3, 48, 48, width=0.5)
    ens = discretize_vorticity(omega0, threshold=1e-3)
    kern = Kernel.blob(ens.delta)
    grid = TimeGrid.dyadic(9)
    rp = sample_noise(NoiseSpec("brownian", 2, grid, seed=31))
    sigma = 0.4
    res_noise = simulate(ens, kern, constant_noise(sigma * np.eye(2)), rp, [256, 512])
    res_plain = simulate(ens, kern, None, zero_driver(grid), [256, 512])
    worst = 0.0
    for k, it in enumerate([256, 512]):
        shift = sigma * (rp.first_level[it] - rp.first_level[0])
        dev = np.abs(
            res_noise.snapshots[k].positions
            - (res_plain.snapshots[k].positions + shift)
        ).max()
        worst = max(worst, float(dev))
    report(
        12, "translation-equivariance", worst <= 1e-10,
        f"max positional discrepancy = {worst:.2e} over T = 1, N = {len(ens)}", t0,
    )


def test_13_wong_zakai():
    t0 = time.time()
    omega0 = gaussian_field(BOX3, 48, 48, width=0.5)
    ens = discretize_vorticity(omega0, threshold=1e-3)
    base_grid = TimeGrid.dyadic(10)
    base = sample_noise(NoiseSpec("brownian", 2, base_grid, seed=99)).first_level
    recon = GridField.empty(BOX3, 48, 48)
    study = wong_zakai_study(
        ens, Kernel.blob(ens.delta), constant_noise(0.4 * np.eye(2)),
        base, base_grid, [6, 7, 8, 9, 10], 10, recon,
    )
    d = study["distances"]
    ok = bool(np.all(d > 0)) and all(d[i + 1] <= 1.1 * d[i] for i in range(d.size - 1))
    report(
        13, "wong-zakai", ok,
        "consecutive sup-t L2 distances = " + ", ".join(f"{x:.2e}" for x in d), t0,
    )


def test_14_remainder_diagnostic():
    t0 = time.time()
    rho0 = gaussian_field(BOX2, 64, 64, center=(0.3, 0.0), width=0.4)
    cloud = particles_from_grid(rho0, threshold=1e-4)
    tests = TestFunctionSet(
        (
            TestFunction(np.array([0.5, -0.3]), 1.2, 1.0, np.array([0.3, -0.2])),
            TestFunction(np.array([-0.4, 0.2]), 1.1, 1.0, np.array([-0.1, 0.25])),
        )
    )
    grid = TimeGrid.dyadic(9)
    kappas = []
    # test matrix: smooth geometric driver + solenoidal noise, and a
    # Brownian driver + constant noise
    z = np.stack([0.3 * np.sin(2 * np.pi * grid.times), 0.3 * grid.times**2], axis=1)
    scenarios = [
        (canonical_lift(grid, z), solenoidal_sine_noise(0.3, 1.0), 2.5),
        (sample_noise(NoiseSpec("brownian", 2, grid, seed=5)),
         constant_noise(0.3 * np.eye(2)), 2.5),
    ]
    b = rotation_drift(1.0)
    frozen_flagged = True
    for rp, vfs, p in scenarios:
        drv = DriverPair(vfs, rp)
        live = rpde_remainder_diagnostic(
            lagrangian_sequence(cloud, b, vfs, rp), b, drv, tests, p=p
        )
        kappas.extend(res["kappa"] for res in live.values())
    # negative control on the first scenario
    rp, vfs, p = scenarios[0]
    drv = DriverPair(vfs, rp)
    live = rpde_remainder_diagnostic(
        lagrangian_sequence(cloud, b, vfs, rp), b, drv, tests, p=p
    )
    frozen = rpde_remainder_diagnostic(
        lagrangian_sequence(cloud, b, vfs, rp, frozen=True), b, drv, tests, p=p
    )
    for k in live:
        if not (
            frozen[k]["kappa"] < 1.15
            and frozen[k]["level1_scale"] > 1e-4
            and frozen[k]["sizes"][-1] > 10 * live[k]["sizes"][-1]
        ):
            frozen_flagged = False
    ok = all(k > 1.0 for k in kappas) and frozen_flagged
    report(
        14, "remainder-diagnostic", ok,
        "kappas = " + ", ".join(f"{k:.2f}" for k in kappas)
        + f"; frozen control flagged: {frozen_flagged}", t0,
    )


def test_15_reproducibility(tmp_path):
    t0 = time.time()
    from roughflow.cli import main

    cfg = tmp_path / "scenario.ini"
    cfg.write_text(
        """
[scenario]
command = transport
seed = 5
[noise]
kind = brownian
dimension = 2
[fields]
drift = rotation
xi = constant
xi_sigma = 0.2
[time]
steps = 128
outputs = 0.5,1.0
[box]
nx = 48
"""
    )
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        assert main(["run", "--config", str(cfg), "--out", str(out), "--threads", "1"]) == 0
        outs.append(out)
    identical = True
    for name in ("transport_series.csv",):
        if (outs[0] / name).read_bytes() != (outs[1] / name).read_bytes():
            identical = False
    # also a stochastic euler scenario, rerun byte-for-byte
    cfg2 = tmp_path / "euler.ini"
    cfg2.write_text(
        """
[scenario]
command = euler
seed = 9
[noise]
kind = brownian
[fields]
xi = solenoidal
xi_amplitude = 0.2
[time]
steps = 64
[box]
x0 = -3
x1 = 3
y0 = -3
y1 = 3
nx = 32
[euler]
recon_n = 32
"""
    )
    for sub in ("c", "d"):
        out = tmp_path / sub
        assert main(["run", "--config", str(cfg2), "--out", str(out)]) == 0
    for name in ("conserved.csv", "snapshots.csv"):
        if (tmp_path / "c" / name).read_bytes() != (tmp_path / "d" / name).read_bytes():
            identical = False
    report(
        15, "reproducibility", identical,
        "re-runs with identical seed produce byte-identical CSVs", t0,
    )
