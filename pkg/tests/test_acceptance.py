"""End-to-end acceptance checks. Each test records a PASS/FAIL line shown in the summary."""

import time

import numpy as np
import pytest
from scipy.linalg import expm

from qtbo import hilbert as hb, mcwf
from qtbo.bo import bo_propagate, zero_order_modes
from qtbo.cli import RunConfig, gamma_sweep, observable_values, simulate
from qtbo.hilbert import DensityMatrix, SpaceShape, StateVector
from qtbo.lindblad import LindbladModel, evolve, liouvillian
from qtbo.models import (
    NeutronParams,
    OptomechParams,
    neutron_eigensystem,
    neutron_heff,
    optomech_bo_modes,
    optomech_initial_state,
    optomech_model,
)
from qtbo.observables import fidelity, negativity, negativity_trace_norm

from .conftest import random_density, random_matrix

pytestmark = pytest.mark.slow

SEED = 42
OPTO = {"omega": 100.0, "g": 0.1}


def opto_config(method, model="optomech_fast", count=150, **params):
    return RunConfig(
        model=model,
        method=method,
        params={**OPTO, **params},
        dt=5e-4,
        t_final=20.0,
        sample_every=100,
        count=count,
        base_seed=SEED,
    )


@pytest.fixture(scope="module")
def reference_gamma02():
    return simulate(opto_config("master_rk4", gamma=0.2))


def test_criterion_1_fidelity_vs_trajectory_count(reference_gamma02, criterion):
    thresholds = {150: 0.999, 50: 0.995, 25: 0.99}
    mins = {}
    for n in thresholds:
        ens = simulate(opto_config("mcwf_bo", count=n, gamma=0.2))
        np.testing.assert_allclose(ens.times, reference_gamma02.times, atol=1e-12)
        mins[n] = min(fidelity(a, b) for a, b in zip(ens.states, reference_gamma02.states))
    ok = {n: mins[n] >= thr for n, thr in thresholds.items()}
    detail = "; ".join(f"N={n} min F={mins[n]:.5f} (need >= {thresholds[n]})" for n in thresholds)
    criterion(1, all(ok.values()), f"seed {SEED}: {detail}")
    assert all(ok.values()), detail


def test_criterion_2_bo_exactness(criterion):
    p = OptomechParams(omega=100.0, g=0.1, gamma=0.2)
    sys = optomech_model(p)
    f = sys.factorization()
    s = zero_order_modes(f)
    psi0 = optomech_initial_state(p)
    heff = mcwf.effective_hamiltonian(sys.model).matrix
    # the RK4 side needs omega*dt = 0.01 to resolve 1e-6 over the whole window
    dt, n, every = 1e-4, 200000, 1000
    step = mcwf.rk4_step_matrix(heff, dt)
    v = psi0.amplitudes.copy()
    worst = 0.0
    for i in range(1, n + 1):
        v = step @ v
        if i % every == 0:
            worst = max(worst, float(np.max(np.abs(bo_propagate(f, s, psi0, i * dt).amplitudes - v))))
    coupling = f.coupling_max()
    ok = worst <= 1e-6 and coupling <= 1e-12
    criterion(2, ok, f"max |psi_BO - psi_RK4| = {worst:.3g} (<= 1e-6), max coupling = {coupling:.3g} (<= 1e-12)")
    assert ok


def liouvillian_solution(model, rho0, t):
    d = model.shape.dim
    return (expm(t * liouvillian(model)) @ rho0.matrix.reshape(-1)).reshape(d, d)


def test_criterion_3_reference_integrator(criterion):
    rng = np.random.default_rng(3)
    damping = LindbladModel(0.3 * hb.sigma_z(), (np.sqrt(0.7) * hb.sigma_minus(),))
    m = random_matrix(4, rng)
    rand = LindbladModel(
        hb.Operator(SpaceShape((4,)), 0.5 * (m + m.conj().T)),
        tuple(hb.Operator(SpaceShape((4,)), 0.4 * random_matrix(4, rng)) for _ in range(3)),
    )
    cases = [(damping, hb.basis(2, 0).projector()), (rand, random_density((4,), rng))]
    err = drift = 0.0
    for model, rho0 in cases:
        times, states = evolve(model, rho0, 1e-3, 5.0, 50)
        for t, rho in zip(times, states):
            err = max(err, float(np.max(np.abs(rho.matrix - liouvillian_solution(model, rho0, t)))))
            drift = max(drift, abs(rho.trace() - 1))
    ok = err <= 1e-8 and drift <= 1e-8
    criterion(3, ok, f"max elementwise error {err:.3g} (<= 1e-8), trace drift {drift:.3g} (<= 1e-8)")
    assert ok


def test_criterion_4_entanglement(reference_gamma02, criterion):
    neg = {}
    for gamma in (0.0, 0.1, 0.2):
        neg[gamma] = observable_values("negativity", simulate(opto_config("mcwf_bo", gamma=gamma)))
    slow = simulate(opto_config("mcwf_bo", model="optomech_slow", kappa=0.1))
    slow_neg = observable_values("negativity", slow)
    x = observable_values("x", slow)
    means = [neg[g].mean() for g in (0.0, 0.1, 0.2)]
    half = len(x) // 2
    amp1 = (x[: half + 1].max() - x[: half + 1].min()) / 2
    amp2 = (x[half:].max() - x[half:].min()) / 2
    checks = {
        "max N(gamma=0) > 0.05": neg[0.0].max() > 0.05,
        "mean N strictly decreasing in gamma": means[0] > means[1] > means[2],
        # t = 0 is the product initial state, so its negativity is exactly 0
        "slow N > 0 for t > 0": bool(np.all(slow_neg[1:] > 0)),
        "slow <x> amplitude shrinks": amp2 < amp1,
    }
    detail = (
        f"max N0={neg[0.0].max():.4f}; mean N={means[0]:.4f}>{means[1]:.4f}>{means[2]:.4f}; "
        f"slow min N(t>0)={slow_neg[1:].min():.3g}; <x> amplitude {amp1:.4f} -> {amp2:.4f}"
    )
    criterion(4, all(checks.values()), detail)
    assert all(checks.values()), [k for k, v in checks.items() if not v]


def neutron_run(g, horizon):
    p = NeutronParams(theta=np.pi / 4, g=g, T=3.0)
    cfg = RunConfig(
        model="neutron",
        method="mcwf_bo",
        params={"theta": np.pi / 4, "g": g, "T": 3.0},
        dt=1e-3,
        t_final=horizon * p.traversal_time,
        sample_every=10,
        count=400,
        base_seed=SEED,
    )
    return observable_values("sigma_z", simulate(cfg))


def test_criterion_5_neutron_polarization(criterion):
    sz0 = neutron_run(0.0, 1)
    sz2 = neutron_run(2.0, 3)
    checks = {
        "start at 1": abs(sz0[0] - 1) <= 1e-12,
        "g=0 minimum in [-0.05, 0.1]": -0.05 <= sz0.min() <= 0.1,
        "g=2 final < -0.5": sz2[-1] < -0.5,
    }
    detail = f"g=0: start {sz0[0]:.6f}, min {sz0.min():.4f}; g=2 at 3T: {sz2[-1]:.4f} (N=400, seed {SEED})"
    criterion(5, all(checks.values()), detail)
    assert all(checks.values()), [k for k, v in checks.items() if not v]


def test_criterion_6_gamma_monotone(criterion):
    t0 = time.perf_counter()
    grid, vals = gamma_sweep(np.pi / 4, 0.0, 4.0, 41, eps1=1e-6, eps2=2e-4)
    wall = time.perf_counter() - t0
    steps = np.diff(vals)
    ok = vals[0] == 1.0 and bool(np.all(steps < -1e-12)) and wall < 1.0
    worst = int(np.argmax(steps))
    detail = (
        f"Gamma(0)-normalized first value {vals[0]}; largest step {steps[worst]:+.3g} "
        f"between g={grid[worst]:.1f} and g={grid[worst + 1]:.1f} (need < -1e-12); "
        f"Gamma(4)/Gamma(0)={vals[-1]:.4f}; {wall * 1e3:.0f} ms"
    )
    criterion(6, ok, detail)
    assert ok, detail


def test_criterion_7_property_suites(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    failures = []

    bell = StateVector(SpaceShape((2, 2)), [1, 0, 0, 1]).projector()
    m = bell.matrix
    oracle = np.zeros_like(m)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    oracle[2 * i + j, 2 * k + l] = m[2 * i + l, 2 * k + j]
    ev = np.linalg.eigvalsh(oracle)
    if abs(negativity(bell) - 0.5) > 1e-10 or abs(negativity(bell) + ev[ev < 0].sum()) > 1e-10:
        failures.append("Bell negativity")

    for _ in range(50):
        a, b = random_density((2, 3), rng, rank=int(rng.integers(1, 7))), random_density((2, 3), rng)
        f_ab, f_ba = fidelity(a, b), fidelity(b, a)
        if not (-1e-9 <= f_ab <= 1 + 1e-9) or abs(f_ab - f_ba) > 1e-9:
            failures.append("fidelity bounds/symmetry")
            break
        if abs(negativity(a) - negativity_trace_norm(a)) > 1e-10:
            failures.append("negativity paths")
            break
        for part in ([0], [1], [0, 1]):
            if not np.array_equal(hb.partial_transpose(hb.partial_transpose(a, part), part).matrix, a.matrix):
                failures.append("partial-transpose involution")
                break

    model = LindbladModel(0.7 * hb.sigma_x(), (np.sqrt(1.5) * hb.sigma_minus(),))
    cfg = mcwf.TrajectoryConfig(dt=1e-3, t_final=5.0, n_traj=10, base_seed=SEED, sample_every=50)
    e1 = mcwf.run_ensemble(model, cfg, hb.basis(2, 0))
    e2 = mcwf.run_ensemble(model, cfg, hb.basis(2, 0), workers=4)
    if any(x.matrix.tobytes() != y.matrix.tobytes() for x, y in zip(e1.states, e2.states)):
        failures.append("mcwf determinism")

    p = OptomechParams(gamma=0.2)
    sys = optomech_model(p)
    for variant in ("fast", "slow"):
        s = optomech_bo_modes(OptomechParams(gamma=0.2, kappa=0.2), variant)
        if s.biorthogonality_error() > 1e-10:
            failures.append(f"optomech {variant} slow-mode biorthonormality")
    fast_err = max(
        float(np.max(np.abs(mm.project @ mn.embed - (np.eye(p.n_b) if i == j else 0))))
        for i, mm in enumerate(sys.modes)
        for j, mn in enumerate(sys.modes)
    )
    comp = sum(md.embed @ md.project for md in sys.modes)
    if fast_err > 1e-10 or np.max(np.abs(comp - np.eye(comp.shape[0]))) > 1e-10:
        failures.append("optomech fast-mode biorthonormality/completeness")

    for theta, g in [(np.pi / 4, 0.0), (np.pi / 4, 1.0), (np.pi / 4, 2.0), (1.0, 3.0), (2.0, 0.5)]:
        p = NeutronParams(theta=theta, g=g)
        for z in np.linspace(0, 1, 11):
            es = neutron_eigensystem(p, z)
            h = neutron_heff(p, z)
            direct = np.sort_complex(np.linalg.eigvals(h))
            if np.max(np.abs(np.sort_complex(es.energies) - direct)) > 1e-10:
                failures.append("neutron eigenvalues")
            if np.max(np.abs(h @ es.rights - es.rights * es.energies[None, :])) > 1e-10:
                failures.append("neutron eigenvectors")
            if np.max(np.abs(es.lefts @ es.rights - np.eye(2))) > 1e-10:
                failures.append("neutron biorthonormality")

    wall = time.perf_counter() - t0
    ok = not failures and wall < 60
    criterion(7, ok, f"{'all checks hold' if not failures else sorted(set(failures))}; {wall:.1f} s")
    assert ok, failures
