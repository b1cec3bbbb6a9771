"""Hot inner loops: one quantum trajectory, and fixed-step RK4 on a density matrix.

Both functions are written against plain numpy so the same source runs
compiled (numba) or interpreted. Inputs must be C-contiguous complex128
arrays; the public wrappers in :mod:`qtbo.mcwf` and :mod:`qtbo.lindblad`
take care of that.
"""

import numpy as np

from ._accel import jit

OK = 0
STEP_TOO_LARGE = 1
NON_FINITE = 2
ZERO_NORM_JUMP = 3

# Upper bound on the total jump probability of a single step.
MAX_STEP_PROBABILITY = 0.1


@jit
def trajectory_kernel(step_mats, jumps, psi0, eps, dt, sample_every):
    """Run one trajectory with one uniform draw ``eps[i]`` per step.

    ``step_mats`` has shape (P, d, d); P == 1 means a time-independent no-jump
    map, otherwise step ``i`` uses ``step_mats[i]``. Returns
    ``(samples, jump_steps, jump_channels, n_jumps, status, bad_step)``.
    """
    n_steps = eps.shape[0]
    d = psi0.shape[0]
    n_jump_ops = jumps.shape[0]
    n_samples = n_steps // sample_every + 1
    samples = np.zeros((n_samples, d), dtype=np.complex128)
    jump_steps = np.zeros(n_steps, dtype=np.int64)
    jump_channels = np.zeros(n_steps, dtype=np.int64)
    dps = np.zeros(n_jump_ops, dtype=np.float64)
    kicked = np.zeros((n_jump_ops, d), dtype=np.complex128)

    psi = psi0.copy()
    samples[0] = psi
    n_jumps = 0
    single = step_mats.shape[0] == 1

    for i in range(n_steps):
        total = 0.0
        for k in range(n_jump_ops):
            kicked[k] = jumps[k] @ psi
            p = np.vdot(kicked[k], kicked[k]).real * dt
            dps[k] = p
            total += p
        if total > MAX_STEP_PROBABILITY:
            return samples, jump_steps, jump_channels, n_jumps, STEP_TOO_LARGE, i

        e = eps[i]
        channel = -1
        if total > 0.0 and e <= total:
            cum = 0.0
            for k in range(n_jump_ops):
                cum += dps[k]
                if dps[k] > 0.0 and e <= cum:
                    channel = k
                    break
            if channel < 0:
                # e landed within rounding of the upper edge
                for k in range(n_jump_ops - 1, -1, -1):
                    if dps[k] > 0.0:
                        channel = k
                        break

        if channel >= 0:
            nrm = np.sqrt(dps[channel] / dt)
            if nrm == 0.0:
                return samples, jump_steps, jump_channels, n_jumps, ZERO_NORM_JUMP, i
            psi = kicked[channel] / nrm
            jump_steps[n_jumps] = i
            jump_channels[n_jumps] = channel
            n_jumps += 1
        else:
            if single:
                psi = step_mats[0] @ psi
            else:
                psi = step_mats[i] @ psi
            nrm = np.sqrt(np.vdot(psi, psi).real)
            if not np.isfinite(nrm) or nrm == 0.0:
                return samples, jump_steps, jump_channels, n_jumps, NON_FINITE, i
            psi = psi / nrm

        if (i + 1) % sample_every == 0:
            samples[(i + 1) // sample_every] = psi

    return samples, jump_steps, jump_channels, n_jumps, OK, -1


@jit
def _lindblad_rhs(heff, heff_dag, jumps, jumps_dag, rho):
    out = -1j * (heff @ rho - rho @ heff_dag)
    for k in range(jumps.shape[0]):
        out += jumps[k] @ rho @ jumps_dag[k]
    return out


@jit
def master_rk4_kernel(heff, jumps, rho0, dt, n_steps, sample_every):
    """Classic RK4 on the Lindblad equation written through ``heff``.

    Returns ``(samples, status, bad_step)`` with samples taken at step 0 and
    every ``sample_every`` steps.
    """
    heff_dag = np.ascontiguousarray(heff.conj().T)
    jumps_dag = np.zeros_like(jumps)
    for k in range(jumps.shape[0]):
        jumps_dag[k] = jumps[k].conj().T
    n_samples = n_steps // sample_every + 1
    d = rho0.shape[0]
    samples = np.zeros((n_samples, d, d), dtype=np.complex128)
    rho = rho0.copy()
    samples[0] = rho
    half = 0.5 * dt
    for i in range(n_steps):
        k1 = _lindblad_rhs(heff, heff_dag, jumps, jumps_dag, rho)
        k2 = _lindblad_rhs(heff, heff_dag, jumps, jumps_dag, rho + half * k1)
        k3 = _lindblad_rhs(heff, heff_dag, jumps, jumps_dag, rho + half * k2)
        k4 = _lindblad_rhs(heff, heff_dag, jumps, jumps_dag, rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (i + 1) % sample_every == 0:
            if not np.all(np.isfinite(rho)):
                return samples, NON_FINITE, i
            samples[(i + 1) // sample_every] = rho
    return samples, OK, -1
