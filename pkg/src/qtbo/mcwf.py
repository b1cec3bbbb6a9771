"""Monte-Carlo wave-function (quantum jump) engine.

One uniform number per step decides between a jump and no-jump evolution.
Jump channels are picked by the cumulative-interval rule, and the no-jump
branch is propagated with a linear one-step map, then renormalized. That map
is either RK4 on ``H_eff`` or the spectral Born-Oppenheimer propagator from
:mod:`qtbo.bo`. Trajectory ``i`` of an ensemble draws from its own Philox
stream seeded by ``(base_seed, i)``, so results do not depend on how work
is scheduled.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import kernels
from .hilbert import DensityMatrix, Operator, ShapeError, StateVector
from .lindblad import DivergenceError, DrivenModel, LindbladModel

log = logging.getLogger(__name__)

AnyModel = Union[LindbladModel, DrivenModel]


class StepTooLargeError(ValueError):
    """Total jump probability of one step exceeded the sanity bound."""


class Propagator(str, Enum):
    DIRECT_RK4 = "direct_rk4"
    BO_SPECTRAL = "bo_spectral"


@dataclass(frozen=True)
class EffectiveHamiltonian:
    operator: Operator

    @property
    def matrix(self) -> np.ndarray:
        return self.operator.matrix


@dataclass(frozen=True)
class TrajectoryConfig:
    dt: float
    t_final: float
    n_traj: int = 1
    base_seed: int = 0
    propagator: Propagator = Propagator.DIRECT_RK4
    sample_every: int = 100

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_final < self.dt:
            raise ValueError("t_final must be at least dt")
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")
        object.__setattr__(self, "propagator", Propagator(self.propagator))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def sample_times(self) -> np.ndarray:
        n = self.n_steps // self.sample_every + 1
        return np.arange(n) * (self.sample_every * self.dt)


@dataclass(frozen=True)
class JumpRecord:
    time: float
    channel: int


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_samples, dim), unit norm
    jumps: list[JumpRecord]
    values: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class Ensemble:
    times: np.ndarray
    states: list[DensityMatrix]
    jump_counts: np.ndarray  # per trajectory


def effective_hamiltonian(model: LindbladModel) -> EffectiveHamiltonian:
    h = model.hamiltonian.matrix.astype(np.complex128)
    for L in model.jumps:
        h = h - 0.5j * (L.matrix.conj().T @ L.matrix)
    return EffectiveHamiltonian(Operator(model.shape, h))


def jump_probabilities(model: LindbladModel, state: StateVector, dt: float) -> list[float]:
    if state.shape != model.shape:
        raise ShapeError("state and model live on different spaces")
    psi = state.amplitudes
    dps = []
    for L in model.jumps:
        v = L.matrix @ psi
        dps.append(float(np.vdot(v, v).real) * dt)
    if sum(dps) > kernels.MAX_STEP_PROBABILITY:
        raise StepTooLargeError(
            f"total jump probability {sum(dps):.3g} per step exceeds "
            f"{kernels.MAX_STEP_PROBABILITY}; reduce dt"
        )
    return dps


def apply_jump(model: LindbladModel, state: StateVector, k: int) -> StateVector:
    v = model.jumps[k].matrix @ state.amplitudes
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        raise RuntimeError(f"jump channel {k} selected with zero norm")
    return StateVector(state.shape, v / nrm, normalized=False)


def no_jump_step(heff: EffectiveHamiltonian, state: StateVector, dt: float) -> StateVector:
    """One RK4 step of ``i d|psi>/dt = H_eff |psi>``, renormalized."""
    h = heff.matrix
    psi = state.amplitudes

    def f(v):
        return -1j * (h @ v)

    k1 = f(psi)
    k2 = f(psi + 0.5 * dt * k1)
    k3 = f(psi + 0.5 * dt * k2)
    k4 = f(psi + dt * k3)
    out = psi + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    nrm = np.linalg.norm(out)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise DivergenceError("non-finite amplitudes in no-jump step")
    return StateVector(state.shape, out / nrm, normalized=False)


def select_channel(dps: Sequence[float], eps: float) -> Optional[int]:
    """Cumulative-interval rule: channel k when cum_{k-1} < eps <= cum_k."""
    total = float(sum(dps))
    if total <= 0.0 or eps > total:
        return None
    cum = 0.0
    for k, p in enumerate(dps):
        cum += p
        if p > 0.0 and eps <= cum:
            return k
    return max(k for k, p in enumerate(dps) if p > 0.0)


def step(
    model: LindbladModel,
    heff: EffectiveHamiltonian,
    state: StateVector,
    dt: float,
    rng: np.random.Generator,
    t: float = 0.0,
) -> tuple[StateVector, Optional[JumpRecord]]:
    dps = jump_probabilities(model, state, dt)
    eps = rng.random()
    k = select_channel(dps, eps)
    if k is None:
        return no_jump_step(heff, state, dt), None
    return apply_jump(model, state, k), JumpRecord(t, k)


def trajectory_rng(base_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(base_seed), int(index)])))


def rk4_step_matrix(h: np.ndarray, dt: float) -> np.ndarray:
    """Linear map of one RK4 step for ``dv/dt = -i h v``."""
    a = -1j * dt * np.asarray(h, dtype=np.complex128)
    eye = np.eye(a.shape[0], dtype=np.complex128)
    a2 = a @ a
    a3 = a2 @ a
    return eye + a + a2 / 2 + a3 / 6 + (a3 @ a) / 24


def rk4_step_matrices_driven(model: DrivenModel, dt: float, n_steps: int) -> np.ndarray:
    """Per-step RK4 maps for a time-dependent ``H_eff(t)``."""
    d = model.shape.dim
    eye = np.eye(d, dtype=np.complex128)

    def gen(t):
        return -1j * dt * effective_hamiltonian(model.at(t)).matrix

    out = np.empty((n_steps, d, d), dtype=np.complex128)
    a_next = gen(0.0)
    for i in range(n_steps):
        t = i * dt
        a1 = a_next
        a2 = gen(t + 0.5 * dt)
        a_next = gen(t + dt)
        k1 = a1
        k2 = a2 @ (eye + 0.5 * k1)
        k3 = a2 @ (eye + 0.5 * k2)
        k4 = a_next @ (eye + k3)
        out[i] = eye + (k1 + 2 * k2 + 2 * k3 + k4) / 6
    return out


def step_matrices(model: AnyModel, config: TrajectoryConfig, bo=None) -> np.ndarray:
    """No-jump one-step maps, shape (1, d, d) or (n_steps, d, d).

    With ``propagator=bo_spectral`` the ``bo`` argument must provide
    ``step_matrices(dt, n_steps)``; see :class:`qtbo.bo.SpectralPropagator`.
    """
    if config.propagator is Propagator.BO_SPECTRAL:
        if bo is None:
            raise ValueError("bo_spectral propagation needs Born-Oppenheimer data")
        mats = np.asarray(bo.step_matrices(config.dt, config.n_steps), dtype=np.complex128)
    elif isinstance(model, DrivenModel):
        mats = rk4_step_matrices_driven(model, config.dt, config.n_steps)
    else:
        mats = rk4_step_matrix(effective_hamiltonian(model).matrix, config.dt)[None]
    return np.ascontiguousarray(mats)


def _run_kernel(mats, jumps, psi0, config, index):
    eps = trajectory_rng(config.base_seed, index).random(config.n_steps)
    samples, jsteps, jchan, n_jumps, status, bad = kernels.trajectory_kernel(
        mats, jumps, psi0, eps, float(config.dt), int(config.sample_every)
    )
    if status == kernels.STEP_TOO_LARGE:
        raise StepTooLargeError(f"trajectory {index}: jump probability above bound at step {bad}; reduce dt")
    if status == kernels.NON_FINITE:
        raise DivergenceError(f"trajectory {index}: non-finite state at step {bad}")
    if status == kernels.ZERO_NORM_JUMP:
        raise RuntimeError(f"trajectory {index}: zero-norm jump at step {bad}")
    jumps_out = [JumpRecord(float(s * config.dt), int(c)) for s, c in zip(jsteps[:n_jumps], jchan[:n_jumps])]
    return samples, jumps_out


def _prepare(model: AnyModel, psi0: StateVector):
    if psi0.shape != model.shape:
        raise ShapeError("initial state and model live on different spaces")
    psi = np.ascontiguousarray(psi0.amplitudes / np.linalg.norm(psi0.amplitudes))
    return psi, np.ascontiguousarray(model.jump_array())


def run_trajectory(
    model: AnyModel,
    config: TrajectoryConfig,
    psi0: StateVector,
    observables: Mapping[str, Operator] = None,
    index: int = 0,
    bo=None,
    _mats: np.ndarray = None,
) -> Trajectory:
    psi, jumps = _prepare(model, psi0)
    mats = step_matrices(model, config, bo) if _mats is None else _mats
    samples, jump_list = _run_kernel(mats, jumps, psi, config, index)
    values = {}
    for name, op in (observables or {}).items():
        values[name] = np.einsum("ti,ij,tj->t", samples.conj(), op.matrix, samples).real
    return Trajectory(config.sample_times(), samples, jump_list, values)


def run_ensemble(
    model: AnyModel,
    config: TrajectoryConfig,
    psi0: StateVector,
    bo=None,
    workers: int = 1,
) -> Ensemble:
    psi, jumps = _prepare(model, psi0)
    mats = step_matrices(model, config, bo)

    def one(i):
        return _run_kernel(mats, jumps, psi, config, i)

    n_samples = config.n_steps // config.sample_every + 1
    d = model.shape.dim
    acc = np.zeros((n_samples, d, d), dtype=np.complex128)
    counts = np.zeros(config.n_traj, dtype=np.int64)
    indices = range(config.n_traj)
    # map() yields in index order, which fixes the reduction order
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = pool.map(one, indices)
            for i, (samples, jl) in enumerate(results):
                acc += np.einsum("ti,tj->tij", samples, samples.conj())
                counts[i] = len(jl)
    else:
        for i in indices:
            samples, jl = one(i)
            acc += np.einsum("ti,tj->tij", samples, samples.conj())
            counts[i] = len(jl)
    acc /= config.n_traj
    states = [DensityMatrix(model.shape, 0.5 * (r + r.conj().T)) for r in acc]
    log.debug("ensemble of %d trajectories, %d jumps total", config.n_traj, counts.sum())
    return Ensemble(config.sample_times(), states, counts)


def ensemble_average(
    model: AnyModel,
    config: TrajectoryConfig,
    psi0: StateVector,
    bo=None,
    workers: int = 1,
) -> tuple[np.ndarray, list[DensityMatrix]]:
    ens = run_ensemble(model, config, psi0, bo=bo, workers=workers)
    return ens.times, ens.states
