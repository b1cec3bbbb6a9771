"""Lindblad models and the fixed-step RK4 reference integrator."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .hilbert import DensityMatrix, Operator, ShapeError, SpaceShape


class DivergenceError(RuntimeError):
    """Integration produced non-finite numbers."""


@dataclass(frozen=True, eq=False)
class LindbladModel:
    hamiltonian: Operator
    jumps: tuple[Operator, ...] = ()

    def __post_init__(self):
        jumps = tuple(self.jumps)
        object.__setattr__(self, "jumps", jumps)
        for L in jumps:
            if L.shape != self.hamiltonian.shape:
                raise ShapeError("all jump operators must share the Hamiltonian's space")
        if not self.hamiltonian.is_hermitian(1e-10):
            raise ValueError("Hamiltonian is not Hermitian within 1e-10")

    @property
    def shape(self) -> SpaceShape:
        return self.hamiltonian.shape

    def jump_array(self) -> np.ndarray:
        d = self.shape.dim
        if not self.jumps:
            return np.zeros((0, d, d), dtype=np.complex128)
        return np.ascontiguousarray(np.stack([L.matrix for L in self.jumps]))

    def scaled(self, s: float) -> "LindbladModel":
        return LindbladModel(self.hamiltonian, tuple(s * L for L in self.jumps))


@dataclass(frozen=True, eq=False)
class DrivenModel:
    """Lindblad model whose Hamiltonian depends on time; jumps are fixed."""

    hamiltonian_at: Callable[[float], Operator]
    jumps: tuple[Operator, ...]
    shape: SpaceShape
    extras: dict = field(default_factory=dict)

    def at(self, t: float) -> LindbladModel:
        return LindbladModel(self.hamiltonian_at(t), self.jumps)

    def jump_array(self) -> np.ndarray:
        return self.at(0.0).jump_array()


def _check(model: LindbladModel, rho: DensityMatrix):
    if rho.shape != model.shape:
        raise ShapeError(f"state on {rho.shape.factor_dims}, model on {model.shape.factor_dims}")


def dissipator(model: LindbladModel, rho: DensityMatrix) -> Operator:
    _check(model, rho)
    r = rho.matrix
    out = np.zeros_like(r)
    for L in model.jumps:
        Lm = L.matrix
        Ld = Lm.conj().T
        LdL = Ld @ Lm
        out += 0.5 * (2.0 * Lm @ r @ Ld - r @ LdL - LdL @ r)
    return Operator(model.shape, out)


def rhs(model: LindbladModel, rho: DensityMatrix) -> Operator:
    _check(model, rho)
    h = model.hamiltonian.matrix
    r = rho.matrix
    return Operator(model.shape, -1j * (h @ r - r @ h)) + dissipator(model, rho)


def liouvillian(model: LindbladModel) -> np.ndarray:
    """Superoperator acting on row-major ``rho.reshape(-1)``."""
    d = model.shape.dim
    eye = np.eye(d)
    h = model.hamiltonian.matrix
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for L in model.jumps:
        Lm = L.matrix
        LdL = Lm.conj().T @ Lm
        sup += np.kron(Lm, Lm.conj()) - 0.5 * (np.kron(LdL, eye) + np.kron(eye, LdL.T))
    return sup


def evolve(
    model: LindbladModel,
    rho0: DensityMatrix,
    dt: float,
    t_final: float,
    sample_every: int = 1,
) -> tuple[np.ndarray, list[DensityMatrix]]:
    """Integrate the master equation with classic RK4 at fixed ``dt``.

    Returns the sample times and the states there; each sampled state is
    re-Hermitized as post-processing.
    """
    _check(model, rho0)
    if dt <= 0 or t_final < dt:
        raise ValueError("need dt > 0 and t_final >= dt")
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    n_steps = int(round(t_final / dt))
    jumps = model.jump_array()
    heff = model.hamiltonian.matrix.copy()
    for k in range(jumps.shape[0]):
        heff -= 0.5j * jumps[k].conj().T @ jumps[k]
    samples, status, bad = kernels.master_rk4_kernel(
        np.ascontiguousarray(heff), jumps, np.ascontiguousarray(rho0.matrix),
        float(dt), n_steps, int(sample_every),
    )
    if status != kernels.OK:
        raise DivergenceError(f"non-finite density matrix near step {bad} (t = {bad * dt:.6g})")
    times = np.arange(samples.shape[0]) * (sample_every * dt)
    states = [DensityMatrix(model.shape, 0.5 * (s + s.conj().T)) for s in samples]
    return times, states
