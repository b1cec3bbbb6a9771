"""Dense operators, states and density matrices on composite Hilbert spaces.

Everything here is a thin, immutable wrapper around a complex numpy array
plus the list of tensor-factor dimensions it lives on. The wrappers exist so
that partial traces and partial transposes know how to reshape, and so that
shape mismatches fail loudly instead of broadcasting.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.linalg import expm


class ShapeError(ValueError):
    """Raised when operands live on incompatible spaces."""


@dataclass(frozen=True)
class SpaceShape:
    factor_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.factor_dims)
        if not dims:
            raise ShapeError("a space needs at least one factor")
        if any(d < 1 for d in dims):
            raise ShapeError(f"factor dimensions must be >= 1, got {dims}")
        object.__setattr__(self, "factor_dims", dims)

    @property
    def dim(self) -> int:
        return int(np.prod(self.factor_dims))

    @property
    def n_factors(self) -> int:
        return len(self.factor_dims)

    def __mul__(self, other: "SpaceShape") -> "SpaceShape":
        return SpaceShape(self.factor_dims + other.factor_dims)

    def check_factors(self, factors: Iterable[int]) -> tuple[int, ...]:
        idx = tuple(sorted(set(int(f) for f in factors)))
        for f in idx:
            if not 0 <= f < self.n_factors:
                raise ShapeError(f"factor index {f} out of range for {self.factor_dims}")
        return idx


def _as_shape(shape) -> SpaceShape:
    if isinstance(shape, SpaceShape):
        return shape
    if isinstance(shape, (int, np.integer)):
        return SpaceShape((int(shape),))
    return SpaceShape(tuple(shape))


@dataclass(frozen=True, eq=False)
class Operator:
    """Square complex matrix acting on ``shape``."""

    shape: SpaceShape
    matrix: np.ndarray

    def __post_init__(self):
        shape = _as_shape(self.shape)
        m = np.array(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape != (shape.dim, shape.dim):
            raise ShapeError(f"matrix of shape {m.shape} does not fit space {shape.factor_dims}")
        m.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.shape.dim

    def dag(self) -> "Operator":
        return adjoint(self)

    def _check(self, other: "Operator"):
        if self.shape != other.shape:
            raise ShapeError(f"shape mismatch: {self.shape.factor_dims} vs {other.shape.factor_dims}")

    def __add__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.shape, self.matrix + other.matrix)
        # scalars add as multiples of the identity
        return Operator(self.shape, self.matrix + other * np.eye(self.dim))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rsub__(self, other):
        return (-1.0) * self + other

    def __neg__(self):
        return Operator(self.shape, -self.matrix)

    def __mul__(self, c):
        if isinstance(c, Operator):
            return self @ c
        return Operator(self.shape, c * self.matrix)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return Operator(self.shape, self.matrix / c)

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.shape, self.matrix @ other.matrix)
        if isinstance(other, StateVector):
            if other.shape != self.shape:
                raise ShapeError("operator and state live on different spaces")
            return StateVector(self.shape, self.matrix @ other.amplitudes, normalized=False)
        return NotImplemented

    def is_hermitian(self, atol: float = 1e-10) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0) <= atol)

    def __repr__(self):
        return f"Operator(dims={self.shape.factor_dims})"


@dataclass(frozen=True, eq=False)
class StateVector:
    shape: SpaceShape
    amplitudes: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        shape = _as_shape(self.shape)
        v = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if v.shape[0] != shape.dim:
            raise ShapeError(f"vector of length {v.shape[0]} does not fit space {shape.factor_dims}")
        if self.normalized:
            nrm = np.linalg.norm(v)
            if nrm == 0.0:
                raise ValueError("cannot normalize the zero vector")
            v = v / nrm
        v.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "amplitudes", v)
        object.__setattr__(self, "normalized", bool(self.normalized))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "StateVector":
        return StateVector(self.shape, self.amplitudes, normalized=True)

    def projector(self) -> "DensityMatrix":
        v = self.amplitudes
        return DensityMatrix(self.shape, np.outer(v, v.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    shape: SpaceShape
    matrix: np.ndarray

    def __post_init__(self):
        shape = _as_shape(self.shape)
        m = np.array(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape != (shape.dim, shape.dim):
            raise ShapeError(f"matrix of shape {m.shape} does not fit space {shape.factor_dims}")
        m.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "matrix", m)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def hermitized(self) -> "DensityMatrix":
        return DensityMatrix(self.shape, 0.5 * (self.matrix + self.matrix.conj().T))

    def is_physical(self, herm_tol=1e-10, trace_tol=1e-8, eig_tol=1e-8) -> bool:
        if self.hermiticity_error() > herm_tol:
            return False
        if abs(self.trace() - 1.0) > trace_tol:
            return False
        evals = np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))
        return bool(evals.min() >= -eig_tol)


def identity(dims) -> Operator:
    shape = _as_shape(dims)
    return Operator(shape, np.eye(shape.dim))


def basis(dim: int, n: int) -> StateVector:
    v = np.zeros(dim, dtype=np.complex128)
    v[n] = 1.0
    return StateVector(SpaceShape((dim,)), v)


def ket(dims: Sequence[int], amplitudes) -> StateVector:
    return StateVector(SpaceShape(tuple(dims)), amplitudes)


def tensor(*ops: Operator) -> Operator:
    """Kronecker product; factor lists are concatenated in argument order."""
    if not ops:
        raise ValueError("tensor() needs at least one operator")
    shape = reduce(lambda s, o: s * o.shape, ops[1:], ops[0].shape)
    mat = reduce(np.kron, (o.matrix for o in ops))
    return Operator(shape, mat)


def tensor_states(*states: StateVector) -> StateVector:
    shape = reduce(lambda s, o: s * o.shape, states[1:], states[0].shape)
    vec = reduce(np.kron, (s.amplitudes for s in states))
    return StateVector(shape, vec)


def adjoint(a: Operator) -> Operator:
    return Operator(a.shape, a.matrix.conj().T)


def destroy(dim: int) -> Operator:
    """Truncated annihilation operator, ``a|n> = sqrt(n)|n-1>``."""
    return Operator(SpaceShape((dim,)), np.diag(np.sqrt(np.arange(1, dim)), k=1))


def create(dim: int) -> Operator:
    return adjoint(destroy(dim))


def number(dim: int) -> Operator:
    return Operator(SpaceShape((dim,)), np.diag(np.arange(dim, dtype=float)))


# Spin-1/2 in the ordering (|up>, |down>) = (|1>, |0>) of the neutron example.
def sigma_x() -> Operator:
    return Operator(SpaceShape((2,)), [[0, 1], [1, 0]])


def sigma_y() -> Operator:
    return Operator(SpaceShape((2,)), [[0, -1j], [1j, 0]])


def sigma_z() -> Operator:
    return Operator(SpaceShape((2,)), [[1, 0], [0, -1]])


def sigma_minus() -> Operator:
    """Lowers |up> to |down>."""
    return Operator(SpaceShape((2,)), [[0, 0], [1, 0]])


def sigma_plus() -> Operator:
    return adjoint(sigma_minus())


def displacement(alpha: complex, dim: int) -> Operator:
    """Truncated ``exp(alpha b^dag - conj(alpha) b)``."""
    if dim < 2:
        raise ValueError("displacement needs dim >= 2")
    b = destroy(dim).matrix
    return Operator(SpaceShape((dim,)), expm(alpha * b.conj().T - np.conj(alpha) * b))


def shift_operator(alpha: complex, dim: int) -> Operator:
    """Truncated ``exp(alpha (b^dag - b))``.

    Conjugates ``b`` to ``b - alpha`` for complex ``alpha`` too, at the cost
    of unitarity; coincides with :func:`displacement` for real ``alpha``.
    """
    if dim < 2:
        raise ValueError("shift_operator needs dim >= 2")
    b = destroy(dim).matrix
    return Operator(SpaceShape((dim,)), expm(alpha * (b.conj().T - b)))


def expectation(op: Operator, state: Union[StateVector, DensityMatrix]) -> complex:
    if op.shape != state.shape:
        raise ShapeError(f"shape mismatch: {op.shape.factor_dims} vs {state.shape.factor_dims}")
    if isinstance(state, StateVector):
        v = state.amplitudes
        return complex(np.vdot(v, op.matrix @ v))
    return complex(np.trace(state.matrix @ op.matrix))


def _split(matrix: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
    return matrix.reshape(dims + dims)


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    dims = rho.shape.factor_dims
    keep = rho.shape.check_factors(keep)
    if not keep:
        raise ShapeError("keep must name at least one factor")
    n = len(dims)
    t = _split(rho.matrix, dims)
    # trace out from the highest index down so remaining axis numbers stay valid
    for f in sorted(set(range(n)) - set(keep), reverse=True):
        m = t.ndim // 2
        t = np.trace(t, axis1=f, axis2=f + m)
    kept_dims = tuple(dims[f] for f in keep)
    d = int(np.prod(kept_dims))
    return DensityMatrix(SpaceShape(kept_dims), t.reshape(d, d))


def partial_transpose(rho: Union[DensityMatrix, Operator], part: Iterable[int]) -> Operator:
    dims = rho.shape.factor_dims
    part = rho.shape.check_factors(part)
    n = len(dims)
    t = _split(np.asarray(rho.matrix), dims)
    axes = list(range(2 * n))
    for f in part:
        axes[f], axes[f + n] = axes[f + n], axes[f]
    d = rho.shape.dim
    return Operator(rho.shape, t.transpose(axes).reshape(d, d))
