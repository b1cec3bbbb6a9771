"""Born-Oppenheimer treatment of the no-jump effective Hamiltonian.

The fast subsystem is described by a list of :class:`FastMode` objects, each
holding a right eigenstate as an embedding matrix (slow space -> full space)
and the matching left eigenstate as a projection (full -> slow). Projecting
the slow Hamiltonian between modes gives the zero-order blocks and the
off-diagonal coupling. Diagonalizing each block yields slow modes, from which
the no-jump state can be propagated spectrally and the size of the neglected
coupling can be measured.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np
import scipy.linalg

from .hilbert import Operator, ShapeError, SpaceShape, StateVector

BIORTH_TOL = 1e-8
COND_LIMIT = 1e8
GAP_TOL = 1e-12


class DegeneracyError(ValueError):
    def __init__(self, msg, indices=None):
        super().__init__(msg)
        self.indices = indices


class BiorthogonalityError(ValueError):
    pass


class Variant(str, Enum):
    FAST_DISSIPATION = "fast_dissipation"
    SLOW_DISSIPATION = "slow_dissipation"


@dataclass(frozen=True, eq=False)
class FastMode:
    index: int
    embed: np.ndarray  # (full_dim, slow_dim)
    project: np.ndarray  # (slow_dim, full_dim)
    energy_op: Operator  # on the slow space

    def __post_init__(self):
        e = np.asarray(self.embed, dtype=np.complex128)
        p = np.asarray(self.project, dtype=np.complex128)
        ds = self.energy_op.dim
        if e.shape[1] != ds or p.shape != (ds, e.shape[0]):
            raise ShapeError("embed/project shapes do not match the slow space")
        object.__setattr__(self, "embed", e)
        object.__setattr__(self, "project", p)

    def embed_vec(self, v: np.ndarray) -> np.ndarray:
        return self.embed @ v

    def project_vec(self, w: np.ndarray) -> np.ndarray:
        return self.project @ w


@dataclass(frozen=True, eq=False)
class BOFactorization:
    modes: tuple[FastMode, ...]
    slow_h: Operator  # full space; carries -i/2 sum X^dag X in the slow variant
    blocks_h0: tuple[Operator, ...]
    coupling_hp: tuple[tuple[Optional[Operator], ...], ...]  # None on the diagonal
    variant: Variant

    @property
    def slow_shape(self) -> SpaceShape:
        return self.blocks_h0[0].shape

    @property
    def full_dim(self) -> int:
        return self.slow_h.dim

    def coupling_max(self) -> float:
        vals = [np.max(np.abs(c.matrix)) for row in self.coupling_hp for c in row if c is not None]
        return float(max(vals, default=0.0))

    def assemble(self) -> np.ndarray:
        """Rebuild the full-space operator from blocks and couplings."""
        out = np.zeros((self.full_dim, self.full_dim), dtype=np.complex128)
        for n, mn in enumerate(self.modes):
            for m, mm in enumerate(self.modes):
                blk = self.blocks_h0[n] if n == m else self.coupling_hp[n][m]
                out += mn.embed @ blk.matrix @ mm.project
        return out


@dataclass(frozen=True, eq=False)
class SlowModeSet:
    rights: tuple[np.ndarray, ...]  # per fast mode: (slow_dim, K) columns
    lefts: tuple[np.ndarray, ...]  # per fast mode: (K, slow_dim) rows
    energies: tuple[np.ndarray, ...]  # per fast mode: (K,)

    def residual(self, blocks: Sequence[Operator]) -> float:
        res = 0.0
        for blk, r, e in zip(blocks, self.rights, self.energies):
            res = max(res, float(np.max(np.abs(blk.matrix @ r - r * e[None, :]), initial=0.0)))
        return res

    def biorthogonality_error(self) -> float:
        err = 0.0
        for r, l in zip(self.rights, self.lefts):
            err = max(err, float(np.max(np.abs(l @ r - np.eye(r.shape[1])))))
        return err

    def rescaled(self, c: complex) -> "SlowModeSet":
        return SlowModeSet(
            tuple(c * r for r in self.rights),
            tuple(l / c for l in self.lefts),
            self.energies,
        )


def check_biorthonormal(modes: Sequence[FastMode], tol: float = BIORTH_TOL) -> float:
    worst = 0.0
    for m, mm in enumerate(modes):
        for n, mn in enumerate(modes):
            g = mm.project @ mn.embed
            target = np.eye(g.shape[0]) if m == n else 0.0
            worst = max(worst, float(np.max(np.abs(g - target))))
    if worst > tol:
        raise BiorthogonalityError(f"fast modes violate biorthonormality by {worst:.3g}")
    return worst


def build_factorization(
    slow_h: Operator,
    modes: Sequence[FastMode],
    variant: Variant = Variant.FAST_DISSIPATION,
    slow_jumps: Sequence[Operator] = (),
) -> BOFactorization:
    """Project the slow Hamiltonian onto the fast modes.

    ``slow_h`` acts on the full space. For the slow-dissipation variant pass
    the slow jump operators; their ``-i/2 X^dag X`` is folded into the slow
    Hamiltonian before projecting.
    """
    variant = Variant(variant)
    modes = tuple(modes)
    if not modes:
        raise ValueError("need at least one fast mode")
    if variant is Variant.FAST_DISSIPATION and slow_jumps:
        raise ValueError("slow jump operators only enter the slow-dissipation variant")
    check_biorthonormal(modes)
    hs = slow_h.matrix.astype(np.complex128)
    for X in slow_jumps:
        hs = hs - 0.5j * (X.matrix.conj().T @ X.matrix)
    hs_op = Operator(slow_h.shape, hs)
    slow_shape = modes[0].energy_op.shape
    blocks, couplings = [], []
    for n, mn in enumerate(modes):
        row = []
        for m, mm in enumerate(modes):
            h_nm = mn.project @ hs @ mm.embed
            if n == m:
                blocks.append(Operator(slow_shape, h_nm + mn.energy_op.matrix))
                row.append(None)
            else:
                row.append(Operator(slow_shape, h_nm))
        couplings.append(tuple(row))
    return BOFactorization(modes, hs_op, tuple(blocks), tuple(couplings), variant)


def biorthogonal_modes(rights: np.ndarray, energies: np.ndarray, label=None):
    """Normalize right columns and build the dual left rows.

    Works for tall ``rights`` too (a subset of modes), using the pseudo-inverse.
    """
    r = np.asarray(rights, dtype=np.complex128)
    r = r / np.linalg.norm(r, axis=0)[None, :]
    cond = np.linalg.cond(r)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise DegeneracyError(f"block {label}: eigenvectors nearly dependent (cond {cond:.3g})", label)
    left = np.linalg.inv(r) if r.shape[0] == r.shape[1] else np.linalg.pinv(r)
    return r, left, np.asarray(energies, dtype=np.complex128)


def zero_order_modes(f: BOFactorization) -> SlowModeSet:
    rights, lefts, energies = [], [], []
    for n, blk in enumerate(f.blocks_h0):
        if not np.all(np.isfinite(blk.matrix)):
            raise ValueError(f"block {n} has non-finite entries")
        w, v = scipy.linalg.eig(blk.matrix)
        order = np.lexsort((w.imag, w.real))
        r, l, e = biorthogonal_modes(v[:, order], w[order], label=n)
        rights.append(r)
        lefts.append(l)
        energies.append(e)
    return SlowModeSet(tuple(rights), tuple(lefts), tuple(energies))


def _coefficients(f: BOFactorization, s: SlowModeSet, psi: np.ndarray):
    return [l @ (m.project @ psi) for m, l in zip(f.modes, s.lefts)]


def bo_propagate(f: BOFactorization, s: SlowModeSet, psi0: StateVector, t: float) -> StateVector:
    """Zero-order spectral no-jump evolution; the result is not renormalized."""
    if psi0.shape.dim != f.full_dim:
        raise ShapeError("state does not live on the factorized space")
    out = np.zeros(f.full_dim, dtype=np.complex128)
    for m, r, e, c in zip(f.modes, s.rights, s.energies, _coefficients(f, s, psi0.amplitudes)):
        out += m.embed @ (r @ (np.exp(-1j * e * t) * c))
    return StateVector(psi0.shape, out, normalized=False)


def propagator_matrix(f: BOFactorization, s: SlowModeSet, t: float) -> np.ndarray:
    out = np.zeros((f.full_dim, f.full_dim), dtype=np.complex128)
    for m, r, l, e in zip(f.modes, s.rights, s.lefts, s.energies):
        out += m.embed @ (r * np.exp(-1j * e * t)[None, :]) @ l @ m.project
    return out


class SpectralPropagator:
    """Adapter handing the mcwf engine a fixed one-step BO map."""

    def __init__(self, f: BOFactorization, s: SlowModeSet):
        self.factorization = f
        self.modes = s

    def step_matrices(self, dt: float, n_steps: int) -> np.ndarray:
        return propagator_matrix(self.factorization, self.modes, dt)[None]


def _max_ratio(numerators: Mapping[tuple[int, int], Operator], s: SlowModeSet) -> float:
    best = 0.0
    for (n1, n), op in numerators.items():
        if n1 == n or op is None:
            continue
        # rows: k' of mode n1; columns: k of mode n
        num = s.lefts[n1] @ op.matrix @ s.rights[n]
        gap = s.energies[n1][:, None] - s.energies[n][None, :]
        small = np.abs(gap) <= GAP_TOL
        if np.any(small):
            k1, k = map(int, np.argwhere(small)[0])
            raise DegeneracyError(
                f"degenerate levels ({n1},{k1}) and ({n},{k})", ((n1, k1), (n, k))
            )
        best = max(best, float(np.max(np.abs(num / gap))))
    return best


def validity_ratio(f: BOFactorization, s: SlowModeSet) -> float:
    nums = {
        (n1, n): f.coupling_hp[n1][n]
        for n1 in range(len(f.modes))
        for n in range(len(f.modes))
        if n1 != n
    }
    return _max_ratio(nums, s)


def gamma_measure(numerators: Mapping[tuple[int, int], Operator], s: SlowModeSet) -> float:
    return _max_ratio(numerators, s)
