"""Negativity, mixed-state fidelity and expectation-value series."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .hilbert import DensityMatrix, Operator, ShapeError, partial_transpose

log = logging.getLogger(__name__)

CLIP_TOL = 1e-8


class UnphysicalStateError(ValueError):
    pass


@dataclass(frozen=True)
class ObservableSeries:
    times: np.ndarray
    values: np.ndarray
    label: str

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values)
        if t.shape != v.shape:
            raise ValueError("times and values must have equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly ascending")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)


def partial_transpose_spectrum(rho: DensityMatrix, part: Iterable[int]) -> np.ndarray:
    pt = partial_transpose(rho, part).matrix
    return np.linalg.eigvalsh(0.5 * (pt + pt.conj().T))


def negativity(rho: DensityMatrix, part: Iterable[int] = (1,)) -> float:
    """Sum of |negative eigenvalues| of the partial transpose over ``part``."""
    if rho.shape.n_factors < 2:
        raise ShapeError("negativity needs a bipartite space")
    ev = partial_transpose_spectrum(rho, part)
    return float(-ev[ev < 0].sum())


def negativity_trace_norm(rho: DensityMatrix, part: Iterable[int] = (1,)) -> float:
    """(||rho^T_part||_1 - 1) / 2; the cross-check path for :func:`negativity`."""
    pt = partial_transpose(rho, part).matrix
    tn = np.linalg.svd(pt, compute_uv=False).sum()
    return float((tn - rho.trace().real) / 2)


def _clipped_eigh(m: np.ndarray, what: str):
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    if w.min() < -CLIP_TOL:
        raise UnphysicalStateError(f"{what} has eigenvalue {w.min():.3g} below -{CLIP_TOL}")
    neg = w < 0
    if np.any(neg):
        log.debug("clipped %d eigenvalues of %s (largest magnitude %.3g)", neg.sum(), what, -w[neg].min())
    return np.clip(w, 0.0, None), v


def sqrtm_psd(m: np.ndarray, what: str = "matrix") -> np.ndarray:
    w, v = _clipped_eigh(m, what)
    # eigenvalues at rounding level are zero; their square roots would be ~1e-8 noise
    w[w < 64 * np.finfo(float).eps * max(w.max(), 0.0)] = 0.0
    return (v * np.sqrt(w)[None, :]) @ v.conj().T


def fidelity(rho1: DensityMatrix, rho2: DensityMatrix) -> float:
    """Tr sqrt(sqrt(rho1) rho2 sqrt(rho1)), evaluated as ||sqrt(rho1) sqrt(rho2)||_1."""
    if rho1.shape != rho2.shape:
        raise ShapeError("states live on different spaces")
    s1 = sqrtm_psd(rho1.matrix, "rho1")
    s2 = sqrtm_psd(rho2.matrix, "rho2")
    return float(np.linalg.svd(s1 @ s2, compute_uv=False).sum())


def series(op: Operator, states: Sequence[DensityMatrix], times=None, label="", guard=1e-8) -> ObservableSeries:
    vals = np.empty(len(states), dtype=complex)
    for i, rho in enumerate(states):
        if rho.shape != op.shape:
            raise ShapeError("operator and state live on different spaces")
        vals[i] = np.trace(rho.matrix @ op.matrix)
    if op.is_hermitian(1e-10):
        bad = np.max(np.abs(vals.imag), initial=0.0)
        if bad > guard:
            raise ValueError(f"expectation of Hermitian {label or 'operator'} has imaginary part {bad:.3g}")
    if times is None:
        times = np.arange(len(states), dtype=float)
    return ObservableSeries(np.asarray(times), vals.real, label)


def negativity_series(states: Sequence[DensityMatrix], times, part=(1,)) -> ObservableSeries:
    return ObservableSeries(np.asarray(times), np.array([negativity(r, part) for r in states]), "negativity")


def fidelity_series(a: Sequence[DensityMatrix], b: Sequence[DensityMatrix], times) -> ObservableSeries:
    if len(a) != len(b):
        raise ValueError("state lists differ in length")
    return ObservableSeries(np.asarray(times), np.array([fidelity(x, y) for x, y in zip(a, b)]), "fidelity")
