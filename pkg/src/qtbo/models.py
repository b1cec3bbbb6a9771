"""The two worked systems: an optomechanical cavity and a neutron in a helical field.

Units: hbar = 1. Optomechanical frequencies and rates are in units of the
mirror frequency, so ``capital_omega`` is 1 by default. Neutron energies are
in units of mu*B, times in hbar/(mu*B), positions in units of the helix
pitch L.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import hilbert as hb
from .bo import (
    BOFactorization,
    DegeneracyError,
    FastMode,
    SlowModeSet,
    Variant,
    biorthogonal_modes,
    build_factorization,
)
from .hilbert import Operator, SpaceShape, StateVector
from .lindblad import DrivenModel, LindbladModel

log = logging.getLogger(__name__)


class TruncationError(ValueError):
    pass


# ---------------------------------------------------------------- optomechanics


@dataclass(frozen=True)
class OptomechParams:
    omega: float = 100.0
    capital_omega: float = 1.0
    g: float = 0.1
    gamma: float = 0.0
    kappa: float = 0.0
    n_a: int = 2
    n_b: int = 16

    def __post_init__(self):
        for name in ("omega", "capital_omega", "g", "gamma", "kappa"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.n_a < 2 or self.n_b < 2:
            raise ValueError("Fock cutoffs must be >= 2")
        if self.capital_omega > 0 and self.omega / self.capital_omega < 10:
            log.warning("omega/Omega = %.3g: fast/slow separation is weak", self.omega / self.capital_omega)


@dataclass(frozen=True, eq=False)
class OptomechSystem:
    params: OptomechParams
    variant: Variant
    model: LindbladModel
    modes: tuple[FastMode, ...]
    slow_h: Operator  # full space, Hermitian part only
    slow_jumps: tuple[Operator, ...]

    def factorization(self) -> BOFactorization:
        return build_factorization(self.slow_h, self.modes, self.variant, self.slow_jumps)

    def operators(self) -> dict[str, Operator]:
        p = self.params
        a = hb.destroy(p.n_a)
        b = hb.destroy(p.n_b)
        ia, ib = hb.identity(p.n_a), hb.identity(p.n_b)
        return {
            "x": hb.tensor(ia, b + b.dag()),
            "n_a": hb.tensor(a.dag() @ a, ib),
            "n_b": hb.tensor(ia, b.dag() @ b),
        }


def _dissipation(kind) -> Variant:
    aliases = {"fast": Variant.FAST_DISSIPATION, "slow": Variant.SLOW_DISSIPATION}
    return aliases.get(kind) or Variant(kind)


def optomech_model(p: OptomechParams, dissipation="fast") -> OptomechSystem:
    """Cavity mode ``a`` (fast, factor 0) coupled to mirror mode ``b`` (slow, factor 1)."""
    variant = _dissipation(dissipation)
    a = hb.destroy(p.n_a)
    b = hb.destroy(p.n_b)
    ia, ib = hb.identity(p.n_a), hb.identity(p.n_b)
    x = b + b.dag()
    hs_slow = p.capital_omega * (b.dag() @ b + 0.5)
    h = (
        p.omega * hb.tensor(a.dag() @ a, ib)
        - p.g * hb.tensor(a.dag() @ a, x)
        + hb.tensor(ia, hs_slow)
    )
    slow_jumps: tuple[Operator, ...] = ()
    if variant is Variant.FAST_DISSIPATION:
        jumps = (np.sqrt(p.gamma) * hb.tensor(a, ib),) if p.gamma > 0 else ()
        fast_rate = p.gamma
    else:
        jumps = (np.sqrt(p.kappa) * hb.tensor(ia, b),) if p.kappa > 0 else ()
        slow_jumps = jumps
        fast_rate = 0.0

    modes = []
    for na in range(p.n_a):
        e_vec = np.zeros((p.n_a, 1))
        e_vec[na] = 1.0
        embed = np.kron(e_vec, np.eye(p.n_b))
        energy = (p.omega - 0.5j * fast_rate) * na * ib - p.g * na * x
        modes.append(FastMode(na, embed, embed.T.copy(), energy))

    return OptomechSystem(
        params=p,
        variant=variant,
        model=LindbladModel(h, jumps),
        modes=tuple(modes),
        slow_h=hb.tensor(ia, hs_slow),
        slow_jumps=slow_jumps,
    )


def optomech_initial_state(p: OptomechParams) -> StateVector:
    """(|0> + |1>)(|0> + |1>) / 2."""
    va = np.zeros(p.n_a, dtype=complex)
    va[:2] = 1.0
    vb = np.zeros(p.n_b, dtype=complex)
    vb[:2] = 1.0
    return StateVector(SpaceShape((p.n_a, p.n_b)), np.kron(va, vb) / 2.0)


def optomech_displacement(p: OptomechParams, na: int, dissipation="fast") -> complex:
    if _dissipation(dissipation) is Variant.FAST_DISSIPATION:
        return na * p.g / p.capital_omega
    return na * p.g / (p.capital_omega - 0.5j * p.kappa)


def optomech_energy(p: OptomechParams, na: int, nb: int, dissipation="fast") -> complex:
    if _dissipation(dissipation) is Variant.FAST_DISSIPATION:
        w0 = p.capital_omega
        return w0 * (nb + 0.5) + (p.omega - 0.5j * p.gamma) * na - p.g**2 * na**2 / w0
    w0 = p.capital_omega - 0.5j * p.kappa
    # +i kappa/4 is what remains of -i kappa/2 b^dag b after writing it via w0 (b^dag b + 1/2)
    return w0 * (nb + 0.5) + 0.25j * p.kappa + p.omega * na - p.g**2 * na**2 / w0


def optomech_bo_modes(
    p: OptomechParams,
    dissipation="fast",
    n_modes: Optional[int] = None,
    pad: int = 24,
    tol: float = 1e-8,
) -> SlowModeSet:
    """Displaced-Fock slow modes ``exp(alpha (b^dag - b)) |n_b>`` for every block.

    Only the lowest ``n_modes`` (default ``n_b // 2``) per block are returned:
    higher ones are distorted by the cutoff. Each mode is built in a padded
    space first; if more than ``tol`` of its norm falls beyond the cutoff a
    :class:`TruncationError` is raised.
    """
    n_modes = p.n_b // 2 if n_modes is None else n_modes
    big = p.n_b + pad
    rights, lefts, energies = [], [], []
    for na in range(p.n_a):
        alpha = optomech_displacement(p, na, dissipation)
        shift = hb.shift_operator(alpha, big).matrix
        cols = shift[:, :n_modes]
        tail = np.linalg.norm(cols[p.n_b:], axis=0) / np.linalg.norm(cols, axis=0)
        if np.max(tail) > tol:
            raise TruncationError(
                f"n_a={na}: displaced mode loses {np.max(tail):.3g} of its norm beyond n_b={p.n_b}"
            )
        e = np.array([optomech_energy(p, na, nb, dissipation) for nb in range(n_modes)])
        r, l, e = biorthogonal_modes(cols[: p.n_b], e, label=na)
        rights.append(r)
        lefts.append(l)
        energies.append(e)
    return SlowModeSet(tuple(rights), tuple(lefts), tuple(energies))


# ---------------------------------------------------------------- neutron


@dataclass(frozen=True)
class NeutronParams:
    theta: float = np.pi / 4
    g: float = 0.0
    eps1: float = 1e-6  # hbar^2 / (mu B M L^2)
    eps2: float = 2e-4  # hbar^2 k_z / (mu B M L)
    T: float = 3.0  # traversal time in units of pi hbar / (mu B)

    def __post_init__(self):
        if not 0.0 <= self.theta <= np.pi:
            raise ValueError("theta must lie in [0, pi]")
        if self.g < 0:
            raise ValueError("g must be non-negative")
        if self.eps1 <= 0 or self.eps2 <= 0:
            raise ValueError("eps1 and eps2 must be positive")
        if self.T <= 0:
            raise ValueError("T must be positive")

    @property
    def traversal_time(self) -> float:
        """T in units of hbar / (mu B)."""
        return np.pi * self.T


@dataclass(frozen=True, eq=False)
class NeutronEigensystem:
    z: float
    alpha: complex
    norm: float
    energies: np.ndarray  # (E_plus, E_minus)
    rights: np.ndarray  # columns psi_+^R, psi_-^R in the (|1>, |0>) basis
    lefts: np.ndarray  # rows psi_+^L, psi_-^L
    vector_potential: np.ndarray  # A_+ L, A_- L
    d1: np.ndarray  # <psi_n'^L| d/dz |psi_n^R>, z in units of L
    d2: np.ndarray  # <psi_n'^L| d^2/dz^2 |psi_n^R>
    heff: np.ndarray


def neutron_heff(p: NeutronParams, z: float) -> np.ndarray:
    c, s = np.cos(p.theta), np.sin(p.theta)
    ph = np.exp(2j * np.pi * z)
    return np.array([[c - 0.5j * p.g, s / ph], [s * ph, -c]], dtype=np.complex128)


def neutron_field_hamiltonian(p: NeutronParams, z: float) -> Operator:
    c, s = np.cos(p.theta), np.sin(p.theta)
    ph = np.exp(2j * np.pi * z)
    return Operator(SpaceShape((2,)), [[c, s / ph], [s * ph, -c]])


def neutron_alpha(p: NeutronParams) -> tuple[complex, complex]:
    """Return ``(alpha, r)`` with tan(alpha) = 4 sin(theta) / (4 cos(theta) - i g).

    ``r`` is half the eigenvalue splitting; alpha is fixed by
    cos(alpha) = (cos(theta) - i g/4) / r and sin(alpha) = sin(theta) / r.
    """
    c, s = np.cos(p.theta), np.sin(p.theta)
    u = c - 0.25j * p.g
    r2 = u * u + s * s + 0j
    # test the discriminant: near the exceptional point r itself goes like sqrt(rounding)
    if abs(r2) < 1e-12:
        raise DegeneracyError(f"H_eff is degenerate at theta={p.theta:.6g}, g={p.g:.6g}", (p.theta, p.g))
    r = np.sqrt(r2)
    alpha = -1j * np.log(u / r + 1j * s / r)
    return complex(alpha), complex(r)


def neutron_eigensystem(p: NeutronParams, z: float = 0.0) -> NeutronEigensystem:
    alpha, r = neutron_alpha(p)
    ch, sh = np.cos(alpha / 2), np.sin(alpha / 2)
    nrm = float(np.sqrt(abs(ch) ** 2 + abs(sh) ** 2))
    ph = np.exp(2j * np.pi * z)
    rights = np.array([[ch, sh], [sh * ph, -ch * ph]]) / nrm
    lefts = nrm * np.array([[ch, sh / ph], [sh, -ch / ph]])
    e = np.array([-0.25j * p.g + r, -0.25j * p.g - r])
    tp = 2j * np.pi
    sin_a = np.sin(alpha)
    d1 = np.array([[tp * sh**2, -0.5 * tp * sin_a], [-0.5 * tp * sin_a, tp * ch**2]])
    d2 = np.array([[tp**2 * sh**2, -0.5 * tp**2 * sin_a], [-0.5 * tp**2 * sin_a, tp**2 * ch**2]])
    return NeutronEigensystem(
        z=z,
        alpha=alpha,
        norm=nrm,
        energies=e,
        rights=rights,
        lefts=lefts,
        vector_potential=1j * np.diag(d1),
        d1=d1,
        d2=d2,
        heff=neutron_heff(p, z),
    )


def neutron_gamma_inputs(p: NeutronParams) -> tuple[dict, SlowModeSet]:
    """Numerators O_{n',n} and zero-order energies for plane-wave slow modes.

    The slow modes are ``exp(i k_z z)``, one per fast level, so every slow
    operator is 1x1. Kinetic terms use hbar^2/(2M) in units of mu B L^2.
    """
    es = neutron_eigensystem(p, 0.0)
    kl = p.eps2 / p.eps1
    shape = SpaceShape((1,))
    nums = {}
    for n1 in range(2):
        for n in range(2):
            if n1 != n:
                val = -(1j * p.eps2 * es.d1[n1, n] + 0.5 * p.eps1 * es.d2[n1, n])
                nums[(n1, n)] = Operator(shape, [[val]])
    a = es.vector_potential
    energies = tuple(np.array([0.5 * p.eps1 * (kl - a[n]) ** 2 + es.energies[n]]) for n in range(2))
    one = np.ones((1, 1), dtype=np.complex128)
    return nums, SlowModeSet((one, one), (one, one), energies)


def neutron_gamma(p: NeutronParams) -> float:
    from .bo import gamma_measure

    nums, modes = neutron_gamma_inputs(p)
    return gamma_measure(nums, modes)


def neutron_drive_model(p: NeutronParams) -> DrivenModel:
    """Spin-only model for a neutron dragged through the helix at constant speed."""
    speed = 1.0 / p.traversal_time
    jumps = (np.sqrt(p.g) * hb.sigma_minus(),) if p.g > 0 else ()
    return DrivenModel(
        hamiltonian_at=lambda t: neutron_field_hamiltonian(p, speed * t),
        jumps=jumps,
        shape=SpaceShape((2,)),
        extras={"speed": speed, "params": p},
    )


class NeutronAdiabaticPropagator:
    """Zero-order BO no-jump map for the spin while z moves as ``t / T``.

    Each instantaneous level n picks up the phase ``(E_n - A_n dz/dt) dt``
    and is carried along its own right eigenvector.
    """

    def __init__(self, p: NeutronParams):
        self.params = p
        self.speed = 1.0 / p.traversal_time
        es = neutron_eigensystem(p, 0.0)
        self.phase_rate = es.energies - es.vector_potential * self.speed

    def step_matrices(self, dt: float, n_steps: int) -> np.ndarray:
        p = self.params
        phase = np.exp(-1j * self.phase_rate * dt)
        out = np.empty((n_steps, 2, 2), dtype=np.complex128)
        es = neutron_eigensystem(p, 0.0)
        for i in range(n_steps):
            nxt = neutron_eigensystem(p, self.speed * (i + 1) * dt)
            out[i] = (nxt.rights * phase[None, :]) @ es.lefts
            es = nxt
        return out


def spin_up() -> StateVector:
    return StateVector(SpaceShape((2,)), [1.0, 0.0])
