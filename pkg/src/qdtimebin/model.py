"""Quantum-dot--cavity model: Hilbert space, Hamiltonian, collapse operators, pump pulses.

Units: hbar = 1 and every rate, detuning and Rabi frequency is expressed in
units of the QD--cavity coupling ``g``; times are in units of ``1/g``.

Basis ordering is level-major: ``(m,0), (m,1), ..., (u,0), ..., (g, max_photons)``
with the QD levels ordered ``m, u, y, g``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields

import numpy as np

LEVELS = ("m", "u", "y", "g")

# Short names for the states the dynamics can reach from |m,0>.
# Y = |y,1>, G = |g,1>, Gp = G' = |g,2>.
STATE_LABELS = {
    "m": ("m", 0),
    "u": ("u", 0),
    "Y": ("y", 1),
    "Gp": ("g", 2),
    "y": ("y", 0),
    "G": ("g", 1),
    "g": ("g", 0),
}
REACHABLE = tuple(STATE_LABELS)


@dataclass(frozen=True)
class SystemParams:
    """Rates and detunings of the QD--cavity system (units of g).

    ``kappa`` is the field decay rate entering the ``sqrt(kappa) a`` collapse
    operator, so the photon number of the cavity decays at ``kappa`` and
    the total (energy) linewidth is ``2 kappa`` in the usual convention.
    Defaults reproduce the standard two-pulse operating point.
    """

    g1: float = 1.0
    g2: float = 1.0
    kappa: float = 2.5
    gamma1: float = 1e-3
    gamma2: float = 1e-3
    gamma_d: float = 1e-2
    delta_p: float = -1.5
    delta1: float = -3.0
    delta2: float = 2.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise ValueError(f"{f.name} must be finite, got {value!r}")
        for name in ("g1", "g2", "kappa", "gamma1", "gamma2", "gamma_d"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)!r}")

    def replace(self, **changes) -> "SystemParams":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return SystemParams(**values)


@dataclass(frozen=True)
class PulsePair:
    """Two Gaussian pump envelopes ``amp * exp(-(t - center)^2 / tau_p^2)``."""

    amp1: float = 0.74
    center1: float = 4 * math.pi
    amp2: float = 3.0
    center2: float = 19 * math.pi
    tau_p: float = 2 * math.pi

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise ValueError(f"{f.name} must be finite, got {value!r}")
        if self.amp1 < 0 or self.amp2 < 0:
            raise ValueError("pulse amplitudes must be >= 0")
        if self.tau_p <= 0:
            raise ValueError(f"tau_p must be > 0, got {self.tau_p!r}")
        if self.center2 <= self.center1:
            raise ValueError("center2 must come after center1")
        if self.center2 - self.center1 < 3 * self.tau_p:
            warnings.warn(
                f"pulse separation {self.center2 - self.center1:.3g} is less than "
                f"3 tau_p; the two time bins are not well resolved",
                stacklevel=3,
            )

    @property
    def separation(self) -> float:
        return self.center2 - self.center1

    def first(self, t):
        """Envelope of the first pulse alone (the coincidence reference)."""
        t = np.asarray(t, dtype=float)
        return self.amp1 * np.exp(-(((t - self.center1) / self.tau_p) ** 2))

    def second(self, t):
        t = np.asarray(t, dtype=float)
        return self.amp2 * np.exp(-(((t - self.center2) / self.tau_p) ** 2))

    def replace(self, **changes) -> "PulsePair":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return PulsePair(**values)


def pump_envelope(pulses: PulsePair, t):
    """Total real pump Rabi frequency Omega_p(t); vectorised over ``t``.

    Both pulses carry the same (zero) optical phase.
    """
    out = pulses.first(t) + pulses.second(t)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class HilbertSpace:
    """QD levels {m, u, y, g} tensored with a truncated cavity Fock space."""

    max_photons: int = 2
    levels: tuple = LEVELS
    basis: tuple = field(init=False, repr=False, compare=False)
    _lookup: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        basis = tuple((lvl, n) for lvl in self.levels for n in range(self.max_photons + 1))
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "_lookup", {b: i for i, b in enumerate(basis)})

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def n_fock(self) -> int:
        return self.max_photons + 1

    def index(self, level: str, n: int | None = None) -> int:
        """Basis index of ``|level, n>``; ``level`` may also be a short label like ``"Gp"``."""
        if n is None:
            try:
                level, n = STATE_LABELS[level]
            except KeyError:
                raise KeyError(f"unknown state label {level!r}") from None
        try:
            return self._lookup[(level, n)]
        except KeyError:
            raise KeyError(f"|{level},{n}> is not in the basis") from None

    def ket(self, level: str, n: int | None = None) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(level, n)] = 1.0
        return v

    def projector(self, level: str, n: int | None = None) -> np.ndarray:
        v = self.ket(level, n)
        return np.outer(v, v.conj())

    def sigma(self, a: str, b: str) -> np.ndarray:
        """``|a><b|`` on the QD, identity on the cavity."""
        qd = np.zeros((len(self.levels), len(self.levels)))
        qd[self.levels.index(a), self.levels.index(b)] = 1.0
        return np.kron(qd, np.eye(self.n_fock))

    def annihilation(self) -> np.ndarray:
        """Cavity annihilation operator ``a`` (identity on the QD)."""
        a = np.diag(np.sqrt(np.arange(1, self.n_fock)), k=1)
        return np.kron(np.eye(len(self.levels)), a)

    def reachable_indices(self) -> np.ndarray:
        """Indices of the seven states reachable from ``|m,0>``, in REACHABLE order."""
        return np.array([self.index(lbl) for lbl in REACHABLE])


def enumerate_basis(max_photons: int = 2) -> HilbertSpace:
    if int(max_photons) != max_photons or max_photons < 2:
        raise ValueError(
            f"max_photons must be an integer >= 2 (the cascade populates |g,2>), got {max_photons!r}"
        )
    return HilbertSpace(int(max_photons))


def hamiltonian_parts(params: SystemParams, space: HilbertSpace) -> tuple[np.ndarray, np.ndarray]:
    """Split ``H(t) = H_static + Omega_p(t) * H_pump``."""
    if not isinstance(space, HilbertSpace):
        raise TypeError("space must be a HilbertSpace")
    a = space.annihilation()
    h0 = (
        params.delta_p * space.sigma("m", "m")
        + params.delta1 * space.sigma("y", "y")
        + (params.delta1 + params.delta2) * space.sigma("g", "g")
    ).astype(complex)
    coupling = params.g1 * space.sigma("u", "y") @ a + params.g2 * space.sigma("y", "g") @ a
    h0 += coupling + coupling.conj().T
    hp = (space.sigma("u", "m") + space.sigma("m", "u")).astype(complex)
    return h0, hp


def build_hamiltonian(params: SystemParams, pulses: PulsePair, t: float, space: HilbertSpace) -> np.ndarray:
    h0, hp = hamiltonian_parts(params, space)
    return h0 + pump_envelope(pulses, t) * hp


def lindblad_set(params: SystemParams, space: HilbertSpace) -> list[np.ndarray]:
    """The seven collapse operators, in a fixed order.

    Order: biexciton decay to m, biexciton decay to y, exciton decay to g,
    dephasing of u (rate 2 gamma_d), of m, of y, cavity leakage.
    """
    s = space.sigma
    ops = [
        math.sqrt(params.gamma1) * s("m", "u"),
        math.sqrt(params.gamma1) * s("y", "u"),
        math.sqrt(params.gamma2) * s("g", "y"),
        math.sqrt(2 * params.gamma_d) * s("u", "u"),
        math.sqrt(params.gamma_d) * s("m", "m"),
        math.sqrt(params.gamma_d) * s("y", "y"),
        math.sqrt(params.kappa) * space.annihilation(),
    ]
    return [op.astype(complex) for op in ops]
