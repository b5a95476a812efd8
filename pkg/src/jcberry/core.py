"""
Hilbert-space bookkeeping for a three-level transmon coupled to one
truncated cavity mode.

Basis kets are |level, photons> with level in {g, e, f} and
photons in 0..n_max. Ordering is photons-major, level-minor, so the index
of |level, m> is ``3*m + level``. The coupled pair {|f,n>, |g,n+1>} then
sits on the adjacent indices (3n+2, 3n+3).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

NORM_TOL = 1e-12


class Level(IntEnum):
    g = 0
    e = 1
    f = 2


@dataclass(frozen=True, order=True)
class BasisLabel:
    """A single ket |level, photons>.

    Ordering compares ``photons`` first, then ``level``, matching the
    canonical basis order.
    """

    photons: int
    level: Level

    def __post_init__(self):
        if self.photons < 0:
            raise ValueError("photon number must be >= 0")
        object.__setattr__(self, "level", Level(self.level))

    @property
    def index(self) -> int:
        return 3 * self.photons + int(self.level)

    def __str__(self) -> str:
        return f"|{self.level.name},{self.photons}>"

    @property
    def name(self) -> str:
        return f"{self.level.name}{self.photons}"


def label(level: Union[str, Level], photons: int) -> BasisLabel:
    if isinstance(level, str):
        level = Level[level]
    return BasisLabel(photons, level)


@lru_cache(maxsize=None)
def make_basis(n_max: int) -> tuple[BasisLabel, ...]:
    """Canonical basis of the space {g,e,f} x {0..n_max}.

    Index lookup is ``BasisLabel.index`` (arithmetic, O(1)).
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    return tuple(BasisLabel(m, lv) for m in range(n_max + 1) for lv in Level)


def dimension(n_max: int) -> int:
    return 3 * (n_max + 1)


def pair_indices(n: int) -> tuple[int, int]:
    """Indices of (|f,n>, |g,n+1>)."""
    return 3 * n + 2, 3 * n + 3


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class StateVector:
    """Complex amplitudes over the canonical basis for a given ``n_max``."""

    amplitudes: np.ndarray
    n_max: int

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != dimension(self.n_max):
            raise DimensionError(
                f"expected {dimension(self.n_max)} amplitudes for n_max={self.n_max}, "
                f"got {amps.size}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, n_max: int, level: Union[str, Level], photons: int) -> "StateVector":
        lab = label(level, photons)
        if lab.photons > n_max:
            raise ValueError(f"{lab} outside n_max={n_max}")
        amps = np.zeros(dimension(n_max), dtype=complex)
        amps[lab.index] = 1.0
        return cls(amps, n_max)

    @classmethod
    def from_dict(cls, n_max: int, coeffs: dict) -> "StateVector":
        """Build from ``{("f", 0): a, ("e", 0): b, ...}``; not normalized."""
        amps = np.zeros(dimension(n_max), dtype=complex)
        for (lv, m), c in coeffs.items():
            lab = label(lv, m)
            if lab.photons > n_max:
                raise ValueError(f"{lab} outside n_max={n_max}")
            amps[lab.index] += c
        return cls(amps, n_max)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "StateVector":
        nrm = self.norm()
        if nrm == 0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.amplitudes / nrm, self.n_max)

    def amplitude(self, level: Union[str, Level], photons: int) -> complex:
        return complex(self.amplitudes[label(level, photons).index])

    def with_global_phase(self, phase: float) -> "StateVector":
        return StateVector(np.exp(1j * phase) * self.amplitudes, self.n_max)

    def __len__(self):
        return self.dim


def inner_product(a: StateVector, b: StateVector) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


Selector = Union[str, Level, BasisLabel, Sequence]


def population(state: StateVector, selector: Selector) -> float:
    """Probability of the selected level (summed over photon numbers) or label.

    ``selector`` may be a level (``"f"`` or ``Level.f``), a ``BasisLabel``,
    or a ``(level, photons)`` tuple.
    """
    probs = np.abs(state.amplitudes) ** 2
    if isinstance(selector, BasisLabel):
        if selector.photons > state.n_max:
            return 0.0
        return float(probs[selector.index])
    if isinstance(selector, (tuple, list)):
        return population(state, label(*selector))
    if isinstance(selector, str):
        selector = Level[selector]
    lv = Level(selector)
    return float(min(1.0, probs[int(lv)::3].sum()))


def level_populations(state: StateVector) -> dict[str, float]:
    probs = np.abs(state.amplitudes) ** 2
    return {lv.name: float(probs[int(lv)::3].sum()) for lv in Level}


@dataclass(frozen=True)
class SubspaceVector:
    """Two amplitudes over the ordered pair (|f,n>, |g,n+1>)."""

    amplitudes: np.ndarray
    n: int

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != 2:
            raise DimensionError("subspace vectors have exactly two amplitudes")
        if self.n < 0:
            raise ValueError("photon index must be >= 0")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def f(self) -> complex:
        return complex(self.amplitudes[0])

    @property
    def g(self) -> complex:
        return complex(self.amplitudes[1])

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "SubspaceVector":
        return SubspaceVector(self.amplitudes / self.norm(), self.n)

    def vdot(self, other: "SubspaceVector") -> complex:
        if other.n != self.n:
            raise DimensionError("subspace vectors belong to different photon blocks")
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def embed_subspace(v: SubspaceVector, n_max: int) -> StateVector:
    """Place ``v`` on (|f,n>, |g,n+1>) with zeros elsewhere."""
    if v.n + 1 > n_max:
        raise IndexError(f"photon index n={v.n} needs n_max >= {v.n + 1}, got {n_max}")
    amps = np.zeros(dimension(n_max), dtype=complex)
    i, j = pair_indices(v.n)
    amps[i], amps[j] = v.amplitudes
    return StateVector(amps, n_max)


def project_subspace(s: StateVector, n: int) -> SubspaceVector:
    """Amplitudes of ``s`` on (|f,n>, |g,n+1>). No renormalization."""
    if n < 0 or n + 1 > s.n_max:
        raise IndexError(f"photon index n={n} out of range for n_max={s.n_max}")
    i, j = pair_indices(n)
    return SubspaceVector(s.amplitudes[[i, j]], n)


def is_hermitian(m: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol)


def unitarity_error(u: np.ndarray) -> float:
    """max-norm of U^dagger U - I."""
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))
