"""Spin systems of one or two donor clusters and their Hamiltonians.

Energies are in MHz with h = 1 (cyclic frequencies), fields in tesla.
The tensor-product basis is ordered electrons first (left, right) and then
nuclei, left cluster first in hyperfine-list order. For every spin the
first basis vector (index 0) is spin up.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

GAMMA_E_MHZ_PER_T = 27970.0
GAMMA_N_MHZ_PER_T = -17.41

MAX_DONORS_PER_CLUSTER = 7
MAX_SPINS = 9

SX = np.array([[0.0, 0.5], [0.5, 0.0]], dtype=complex)
SY = np.array([[0.0, -0.5j], [0.5j, 0.0]], dtype=complex)
SZ = np.array([[0.5, 0.0], [0.0, -0.5]], dtype=complex)
ID2 = np.eye(2, dtype=complex)


class InvalidSystemError(ValueError):
    """Raised for spin systems that violate the construction invariants."""


@dataclass(frozen=True)
class Cluster:
    """A donor cluster sharing one bound electron.

    Parameters
    ----------
    hyperfine : tuple of float
        Contact hyperfine coupling A_i (MHz) of each donor nucleus.
    """

    hyperfine: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(a) for a in self.hyperfine)
        if not values:
            raise InvalidSystemError("a cluster needs at least one donor")
        if len(values) > MAX_DONORS_PER_CLUSTER:
            raise InvalidSystemError(
                f"cluster has {len(values)} donors, at most {MAX_DONORS_PER_CLUSTER} allowed"
            )
        for a in values:
            if not math.isfinite(a) or a <= 0:
                raise InvalidSystemError(f"hyperfine coupling must be finite and > 0, got {a}")
        object.__setattr__(self, "hyperfine", values)

    @property
    def n_donors(self) -> int:
        return len(self.hyperfine)


@dataclass(frozen=True)
class SpinSystem:
    """One or two donor clusters in a static field.

    Parameters
    ----------
    clusters : tuple of Cluster
        One cluster, or a (left, right) pair.
    b0 : float
        Static field along z (T).
    gradient_db : float
        Field offset (T) seen by the second cluster.
    gamma_e, gamma_n : float
        Gyromagnetic ratios (MHz/T).
    j_exchange : float
        Electron-electron exchange (MHz); must be 0 for a single cluster.
    """

    clusters: tuple[Cluster, ...]
    b0: float
    gradient_db: float = 0.0
    gamma_e: float = GAMMA_E_MHZ_PER_T
    gamma_n: float = GAMMA_N_MHZ_PER_T
    j_exchange: float = 0.0

    def __post_init__(self):
        clusters = tuple(c if isinstance(c, Cluster) else Cluster(tuple(c)) for c in self.clusters)
        object.__setattr__(self, "clusters", clusters)
        if not 1 <= len(clusters) <= 2:
            raise InvalidSystemError(f"need 1 or 2 clusters, got {len(clusters)}")
        for name in ("b0", "gradient_db", "gamma_e", "gamma_n", "j_exchange"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidSystemError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if self.b0 <= 0:
            raise InvalidSystemError(f"b0 must be > 0, got {self.b0}")
        if len(clusters) == 1 and (self.j_exchange != 0.0 or self.gradient_db != 0.0):
            raise InvalidSystemError("exchange and field gradient need two clusters")
        if self.n_spins > MAX_SPINS:
            raise InvalidSystemError(
                f"Hilbert dimension 2^{self.n_spins} exceeds the 2^{MAX_SPINS} limit"
            )

    @classmethod
    def from_hyperfine(cls, *hyperfine: Sequence[float], **kwargs) -> "SpinSystem":
        """Build a system from one hyperfine list per cluster."""
        return cls(clusters=tuple(Cluster(tuple(h)) for h in hyperfine), **kwargs)

    @property
    def n_electrons(self) -> int:
        return len(self.clusters)

    @property
    def n_nuclei(self) -> int:
        return sum(c.n_donors for c in self.clusters)

    @property
    def n_spins(self) -> int:
        return self.n_electrons + self.n_nuclei

    @property
    def dim(self) -> int:
        return 2**self.n_spins

    @property
    def hyperfine(self) -> np.ndarray:
        """All hyperfine couplings in canonical nuclear order."""
        return np.array([a for c in self.clusters for a in c.hyperfine])

    @property
    def nucleus_cluster(self) -> np.ndarray:
        """Cluster index of each nucleus in canonical order."""
        return np.array([k for k, c in enumerate(self.clusters) for _ in c.hyperfine], dtype=int)

    def cluster_field(self, k: int) -> float:
        """Static field (T) seen by cluster ``k``."""
        return self.b0 + (self.gradient_db if k == 1 else 0.0)

    def nuclear_indices(self, k: int) -> list[int]:
        """Canonical nuclear indices belonging to cluster ``k``."""
        return [i for i, c in enumerate(self.nucleus_cluster) if c == k]

    def replace(self, **changes) -> "SpinSystem":
        data = dict(
            clusters=self.clusters,
            b0=self.b0,
            gradient_db=self.gradient_db,
            gamma_e=self.gamma_e,
            gamma_n=self.gamma_n,
            j_exchange=self.j_exchange,
        )
        data.update(changes)
        return SpinSystem(**data)

    def to_dict(self) -> dict:
        return {
            "clusters": [{"hyperfine_mhz": list(c.hyperfine)} for c in self.clusters],
            "b0_t": self.b0,
            "gradient_db_t": self.gradient_db,
            "j_mhz": self.j_exchange,
            "gamma_e_mhz_per_t": self.gamma_e,
            "gamma_n_mhz_per_t": self.gamma_n,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SpinSystem":
        try:
            clusters = tuple(Cluster(tuple(c["hyperfine_mhz"])) for c in data["clusters"])
            return cls(
                clusters=clusters,
                b0=data["b0_t"],
                gradient_db=data.get("gradient_db_t", 0.0),
                gamma_e=data.get("gamma_e_mhz_per_t", GAMMA_E_MHZ_PER_T),
                gamma_n=data.get("gamma_n_mhz_per_t", GAMMA_N_MHZ_PER_T),
                j_exchange=data.get("j_mhz", 0.0),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidSystemError(f"malformed spin-system document: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SpinSystem":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class SpinBasisLabel:
    """Product-basis state: electron states 'u'/'d', nuclear states 'U'/'D'."""

    electron_states: tuple[str, ...]
    nuclear_states: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "electron_states", tuple(self.electron_states))
        object.__setattr__(self, "nuclear_states", tuple(self.nuclear_states))
        if any(s not in ("u", "d") for s in self.electron_states):
            raise ValueError(f"electron states must be 'u' or 'd': {self.electron_states}")
        if any(s not in ("U", "D") for s in self.nuclear_states):
            raise ValueError(f"nuclear states must be 'U' or 'D': {self.nuclear_states}")

    def __str__(self) -> str:
        return "".join(self.electron_states) + "".join(self.nuclear_states)

    @classmethod
    def parse(cls, text: str, n_electrons: int) -> "SpinBasisLabel":
        return cls(tuple(text[:n_electrons]), tuple(text[n_electrons:]))

    def index(self) -> int:
        bits = [s in ("d", "D") for s in self.electron_states + self.nuclear_states]
        return reduce(lambda acc, b: 2 * acc + int(b), bits, 0)

    @classmethod
    def from_index(cls, index: int, n_electrons: int, n_nuclei: int) -> "SpinBasisLabel":
        n = n_electrons + n_nuclei
        bits = [(index >> (n - 1 - k)) & 1 for k in range(n)]
        electrons = tuple("d" if b else "u" for b in bits[:n_electrons])
        nuclei = tuple("D" if b else "U" for b in bits[n_electrons:])
        return cls(electrons, nuclei)


def basis_labels(sys: SpinSystem) -> list[SpinBasisLabel]:
    """All product-basis labels in canonical index order."""
    return [SpinBasisLabel.from_index(i, sys.n_electrons, sys.n_nuclei) for i in range(sys.dim)]


def embed(op: np.ndarray, site: int, n_spins: int) -> np.ndarray:
    """Single-spin operator ``op`` acting on ``site`` of an ``n_spins`` register."""
    left = np.eye(2**site, dtype=complex)
    right = np.eye(2 ** (n_spins - site - 1), dtype=complex)
    return np.kron(np.kron(left, op), right)


def _spin_vector(site: int, n_spins: int) -> list[np.ndarray]:
    return [embed(op, site, n_spins) for op in (SX, SY, SZ)]


def _dot(u: Iterable[np.ndarray], v: Iterable[np.ndarray]) -> np.ndarray:
    return sum(a @ b for a, b in zip(u, v))


def electron_site(sys: SpinSystem, k: int) -> int:
    return k


def nucleus_site(sys: SpinSystem, i: int) -> int:
    return sys.n_electrons + i


def build_static_hamiltonian(sys: SpinSystem, hyperfine: str = "full") -> np.ndarray:
    """Static Hamiltonian of the system in the canonical product basis.

    Parameters
    ----------
    sys : SpinSystem
    hyperfine : {"full", "secular"}
        ``"full"`` keeps the isotropic contact term A S.I; ``"secular"``
        keeps only A S_z I_z. Exchange is always the full S_L.S_R.

    Returns
    -------
    ndarray
        Hermitian ``(dim, dim)`` complex matrix in MHz.
    """
    if hyperfine not in ("full", "secular"):
        raise ValueError(f"hyperfine must be 'full' or 'secular', got {hyperfine!r}")
    n = sys.n_spins
    h = np.zeros((sys.dim, sys.dim), dtype=complex)
    electrons = [_spin_vector(electron_site(sys, k), n) for k in range(sys.n_electrons)]
    for k in range(sys.n_electrons):
        h += sys.gamma_e * sys.cluster_field(k) * electrons[k][2]
    for i, (a, k) in enumerate(zip(sys.hyperfine, sys.nucleus_cluster)):
        nucleus = _spin_vector(nucleus_site(sys, i), n)
        h += sys.gamma_n * sys.cluster_field(k) * nucleus[2]
        if hyperfine == "full":
            h += a * _dot(electrons[k], nucleus)
        else:
            h += a * electrons[k][2] @ nucleus[2]
    if sys.n_electrons == 2 and sys.j_exchange != 0.0:
        h += sys.j_exchange * _dot(electrons[0], electrons[1])
    return h


def total_sz(sys: SpinSystem) -> np.ndarray:
    """Total z magnetization of all electrons and nuclei."""
    n = sys.n_spins
    return sum(embed(SZ, s, n) for s in range(n))


def build_drive_hamiltonian(
    sys: SpinSystem,
    target: tuple[str, int | None],
    rabi_mhz: float,
    phase: float = 0.0,
) -> np.ndarray:
    """Transverse drive ``rabi * (S_x cos(phase) + S_y sin(phase))`` on a spin.

    Parameters
    ----------
    target : (kind, index)
        ``kind`` is ``"electron"`` or ``"nucleus"``; ``index`` of ``None``
        drives every spin of that kind (a global field).
    rabi_mhz : float
        Rabi frequency; resonant off-diagonal elements equal ``rabi/2``.
    """
    kind, index = target
    if kind == "electron":
        count, site_of = sys.n_electrons, electron_site
    elif kind == "nucleus":
        count, site_of = sys.n_nuclei, nucleus_site
    else:
        raise ValueError(f"target kind must be 'electron' or 'nucleus', got {kind!r}")
    if index is None:
        indices = range(count)
    else:
        if not isinstance(index, (int, np.integer)) or not 0 <= index < count:
            raise IndexError(f"{kind} index {index} out of range for {count} spins")
        indices = [int(index)]
    op = math.cos(phase) * SX + math.sin(phase) * SY
    h = np.zeros((sys.dim, sys.dim), dtype=complex)
    for k in indices:
        h += embed(op, site_of(sys, k), sys.n_spins)
    return rabi_mhz * h
