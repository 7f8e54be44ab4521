"""Closed-form gate-error calculus and the donor-count Monte Carlo.

Crosstalk follows the off-resonant Rabi formula, decoherence enters as
exponential decay over the relevant operation time, and exchange noise
through the charge-detuning derivative of the Hubbard exchange. Errors
compose multiplicatively into a gate fidelity.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

MHZ_PER_MEV = 241798.9242


def crosstalk_error(f_rabi_mhz, delta_mhz):
    """Peak off-resonant transfer ``f**2 / (f**2 + delta**2)``."""
    f = np.asarray(f_rabi_mhz, dtype=float)
    d = np.asarray(delta_mhz, dtype=float)
    if np.any(f <= 0):
        raise ValueError("Rabi frequency must be positive")
    out = f**2 / (f**2 + d**2)
    return float(out) if out.ndim == 0 else out


def crosstalk_error_esr_cz(f_rabi_mhz, delta_mhz):
    """Crosstalk on nuclear qubits during a conditional 2 pi rotation.

    ``1 - [1 + sqrt(1 - e_ct)]**2 / 4``; never larger than :func:`crosstalk_error`.
    """
    x = np.asarray(crosstalk_error(f_rabi_mhz, delta_mhz))
    out = 1 - 0.25 * (1 + np.sqrt(np.clip(1 - x, 0.0, 1.0))) ** 2
    return float(out) if out.ndim == 0 else out


def detuning_error(f_rabi_mhz, delta1_mhz):
    """Error of a pulse whose carrier misses the target line by ``delta1``."""
    out = 1 - np.asarray(crosstalk_error(f_rabi_mhz, delta1_mhz))
    return float(out) if out.ndim == 0 else out


def decoherence_error(tau_us, t2_us):
    """``1 - exp(-tau / T2)``."""
    tau = np.asarray(tau_us, dtype=float)
    t2 = np.asarray(t2_us, dtype=float)
    if np.any(t2 <= 0) or np.any(tau < 0):
        raise ValueError("need tau >= 0 and T2 > 0")
    out = 1 - np.exp(-tau / t2)
    return float(out) if out.ndim == 0 else out


class InvalidRegionError(ValueError):
    """Raised for detunings at or beyond the charge-transition point."""


def exchange_curve(t_c_mhz: float, u_mhz: float, eps_mhz: float) -> tuple[float, float]:
    """Exchange ``J = 4 t_c**2 U / (U**2 - eps**2)`` and its slope ``dJ/d eps``.

    All quantities in MHz.
    """
    if abs(eps_mhz) >= u_mhz:
        raise InvalidRegionError(f"|eps| = {abs(eps_mhz)} must stay below U = {u_mhz}")
    denom = u_mhz**2 - eps_mhz**2
    j = 4 * t_c_mhz**2 * u_mhz / denom
    dj = 8 * t_c_mhz**2 * u_mhz * eps_mhz / denom**2
    return float(j), float(dj)


def exchange_noise(t_c_mhz: float, u_mhz: float, eps_mhz: float, delta_eps_mhz: float) -> float:
    """Exchange fluctuation ``delta_J = delta_eps * |dJ/d eps|``."""
    _, dj = exchange_curve(t_c_mhz, u_mhz, eps_mhz)
    return abs(delta_eps_mhz * dj)


def hubbard_exchange(t_c_mhz: float, u_mhz: float, eps_mhz: float) -> float:
    """Singlet-triplet splitting of the two-site Hubbard model by diagonalization.

    Singlet sector basis: (1,1) singlet, (2,0) and (0,2) doubly occupied
    states, coupled by ``sqrt(2) t_c``. The triplet sits at zero energy, so
    ``J = -E_min(singlet)``.
    """
    s = math.sqrt(2) * t_c_mhz
    h = np.array(
        [[0.0, s, s], [s, u_mhz + eps_mhz, 0.0], [s, 0.0, u_mhz - eps_mhz]]
    )
    return float(-np.linalg.eigvalsh(h)[0])


def t2_with_exchange_noise(t2_us: float, delta_j_mhz: float, sensitivity: float = 1.0) -> float:
    """Electron coherence time including exchange fluctuations.

    The bare ``T2`` is read as quasi-static Gaussian dephasing with
    frequency spread ``sigma0 = sqrt(2) / (2 pi T2)``. The exchange noise
    shifts the driven line by ``sensitivity * delta_J`` and adds in
    quadrature: ``T2' = T2 sigma0 / sqrt(sigma0**2 + (sensitivity delta_J)**2)``.
    """
    sigma0 = math.sqrt(2) / (2 * math.pi * t2_us)
    extra = sensitivity * delta_j_mhz
    return t2_us * sigma0 / math.sqrt(sigma0**2 + extra**2)


def nmr_rabi(b1_t: float, hyperfine_mhz: float, b0_t: float, gamma_n: float = -17.41) -> float:
    """Hyperfine-enhanced NMR Rabi frequency with the electron down.

    The transverse field also tilts the electron, whose admixture into the
    nuclear states scales the nuclear coupling from ``|gamma_n|`` to
    ``|gamma_n| + A / (2 B0)`` to first order in ``A / (gamma_e B0)``.
    """
    return float(b1_t * (abs(gamma_n) + hyperfine_mhz / (2 * b0_t)))


@dataclass
class ErrorBudget:
    """Pulse-resolved error ledger of one gate.

    Every ESR pulse contributes a crosstalk, a detuning and an electron
    decoherence factor; nuclear decoherence acts once over the total time.
    """

    e_ct: list[float] = field(default_factory=list)
    e_detuning: list[float] = field(default_factory=list)
    e_t2e: list[float] = field(default_factory=list)
    e_t2n: float = 0.0
    n_esr: int = 0
    n_nmr: int = 0
    tau_esr_us: float = 0.0
    tau_total_us: float = 0.0
    t2e_effective_us: float = math.inf
    delta_j_mhz: float = 0.0
    notes: dict = field(default_factory=dict)

    def add_esr(self, e_ct: float, e_detuning: float, e_t2e: float, duration_us: float) -> None:
        for name, value in (("e_ct", e_ct), ("e_detuning", e_detuning), ("e_t2e", e_t2e)):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        self.e_ct.append(float(e_ct))
        self.e_detuning.append(float(e_detuning))
        self.e_t2e.append(float(e_t2e))
        self.n_esr += 1
        self.tau_esr_us += duration_us
        self.tau_total_us += duration_us

    def add_nmr(self, duration_us: float, count: int = 1) -> None:
        self.n_nmr += count
        self.tau_total_us += duration_us

    def factors(self) -> list[float]:
        errors = self.e_ct + self.e_detuning + self.e_t2e + [self.e_t2n]
        return [1.0 - e for e in errors]

    @property
    def fidelity(self) -> float:
        return float(np.prod(self.factors()))

    @property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity

    def to_dict(self) -> dict:
        data = asdict(self)
        data["fidelity"] = self.fidelity
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=float)


def compose_fidelity(errors) -> float:
    """Product of ``1 - e`` over independent error contributions."""
    return float(np.prod([1.0 - e for e in errors]))


@dataclass(frozen=True)
class DonorCountStats:
    mean: float
    sd: float
    min: int
    max: int
    counts: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean, "sd": self.sd, "min": self.min, "max": self.max, "trials": int(self.counts.size)}


def feasible_donor_count(rng: np.random.Generator, low: float, high: float, min_gap: float, max_count: int = 64) -> int:
    """Number of uniform draws accepted before the first one within ``min_gap`` of an earlier draw."""
    drawn: list[float] = []
    while len(drawn) < max_count:
        a = rng.uniform(low, high)
        if drawn and min(abs(a - b) for b in drawn) < min_gap:
            break
        drawn.append(a)
    return len(drawn)


def sample_feasible_donor_count(
    range_mhz=(0.6, 304.0),
    min_gap_mhz: float = 10.0,
    trials: int = 1000,
    seed: int | None = 0,
    max_count: int = 64,
) -> DonorCountStats:
    """Monte Carlo of how many resolvable hyperfine couplings a cluster can host.

    Each trial draws couplings uniformly from ``range_mhz`` until a draw
    falls closer than ``min_gap_mhz`` to an earlier one; the count excludes
    that violating draw. Trials use independent child seeds of ``seed``.
    """
    low, high = map(float, range_mhz)
    if not high > low:
        raise ValueError("range must have high > low")
    if trials < 1:
        raise ValueError("need at least one trial")
    children = np.random.SeedSequence(seed).spawn(trials)
    counts = np.array(
        [feasible_donor_count(np.random.default_rng(c), low, high, min_gap_mhz, max_count) for c in children]
    )
    return DonorCountStats(
        mean=float(counts.mean()),
        sd=float(counts.std(ddof=1)) if trials > 1 else 0.0,
        min=int(counts.min()),
        max=int(counts.max()),
        counts=counts,
    )
