"""Driven time evolution in the eigenframe of the static Hamiltonian.

The static Hamiltonian is diagonalized once and each eigenvector is labelled
by the product state it is adiabatically connected to. A pulse is a global
oscillating transverse field ``2 b1 cos(2 pi f t + phase)`` coupling to
``gamma_e S_x + gamma_n I_x`` of every spin (or to a single spin when the
pulse names a target). In the interaction picture every matrix element
``(k, l)`` with ``E_k > E_l`` oscillates at ``E_k - E_l - f``; the
rotating-wave approximation keeps only these co-rotating terms. The field
amplitude is normalized so that the addressed transition has Rabi frequency
``rabi_mhz``.

Evolution uses fixed-step exponential midpoint stepping, which keeps the
propagator unitary to machine precision.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .spectrum import exact_levels
from .spins import SX, SZ, SpinBasisLabel, SpinSystem, basis_labels, embed

TWO_PI = 2 * math.pi
STEPS_PER_CYCLE = 50
MAX_STEPS = 20_000_000
CHUNK_ELEMENTS = 4_000_000


class StepSizeError(RuntimeError):
    """Raised when a pulse would need more integration steps than allowed."""


class GateExtractionError(RuntimeError):
    """Raised when the computational subspace is not retained by an evolution."""


@dataclass(frozen=True)
class Pulse:
    """A rectangular ESR or NMR pulse.

    Parameters
    ----------
    kind : {"ESR", "NMR"}
    carrier_mhz : float
    rabi_mhz : float
        Rabi frequency on the addressed transition.
    duration_us : float
    phase_rad : float
        Carrier phase referenced to the global clock.
    target : int or None
        Index of the single driven electron/nucleus; ``None`` is a global field.
    label : str
        Free-form intent, e.g. ``"2pi e0 | DD"``.
    """

    kind: str
    carrier_mhz: float
    rabi_mhz: float
    duration_us: float
    phase_rad: float = 0.0
    target: int | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("ESR", "NMR"):
            raise ValueError(f"pulse kind must be 'ESR' or 'NMR', got {self.kind!r}")
        if not self.duration_us > 0:
            raise ValueError("pulse duration must be positive")
        if not self.rabi_mhz > 0:
            raise ValueError("pulse Rabi frequency must be positive")

    @classmethod
    def rotation(cls, kind, carrier_mhz, rabi_mhz, angle_rad, phase_rad=0.0, **kwargs) -> "Pulse":
        """Pulse rotating the addressed transition by ``angle_rad``."""
        return cls(kind, carrier_mhz, rabi_mhz, angle_rad / (TWO_PI * rabi_mhz), phase_rad, **kwargs)

    @classmethod
    def esr_2pi(cls, carrier_mhz, rabi_mhz, **kwargs) -> "Pulse":
        return cls.rotation("ESR", carrier_mhz, rabi_mhz, TWO_PI, **kwargs)

    @classmethod
    def nmr_pi(cls, carrier_mhz, rabi_mhz, **kwargs) -> "Pulse":
        return cls.rotation("NMR", carrier_mhz, rabi_mhz, math.pi, **kwargs)


@dataclass(frozen=True)
class PulseSequence:
    pulses: tuple[Pulse, ...] = ()
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))

    def __len__(self) -> int:
        return len(self.pulses)

    def __iter__(self):
        return iter(self.pulses)

    @property
    def n_esr(self) -> int:
        return sum(p.kind == "ESR" for p in self.pulses)

    @property
    def n_nmr(self) -> int:
        return sum(p.kind == "NMR" for p in self.pulses)

    @property
    def duration_us(self) -> float:
        return float(sum(p.duration_us for p in self.pulses))

    def __add__(self, other: "PulseSequence") -> "PulseSequence":
        return PulseSequence(self.pulses + other.pulses, {**self.metadata, **other.metadata})

    def to_dict(self) -> dict:
        return {"pulses": [asdict(p) for p in self.pulses], "metadata": self.metadata}

    @classmethod
    def from_dict(cls, data: dict) -> "PulseSequence":
        return cls(tuple(Pulse(**p) for p in data["pulses"]), data.get("metadata", {}))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PulseSequence":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Eigenframe:
    """Labelled eigen-decomposition of a static Hamiltonian."""

    sys: SpinSystem
    energies: np.ndarray
    vectors: np.ndarray
    labels: tuple[SpinBasisLabel, ...]

    @property
    def dim(self) -> int:
        return self.energies.size

    def index(self, label: str) -> int:
        return SpinBasisLabel.parse(label, self.sys.n_electrons).index()


def _fix_phases(v: np.ndarray) -> np.ndarray:
    # make the largest component of every eigenvector real and positive
    rows = np.argmax(np.abs(v), axis=0)
    ph = v[rows, np.arange(v.shape[1])]
    return v * (np.abs(ph) / ph)[None, :]


def eigenframe(sys: SpinSystem, hyperfine: str = "full") -> Eigenframe:
    energies, vectors = exact_levels(sys, hyperfine=hyperfine)
    return Eigenframe(sys, energies, _fix_phases(vectors), tuple(basis_labels(sys)))


def _flip_masks(sys: SpinSystem) -> tuple[np.ndarray, np.ndarray]:
    """Boolean (dim, dim) masks of single electron flips and single nuclear flips."""
    idx = np.arange(sys.dim)
    x = idx[:, None] ^ idx[None, :]
    single = (x != 0) & ((x & (x - 1)) == 0)
    nuclear_bits = (1 << sys.n_nuclei) - 1
    nmr = single & ((x & nuclear_bits) != 0)
    esr = single & ~nmr
    return esr, nmr


def field_operator(sys: SpinSystem, kind: str, target: int | None) -> np.ndarray:
    """Transverse coupling operator of a drive (x quadrature)."""
    n = sys.n_spins
    if target is None:
        op = sum(sys.gamma_e * embed(SX, k, n) for k in range(sys.n_electrons))
        op = op + sum(sys.gamma_n * embed(SX, sys.n_electrons + i, n) for i in range(sys.n_nuclei))
        return op
    if kind == "ESR":
        if not 0 <= target < sys.n_electrons:
            raise IndexError(f"electron index {target} out of range")
        return embed(SX, target, n)
    if not 0 <= target < sys.n_nuclei:
        raise IndexError(f"nucleus index {target} out of range")
    return embed(SX, sys.n_electrons + target, n)


@dataclass(frozen=True)
class RotatingGenerator:
    """Interaction-picture generator of one pulse.

    ``coupling[k, l] * exp(2j pi detuning[k, l] t)`` is the (k, l) element for
    ``k`` above ``l``; the lower triangle follows by Hermiticity. The
    generator is ``2 pi`` times this matrix in rad/us.

    Attributes
    ----------
    addressed : (int, int)
        Labelled (upper, lower) pair whose Rabi frequency is ``rabi_mhz``.
    """

    coupling: np.ndarray
    detuning: np.ndarray
    addressed: tuple[int, int]
    counter: np.ndarray | None = None
    counter_detuning: np.ndarray | None = None

    def at(self, t) -> np.ndarray:
        """Generator matrix (MHz) at times ``t`` (scalar or 1-D array)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        phase = np.exp(2j * math.pi * self.detuning[None] * t[:, None, None])
        m = self.coupling[None] * phase
        if self.counter is not None:
            m = m + self.counter[None] * np.exp(2j * math.pi * self.counter_detuning[None] * t[:, None, None])
        return m + np.conj(np.swapaxes(m, 1, 2))

    @property
    def max_frequency(self) -> float:
        f = np.abs(self.detuning[self.coupling != 0])
        top = float(f.max()) if f.size else 0.0
        if self.counter is not None:
            g = np.abs(self.counter_detuning[self.counter != 0])
            top = max(top, float(g.max()) if g.size else 0.0)
        return max(top, float(np.abs(self.coupling).sum(axis=1).max()))


def _addressed_pair(frame: Eigenframe, pulse: Pulse, x_eig: np.ndarray) -> tuple[int, int]:
    esr, nmr = _flip_masks(frame.sys)
    mask = esr if pulse.kind == "ESR" else nmr
    gaps = frame.energies[:, None] - frame.energies[None, :]
    ok = mask & (gaps > 0) & (np.abs(x_eig) > 1e-12)
    if pulse.kind == "NMR":
        # prefer nuclear lines of the computational manifold (all electrons down)
        m = 2**frame.sys.n_nuclei
        low = (2**frame.sys.n_electrons - 1) * m
        in_manifold = np.zeros_like(ok)
        in_manifold[low:, low:] = True
        if (ok & in_manifold).any():
            ok = ok & in_manifold
    if not ok.any():
        raise ValueError(f"no {pulse.kind} transition couples to the drive")
    cost = np.where(ok, np.abs(gaps - pulse.carrier_mhz), np.inf)
    k, l = np.unravel_index(int(np.argmin(cost)), cost.shape)
    return int(k), int(l)


def rotating_frame(
    frame: Eigenframe | SpinSystem,
    pulse: Pulse,
    cutoff_mhz: float | None = None,
    rwa: bool = True,
) -> RotatingGenerator:
    """Interaction-picture generator of ``pulse`` w.r.t. the diagonalized statics.

    Parameters
    ----------
    cutoff_mhz : float, optional
        Co-rotating elements detuned by more than this are dropped; their
        excitation is at most ``(rabi/cutoff)**2``. Defaults to ``1000 * rabi``.
    rwa : bool
        With ``False`` every element keeps both rotating components and no
        cutoff is applied (used to validate the approximation).
    """
    if isinstance(frame, SpinSystem):
        frame = eigenframe(frame)
    x_eig = frame.vectors.conj().T @ field_operator(frame.sys, pulse.kind, pulse.target) @ frame.vectors
    upper, lower = _addressed_pair(frame, pulse, x_eig)
    b1 = pulse.rabi_mhz / (2 * abs(x_eig[upper, lower]))
    gaps = frame.energies[:, None] - frame.energies[None, :]
    e_phase = np.exp(-1j * pulse.phase_rad)
    if rwa:
        cutoff = 1000 * pulse.rabi_mhz if cutoff_mhz is None else cutoff_mhz
        detuning = gaps - pulse.carrier_mhz
        keep = (gaps > 0) & (np.abs(detuning) <= cutoff)
        coupling = np.where(keep, b1 * x_eig * e_phase, 0.0)
        if abs(detuning[upper, lower]) > cutoff:
            warnings.warn(
                f"carrier {pulse.carrier_mhz} MHz lies {abs(detuning[upper, lower]):.3g} MHz from "
                "the nearest transition; nothing is driven",
                stacklevel=2,
            )
        return RotatingGenerator(coupling, np.where(keep, detuning, 0.0), (upper, lower))
    # both rotating components of 2 b1 cos(2 pi f t + phase) X on the upper triangle
    tri = np.triu(np.ones_like(gaps, dtype=bool), k=0)
    weight = np.where(np.eye(frame.dim, dtype=bool), 0.5, 1.0)
    co = np.where(tri, weight * b1 * x_eig * e_phase, 0.0)
    cr = np.where(tri, weight * b1 * x_eig * np.conj(e_phase), 0.0)
    return RotatingGenerator(co, gaps - pulse.carrier_mhz, (upper, lower), cr, gaps + pulse.carrier_mhz)


def noise_diagonal(frame: Eigenframe, coupling) -> np.ndarray:
    """Eigenframe diagonal of ``sum_j eps_j S_z,j`` per unit noise amplitude."""
    coupling = np.asarray(coupling, dtype=float)
    n = frame.sys.n_spins
    if coupling.size != n:
        raise ValueError(f"noise coupling has {coupling.size} entries, system has {n} spins")
    h = np.zeros((frame.dim, frame.dim), dtype=complex)
    for j, c in enumerate(coupling):
        if c != 0.0:
            h += c * embed(SZ, j, n)
    return np.real(np.einsum("ik,ij,jk->k", frame.vectors.conj(), h, frame.vectors))


@dataclass
class EvolutionResult:
    """Outcome of an evolution in the labelled eigenframe (interaction picture).

    Attributes
    ----------
    propagator : ndarray or None
        Interaction-picture propagator over the whole sequence.
    final_state : ndarray or None
    times_us : ndarray
    populations : ndarray or None
        ``(len(times_us), dim)`` populations of the labelled eigenstates.
    labels : list of str
    """

    propagator: np.ndarray | None
    final_state: np.ndarray | None
    times_us: np.ndarray
    populations: np.ndarray | None
    labels: list[str]

    def populations_csv(self) -> str:
        if self.populations is None:
            raise ValueError("no population trace was recorded")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time_us"] + self.labels)
        for t, row in zip(self.times_us, self.populations):
            writer.writerow([repr(float(t))] + [repr(float(p)) for p in row])
        return buf.getvalue()


def _step_unitaries(gen_fn, t_mid: np.ndarray, dt: float) -> np.ndarray:
    g = gen_fn(t_mid)
    w, v = np.linalg.eigh(g)
    return (v * np.exp(-2j * math.pi * w * dt)[:, None, :]) @ np.conj(np.swapaxes(v, 1, 2))


def _chain(us: np.ndarray) -> np.ndarray:
    # ordered product U_n ... U_1 by pairwise reduction
    while us.shape[0] > 1:
        if us.shape[0] % 2:
            us = np.concatenate([us, np.eye(us.shape[1])[None]], axis=0)
        us = us[1::2] @ us[0::2]
    return us[0]


def _initial_vector(frame: Eigenframe, initial) -> np.ndarray | None:
    if initial is None:
        return None
    if isinstance(initial, str):
        psi = np.zeros(frame.dim, dtype=complex)
        psi[frame.index(initial)] = 1.0
        return psi
    psi = np.asarray(initial, dtype=complex)
    if psi.shape != (frame.dim,):
        raise ValueError(f"initial state must have shape ({frame.dim},)")
    if abs(np.linalg.norm(psi) - 1) > 1e-9:
        raise ValueError("initial state is not normalized")
    return psi


def evolve(
    sys: SpinSystem | Eigenframe,
    pulses: PulseSequence | list[Pulse],
    initial=None,
    noise=None,
    record_every_us: float | None = None,
    cutoff_mhz: float | None = None,
    rwa: bool = True,
    steps_per_cycle: int = STEPS_PER_CYCLE,
    propagator: bool = True,
) -> EvolutionResult:
    """Integrate a pulse sequence in the eigenframe of the static Hamiltonian.

    Parameters
    ----------
    sys : SpinSystem or Eigenframe
    pulses : PulseSequence
        Sequential pulses; the global clock runs continuously across them.
    initial : str or array, optional
        Initial state as a product label (e.g. ``"dUD"``) or a normalized
        eigenframe vector. Required for population traces.
    noise : NoiseTrace, optional
        Adds ``sum_j eps_j delta_i S_z,j`` held constant over each noise sample.
    record_every_us : float, optional
        Sampling interval of population traces (default: every step).
    steps_per_cycle : int
        Steps per period of the fastest frequency in the generator.
    propagator : bool
        Accumulate the full propagator (costs ``dim**3`` per step).
    """
    frame = sys if isinstance(sys, Eigenframe) else eigenframe(sys)
    psi = _initial_vector(frame, initial)
    if psi is None and not propagator:
        raise ValueError("nothing to evolve: give an initial state or request the propagator")
    noise_diag = noise_samples = None
    if noise is not None:
        noise_diag = noise_diagonal(frame, noise.coupling)
        noise_samples = np.asarray(noise.samples, dtype=float)
        noise_amp = float(np.max(np.abs(noise_samples)) * np.max(np.abs(noise_diag)))

    def noise_at(t):
        i = np.floor(t / noise.dt_us).astype(int)
        if i.max() >= noise_samples.size:
            raise IndexError(f"evolution at t={float(t.max())} us outruns the noise trace")
        return noise_samples[i][:, None] * noise_diag[None, :]
    u_total = np.eye(frame.dim, dtype=complex) if propagator else None
    times, pops = [0.0], [np.abs(psi) ** 2] if psi is not None else None
    t0 = 0.0
    next_record = record_every_us or 0.0
    for pulse in pulses:
        gen = rotating_frame(frame, pulse, cutoff_mhz=cutoff_mhz, rwa=rwa)
        f_max = gen.max_frequency
        if noise_diag is not None:
            f_max = max(f_max, noise_amp)
        n_steps = max(1, math.ceil(pulse.duration_us * steps_per_cycle * max(f_max, 1e-12)))
        if n_steps > MAX_STEPS:
            raise StepSizeError(
                f"pulse {pulse.label or pulse.kind} needs {n_steps} steps (> {MAX_STEPS}); "
                "lower the cutoff or shorten the pulse"
            )
        dt = pulse.duration_us / n_steps

        def gen_fn(t, gen=gen):
            g = gen.at(t)
            if noise_diag is not None:
                idx = np.arange(frame.dim)
                g[:, idx, idx] += noise_at(t)
            return g

        chunk = max(1, CHUNK_ELEMENTS // frame.dim**2)
        for start in range(0, n_steps, chunk):
            k = np.arange(start, min(start + chunk, n_steps))
            t_mid = t0 + (k + 0.5) * dt
            us = _step_unitaries(gen_fn, t_mid, dt)
            if psi is not None:
                for j, u in enumerate(us):
                    psi = u @ psi
                    t_now = t0 + (k[j] + 1) * dt
                    if record_every_us is None or t_now >= next_record - 1e-12:
                        times.append(t_now)
                        pops.append(np.abs(psi) ** 2)
                        if record_every_us is not None:
                            next_record += record_every_us
            if u_total is not None:
                u_total = _chain(us) @ u_total
        t0 += pulse.duration_us
    return EvolutionResult(
        propagator=u_total,
        final_state=psi,
        times_us=np.array(times),
        populations=np.array(pops) if pops is not None else None,
        labels=[str(lab) for lab in frame.labels],
    )


def computational_indices(sys: SpinSystem, electrons: str | None = None) -> np.ndarray:
    """Labelled indices with every electron in state ``electrons`` (default all down)."""
    e = electrons or "d" * sys.n_electrons
    m = 2**sys.n_nuclei
    e_idx = SpinBasisLabel(tuple(e)).index()
    return e_idx * m + np.arange(m)


@dataclass(frozen=True)
class NuclearGate:
    unitary: np.ndarray
    leakage: float
    phases: np.ndarray


def extract_nuclear_gate(result: EvolutionResult | np.ndarray, sys: SpinSystem, max_leakage: float = 0.5) -> NuclearGate:
    """Restrict a propagator to the electrons-down nuclear subspace.

    ``leakage`` is ``1 - ||P U P||_F**2 / d``; ``phases`` are the diagonal
    phases relative to the first nuclear basis state.
    """
    u = result.propagator if isinstance(result, EvolutionResult) else np.asarray(result)
    if u is None:
        raise GateExtractionError("evolution did not record a propagator")
    idx = computational_indices(sys)
    block = u[np.ix_(idx, idx)]
    leakage = float(max(0.0, 1 - np.linalg.norm(block) ** 2 / idx.size))
    if leakage > max_leakage:
        raise GateExtractionError(f"leakage {leakage:.3g} exceeds {max_leakage}")
    diag = np.diag(block)
    ref = diag[0] / abs(diag[0]) if abs(diag[0]) > 1e-12 else 1.0
    phases = np.angle(diag / ref)
    return NuclearGate(block, leakage, phases)


def process_fidelity(u_ideal: np.ndarray, u: np.ndarray) -> float:
    """``|Tr(U_ideal^dag U)|**2 / d**2``, insensitive to global phase."""
    d = u_ideal.shape[0]
    return float(abs(np.trace(u_ideal.conj().T @ u)) ** 2 / d**2)


def evolve_lab(
    sys: SpinSystem | Eigenframe,
    pulses: PulseSequence | list[Pulse],
    initial=None,
    steps_per_cycle: int = STEPS_PER_CYCLE,
) -> EvolutionResult:
    """Reference integration of the full lab-frame Hamiltonian without approximations.

    The drive amplitude of each pulse is normalized exactly as in
    :func:`evolve`. The returned propagator and state are transformed to the
    same labelled interaction picture, so results compare one-to-one.
    """
    frame = sys if isinstance(sys, Eigenframe) else eigenframe(sys)
    v, e = frame.vectors, frame.energies
    h0 = v @ np.diag(e) @ v.conj().T
    psi = _initial_vector(frame, initial)
    u_lab = np.eye(frame.dim, dtype=complex)
    t0 = 0.0
    for pulse in pulses:
        gen = rotating_frame(frame, pulse, rwa=False)
        x_op = field_operator(frame.sys, pulse.kind, pulse.target)
        x_eig = v.conj().T @ x_op @ v
        b1 = pulse.rabi_mhz / (2 * abs(x_eig[gen.addressed]))
        f_max = float(e.max() - e.min()) + pulse.carrier_mhz + 2 * b1 * np.abs(x_eig).max()
        n_steps = max(1, math.ceil(pulse.duration_us * steps_per_cycle * f_max))
        if n_steps > MAX_STEPS:
            raise StepSizeError(f"lab-frame pulse needs {n_steps} steps (> {MAX_STEPS})")
        dt = pulse.duration_us / n_steps

        def gen_fn(t, pulse=pulse, b1=b1, x_op=x_op):
            c = 2 * b1 * np.cos(2 * math.pi * pulse.carrier_mhz * t + pulse.phase_rad)
            return h0[None] + c[:, None, None] * x_op[None]

        chunk = max(1, CHUNK_ELEMENTS // frame.dim**2)
        for start in range(0, n_steps, chunk):
            k = np.arange(start, min(start + chunk, n_steps))
            u_lab = _chain(_step_unitaries(gen_fn, t0 + (k + 0.5) * dt, dt)) @ u_lab
        t0 += pulse.duration_us
    rot = np.exp(2j * math.pi * e * t0)
    u_int = rot[:, None] * (v.conj().T @ u_lab @ v)
    final = u_int @ psi if psi is not None else None
    return EvolutionResult(
        propagator=u_int,
        final_state=final,
        times_us=np.array([0.0, t0]),
        populations=np.array([np.abs(psi) ** 2, np.abs(final) ** 2]) if psi is not None else None,
        labels=[str(lab) for lab in frame.labels],
    )
