"""1/f noise traces and the qubit detunings they induce.

A white Gaussian sequence is Fourier transformed, every positive-frequency
bin ``n`` is weighted by ``sqrt(c_eps**2 N / n)`` so the power spectral
density falls as 1/f, and the result is transformed back. The DC bin is
zeroed. Using the real FFT pair keeps the output exactly real.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

MIN_SAMPLES = 64


@dataclass(frozen=True)
class NoiseTrace:
    """A sampled 1/f sequence and its generation parameters.

    Attributes
    ----------
    samples : ndarray
        Dimensionless noise values, one per time step.
    dt_us : float
        Sample spacing.
    c_eps : float
        Spectral amplitude coefficient.
    coupling : tuple of float
        ``eps_j`` (MHz per unit noise) for each spin in canonical order.
    seed : int or None
    """

    samples: np.ndarray
    dt_us: float
    c_eps: float
    coupling: tuple[float, ...] = ()
    seed: int | None = None

    def __len__(self) -> int:
        return self.samples.size

    def with_coupling(self, coupling) -> "NoiseTrace":
        return NoiseTrace(self.samples, self.dt_us, self.c_eps, tuple(float(c) for c in coupling), self.seed)

    def params(self) -> dict:
        return {
            "n": int(self.samples.size),
            "dt_us": self.dt_us,
            "c_eps": self.c_eps,
            "coupling_mhz": list(self.coupling),
            "seed": self.seed,
        }

    def to_csv(self) -> str:
        lines = ["index,value"]
        lines += [f"{i},{float(v)!r}" for i, v in enumerate(self.samples)]
        return "\n".join(lines) + "\n"

    def header_json(self) -> str:
        return json.dumps(self.params(), indent=2, sort_keys=True)


def _is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def one_over_f_scaling(n: int, c_eps: float) -> np.ndarray:
    """Amplitude weights ``sqrt(S_k)`` of the rfft bins, ``S_k = c_eps**2 N / k``."""
    k = np.arange(n // 2 + 1, dtype=float)
    weights = np.zeros_like(k)
    weights[1:] = np.sqrt(c_eps**2 * n / k[1:])
    return weights


def generate_one_over_f(
    n: int,
    dt_us: float = 1.0,
    c_eps: float = 1.0,
    seed: int | None = None,
    coupling=(),
) -> NoiseTrace:
    """Draw a real 1/f sequence of length ``n``.

    Parameters
    ----------
    n : int
        Number of samples, a power of two no smaller than 64.
    dt_us : float
        Sample spacing in microseconds.
    c_eps : float
        Amplitude coefficient; samples scale linearly with it.
    seed : int, optional
        Seed of the white sequence; equal seeds give identical traces.
    coupling : sequence of float
        Per-spin coupling ``eps_j`` carried along for later detuning lookups.
    """
    if not isinstance(n, (int, np.integer)) or not _is_power_of_two(int(n)) or n < MIN_SAMPLES:
        raise ValueError(f"n must be a power of two >= {MIN_SAMPLES}, got {n}")
    if dt_us <= 0:
        raise ValueError("dt_us must be positive")
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(int(n))
    spectrum = np.fft.rfft(white) * one_over_f_scaling(int(n), c_eps)
    samples = np.fft.irfft(spectrum, n=int(n))
    return NoiseTrace(samples, float(dt_us), float(c_eps), tuple(float(c) for c in coupling), seed)


def detuning_of(trace: NoiseTrace, qubit: int, sample: int) -> float:
    """Frequency shift ``eps_j * delta_i`` (MHz) of spin ``qubit`` at sample ``sample``."""
    if not 0 <= sample < trace.samples.size:
        raise IndexError(f"sample {sample} out of range for a trace of {trace.samples.size}")
    if not 0 <= qubit < len(trace.coupling):
        raise IndexError(f"qubit {qubit} has no coupling in this trace")
    return float(trace.coupling[qubit] * trace.samples[sample])


def periodogram(samples: np.ndarray, dt_us: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """One-sided periodogram excluding DC: (frequencies in MHz, power)."""
    n = samples.size
    spec = np.abs(np.fft.rfft(samples)) ** 2 / n
    freqs = np.fft.rfftfreq(n, d=dt_us)
    return freqs[1:], spec[1:]


def spectral_slope(samples: np.ndarray, decades: float = 2.0) -> float:
    """Least-squares log-log slope of the periodogram over the central ``decades``.

    The window is centred geometrically between the lowest and the Nyquist
    bin.
    """
    f, p = periodogram(np.asarray(samples, dtype=float))
    lo, hi = np.log10(f[0]), np.log10(f[-1])
    mid = 0.5 * (lo + hi)
    sel = (np.log10(f) >= mid - decades / 2) & (np.log10(f) <= mid + decades / 2)
    slope, _ = np.polyfit(np.log10(f[sel]), np.log10(p[sel]), 1)
    return float(slope)


def ensemble_slope(n: int = 4096, seeds=range(100), c_eps: float = 1.0, decades: float = 2.0) -> float:
    """Slope of the seed-averaged periodogram over the central decades."""
    acc = None
    for seed in seeds:
        trace = generate_one_over_f(n, c_eps=c_eps, seed=seed)
        f, p = periodogram(trace.samples)
        acc = p if acc is None else acc + p
    lo, hi = np.log10(f[0]), np.log10(f[-1])
    mid = 0.5 * (lo + hi)
    sel = (np.log10(f) >= mid - decades / 2) & (np.log10(f) <= mid + decades / 2)
    slope, _ = np.polyfit(np.log10(f[sel]), np.log10(acc[sel]), 1)
    return float(slope)


@dataclass
class RamseyDecay:
    times_us: np.ndarray
    coherence: np.ndarray
    t2_star_us: float = field(default=math.nan)


def ramsey_decay(
    c_eps: float,
    coupling_mhz: float = 1.0,
    n: int = 4096,
    dt_us: float = 0.1,
    realizations: int = 200,
    seed: int = 0,
    window: int | None = None,
) -> RamseyDecay:
    """Free-induction decay of one spin under sampled 1/f detunings.

    Each realization accumulates the phase ``2 pi sum(delta) dt`` over the
    first ``window`` samples (default ``n // 8``; the generated traces are
    periodic with zero mean, so the window must be short against the trace)
    and the ensemble coherence ``|<exp(i phi)>|`` is recorded; ``T2*`` is the first
    1/e crossing.
    """
    window = n // 8 if window is None else window
    seeds = np.random.SeedSequence(seed).spawn(realizations)
    phases = np.empty((realizations, window))
    for r, ss in enumerate(seeds):
        trace = generate_one_over_f(n, dt_us, c_eps, seed=int(ss.generate_state(1)[0]))
        phases[r] = 2 * math.pi * np.cumsum(coupling_mhz * trace.samples[:window]) * dt_us
    coherence = np.abs(np.mean(np.exp(1j * phases), axis=0))
    times = dt_us * np.arange(1, window + 1)
    t2 = math.nan
    below = np.nonzero(coherence < math.exp(-1))[0]
    if below.size and below[0] > 0:
        # linear interpolation of the first 1/e crossing
        i = below[0]
        c0, c1 = coherence[i - 1], coherence[i]
        t2 = float(times[i - 1] + (c0 - math.exp(-1)) / (c0 - c1) * dt_us)
    return RamseyDecay(times, coherence, t2)
