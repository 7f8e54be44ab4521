"""Composite fidelity of compiled nuclear-spin gates.

Each conditional 2 pi pulse contributes three factors: crosstalk onto the
nearest line it is not meant to drive, the detuning error from the spread
of the lines it must cover, and electron dephasing during the pulse. Nuclear
dephasing acts once over the total gate time. Detunings come from the
closed-form spectrum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .compiler import GateSpec, flip_configurations
from .error_model import (
    MHZ_PER_MEV,
    ErrorBudget,
    crosstalk_error_esr_cz,
    decoherence_error,
    detuning_error,
    exchange_noise,
    nmr_rabi,
    t2_with_exchange_noise,
)
from .spectrum import FrequencyTable, esr_frequency_table
from .spins import SpinSystem


@dataclass(frozen=True)
class FidelityParams:
    """Drive and coherence parameters of a fidelity estimate.

    Attributes
    ----------
    esr_rabi_mhz : float
        ESR Rabi frequency; the 2 pi time is ``1 / esr_rabi_mhz``.
    nmr_b1_t : float
        NMR drive amplitude (hyperfine-enhanced Rabi frequency).
    t2n_us, t2e_us : float
        Nuclear and electron coherence times.
    delta_eps_mhz : float
        Charge-detuning fluctuation; zero disables exchange noise.
    t_c_mhz, u_mhz : float
        Tunnel coupling and charging energy of the exchange model.
    driven_electron : int or None
        Electron driven by inter-cluster pulses; ``None`` picks the one with
        the better worst case.
    crosstalk_lines : {"all", "driven"}
        Spectator lines counted for crosstalk, see :func:`pulse_errors`.
    """

    esr_rabi_mhz: float = 0.5
    nmr_b1_t: float = 1e-3
    t2n_us: float = 40_000.0
    t2e_us: float = 400.0
    delta_eps_mhz: float = 0.0
    t_c_mhz: float = 3600.0
    u_mhz: float = 30 * MHZ_PER_MEV
    driven_electron: int | None = None
    crosstalk_lines: str = "all"

    @property
    def tau_esr_us(self) -> float:
        return 1.0 / self.esr_rabi_mhz


def detuning_for_exchange(j_mhz: float, t_c_mhz: float, u_mhz: float) -> float:
    """Charge detuning ``eps >= 0`` at which the exchange equals ``j_mhz``.

    Exchange values below the symmetry-point value map to ``eps = 0``.
    """
    j0 = 4 * t_c_mhz**2 / u_mhz
    if j_mhz <= j0:
        return 0.0
    return math.sqrt(u_mhz**2 - 4 * t_c_mhz**2 * u_mhz / j_mhz)


def exchange_fluctuation(j_mhz: float, params: FidelityParams) -> float:
    """``delta_J`` at the working point that produces ``j_mhz``."""
    if params.delta_eps_mhz == 0.0 or j_mhz <= 0.0:
        return 0.0
    eps = detuning_for_exchange(j_mhz, params.t_c_mhz, params.u_mhz)
    return exchange_noise(params.t_c_mhz, params.u_mhz, eps, params.delta_eps_mhz)


@dataclass(frozen=True)
class PulseCondition:
    """One conditional 2 pi pulse: driven electron and required configuration.

    ``config`` has one letter per nucleus; ``"."`` marks nuclei the pulse
    does not distinguish.
    """

    electron: int
    config: str

    def matches(self, controls: str) -> bool:
        return all(c == "." or c == x for c, x in zip(self.config, controls))


def phase_conditions(gate: GateSpec, sys: SpinSystem, electron: int | None = None) -> list[PulseCondition]:
    """Conditions of the direct realization of ``gate``'s phase core."""
    scope = gate.validate_for(sys)
    configs = flip_configurations(gate, sys.n_nuclei)
    if scope == "intra":
        k = int(sys.nucleus_cluster[gate.qubits[0]])
        idx = set(sys.nuclear_indices(k))
        own = sorted({"".join(ch if i in idx else "." for i, ch in enumerate(c)) for c in configs})
        return [PulseCondition(k, c) for c in own]
    e = 0 if electron is None else electron
    return [PulseCondition(e, c) for c in configs]


def polarity_variants(conditions: list[PulseCondition], qubits) -> list[list[PulseCondition]]:
    """The same gate with every choice of which qubit values trigger the phase."""
    qubits = list(qubits)
    out = []
    for mask in range(2 ** len(qubits)):
        flip = {q for j, q in enumerate(qubits) if mask >> j & 1}
        variant = []
        for c in conditions:
            cfg = "".join(
                ({"U": "D", "D": "U"}[ch] if i in flip and ch != "." else ch) for i, ch in enumerate(c.config)
            )
            variant.append(PulseCondition(c.electron, cfg))
        out.append(variant)
    return out


@dataclass
class PulseErrors:
    e_ct: float
    e_detuning: float
    carrier_mhz: float
    nearest_mhz: float
    spread_mhz: float
    sensitivity: float = 0.0


def _populated_lines(table: FrequencyTable):
    return [e for e in table if not e.driven.startswith("n") and e.partner in (None, "d")]


def _slope_tables(sys: SpinSystem, h: float = 1e-3):
    """Spectra at ``J -/+ h`` and their J step, for numerical line slopes."""
    lo = esr_frequency_table(sys.replace(j_exchange=max(sys.j_exchange - h, 0.0)))
    hi = esr_frequency_table(sys.replace(j_exchange=sys.j_exchange + h))
    return lo, hi, sys.j_exchange + h - max(sys.j_exchange - h, 0.0)


def _line_slope(tables, electron: int, config: PulseCondition) -> float:
    """Mean ``|d f / d J|`` of the lines covered by ``config``."""
    lo, hi, step = tables
    slopes = []
    for a, b in zip(lo, hi):
        if a.driven == f"e{electron}" and a.partner == "d" and config.matches(a.controls):
            slopes.append(abs(b.freq_mhz - a.freq_mhz) / step)
    return float(np.mean(slopes)) if slopes else 0.0


def pulse_errors(table: FrequencyTable, cond: PulseCondition, rabi_mhz: float, crosstalk_lines: str = "all") -> PulseErrors:
    """Errors of one conditional 2 pi pulse.

    ``crosstalk_lines`` selects the spectator lines: ``"all"`` (both
    electrons, starting from the all-down electron state) or ``"driven"``
    (the driven electron's lines only, as for a locally addressed drive).
    """
    driven = f"e{cond.electron}"
    lines = _populated_lines(table)
    if crosstalk_lines == "driven":
        lines = [e for e in lines if e.driven == driven]
    elif crosstalk_lines != "all":
        raise ValueError("crosstalk_lines must be 'all' or 'driven'")
    hits = [e for e in lines if e.driven == driven and cond.matches(e.controls)]
    if not hits:
        raise ValueError(f"no line for condition {cond}")
    f = np.array([e.freq_mhz for e in hits])
    carrier = 0.5 * (f.min() + f.max())
    spread = 0.5 * (f.max() - f.min())
    hit_ids = {id(e) for e in hits}
    others = np.array([e.freq_mhz for e in lines if id(e) not in hit_ids])
    nearest = float(np.min(np.abs(others - carrier))) if others.size else math.inf
    e_ct = crosstalk_error_esr_cz(rabi_mhz, nearest) if math.isfinite(nearest) else 0.0
    e_det = detuning_error(rabi_mhz, spread) if spread > 0 else 0.0
    return PulseErrors(float(e_ct), float(e_det), float(carrier), nearest, float(spread))


def budget_for_conditions(
    sys: SpinSystem,
    conditions: list[PulseCondition],
    hadamard_targets,
    params: FidelityParams,
    table: FrequencyTable | None = None,
    slope_tables=None,
) -> ErrorBudget:
    table = table if table is not None else esr_frequency_table(sys)
    budget = ErrorBudget()
    rabi = params.esr_rabi_mhz
    tau = params.tau_esr_us
    dj = exchange_fluctuation(sys.j_exchange, params) if sys.n_electrons == 2 else 0.0
    budget.delta_j_mhz = dj
    t2e_eff = math.inf
    if dj > 0 and slope_tables is None:
        slope_tables = _slope_tables(sys)
    for cond in conditions:
        pe = pulse_errors(table, cond, rabi, params.crosstalk_lines)
        t2e = params.t2e_us
        if dj > 0:
            t2e = t2_with_exchange_noise(params.t2e_us, dj, _line_slope(slope_tables, cond.electron, cond))
        t2e_eff = min(t2e_eff, t2e)
        budget.add_esr(pe.e_ct, pe.e_detuning, decoherence_error(tau, t2e), tau)
    budget.t2e_effective_us = t2e_eff if math.isfinite(t2e_eff) else params.t2e_us
    for t in hadamard_targets:
        cluster = int(sys.nucleus_cluster[t])
        f_nmr = nmr_rabi(params.nmr_b1_t, sys.hyperfine[t], sys.cluster_field(cluster), sys.gamma_n)
        # H = Ry(pi/2) followed by Rx(pi): three quarters of a full NMR cycle, twice per gate
        for _ in range(2):
            budget.add_nmr(0.75 / f_nmr)
    budget.e_t2n = decoherence_error(budget.tau_total_us, params.t2n_us)
    return budget


def gate_fidelity(
    gate: GateSpec,
    sys: SpinSystem,
    params: FidelityParams | None = None,
    worst_case: bool = True,
    table: FrequencyTable | None = None,
) -> ErrorBudget:
    """Error budget of the direct realization of ``gate`` on ``sys``.

    With ``worst_case`` every polarity of the conditioning configuration is
    tried (which qubit values trigger the phase) and the lowest fidelity is
    returned. The budget's ``notes`` record the chosen electron and
    polarity.
    """
    params = params or FidelityParams()
    table = table if table is not None else esr_frequency_table(sys)
    scope = gate.validate_for(sys)
    if scope == "inter" and params.driven_electron is None:
        electrons = list(range(sys.n_electrons))
    else:
        electrons = [params.driven_electron or 0]
    slopes = _slope_tables(sys) if exchange_fluctuation(sys.j_exchange, params) > 0 and sys.n_electrons == 2 else None
    best: ErrorBudget | None = None
    for e in electrons:
        conds = phase_conditions(gate, sys, e)
        variants = polarity_variants(conds, gate.qubits) if worst_case else [conds]
        worst: ErrorBudget | None = None
        for i, v in enumerate(variants):
            b = budget_for_conditions(sys, v, gate.hadamard_targets, params, table, slopes)
            b.notes = {"electron": v[0].electron if v else None, "polarity": i}
            if worst is None or b.fidelity < worst.fidelity:
                worst = b
        if best is None or worst.fidelity > best.fidelity:
            best = worst
    return best
