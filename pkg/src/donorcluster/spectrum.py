"""Analytic energy levels and conditional ESR/NMR transition frequencies.

Within the secular hyperfine approximation the electron Hamiltonian of a
fixed nuclear configuration is a two-spin exchange problem with closed-form
eigenvalues. Levels are labelled by the product state they connect to
adiabatically as J -> 0, so every transition carries a product-basis label.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .spins import SpinBasisLabel, SpinSystem, build_static_hamiltonian

DEGENERACY_TOL_MHZ = 1e-3

# electron configurations of a pair, in canonical index order
PAIR_CONFIGS = ("uu", "ud", "du", "dd")


def delta_a(values) -> float:
    """Minimum pairwise |A_i - A_j| over ``values`` (inf for fewer than two)."""
    values = np.sort(np.asarray(values, dtype=float))
    if values.size < 2:
        return math.inf
    return float(np.min(np.diff(values)))


def nuclear_signs(n_nuclei: int) -> np.ndarray:
    """``(2**n, n)`` array of nuclear spin signs, +1 for up, canonical order."""
    idx = np.arange(2**n_nuclei)[:, None]
    bits = (idx >> (n_nuclei - 1 - np.arange(n_nuclei))[None, :]) & 1
    return 1 - 2 * bits


def nuclear_label(signs) -> str:
    return "".join("U" if s > 0 else "D" for s in signs)


@dataclass(frozen=True)
class ConfigTerms:
    """Per-nuclear-configuration quantities entering the closed-form levels.

    ``a`` holds the signed hyperfine sum of each cluster, ``zeeman_n`` the
    nuclear Zeeman energy, ``delta`` the effective electron detuning that
    competes with exchange.
    """

    a: np.ndarray
    zeeman_n: np.ndarray
    delta: np.ndarray | None


def config_terms(sys: SpinSystem) -> ConfigTerms:
    signs = nuclear_signs(sys.n_nuclei)
    fields = np.array([sys.cluster_field(k) for k in sys.nucleus_cluster])
    a = np.stack(
        [signs[:, sys.nucleus_cluster == k] @ np.array(c.hyperfine) for k, c in enumerate(sys.clusters)],
        axis=1,
    )
    zeeman_n = signs @ (sys.gamma_n * fields) / 2
    delta = None
    if sys.n_electrons == 2:
        b_l, b_r = sys.cluster_field(0), sys.cluster_field(1)
        delta = 2 * sys.gamma_e * (b_l - b_r) + a[:, 0] - a[:, 1]
    return ConfigTerms(a=a, zeeman_n=zeeman_n, delta=delta)


def analytic_energies(sys: SpinSystem) -> np.ndarray:
    """Closed-form energies of the electron manifold per nuclear configuration.

    Returns
    -------
    ndarray
        Shape ``(2**n_nuclei, 4)`` with columns ordered uu, ud, du, dd for a
        pair, or ``(2**n_nuclei, 2)`` ordered u, d for a single cluster. The
        two mixed levels are ordered so that each tends to the product state
        of the same name as J -> 0.
    """
    t = config_terms(sys)
    ge = sys.gamma_e
    if sys.n_electrons == 1:
        half = ge * sys.b0 / 2 + t.a[:, 0] / 4
        return np.stack([t.zeeman_n + half, t.zeeman_n - half], axis=1)
    j = sys.j_exchange
    b_sum = sys.cluster_field(0) + sys.cluster_field(1)
    a_sum = t.a[:, 0] + t.a[:, 1]
    e_uu = ge * b_sum / 2 + t.zeeman_n + a_sum / 4 + j / 4
    e_dd = -ge * b_sum / 2 + t.zeeman_n - a_sum / 4 + j / 4
    centre = t.zeeman_n - j / 4
    root = np.sqrt(t.delta**2 + 4 * j**2) / 4
    branch = np.where(t.delta >= 0, 1.0, -1.0)
    e_ud = centre + branch * root
    e_du = centre - branch * root
    return np.stack([e_uu, e_ud, e_du, e_dd], axis=1)


def analytic_levels(sys: SpinSystem) -> np.ndarray:
    """Closed-form energy of every product label, in canonical index order."""
    e = analytic_energies(sys)
    # full index = electron_index * 2**n_nuclei + nuclear_index
    return e.T.reshape(-1)


def secular_eigenvectors(sys: SpinSystem) -> np.ndarray:
    """Eigenvectors of the secular Hamiltonian, column ``k`` labelled by product ``k``.

    Only the mixed electron pair (ud, du) of each nuclear configuration is
    rotated by exchange; every other column is a basis vector.
    """
    v = np.eye(sys.dim)
    if sys.n_electrons == 1 or sys.j_exchange == 0.0:
        return v
    t = config_terms(sys)
    m = 2**sys.n_nuclei
    j = sys.j_exchange
    for n, d in enumerate(t.delta):
        ud, du = 1 * m + n, 2 * m + n
        # mixed block [[d/4 - j/4, j/2], [j/2, -d/4 - j/4]] up to the centre
        theta = 0.5 * math.atan2(2 * j, d)
        c, s = math.cos(theta), math.sin(theta)
        upper, lower = (c, s), (-s, c)
        if d < 0:
            # the level continuous with ud is the lower one
            upper, lower = lower, upper
        v[ud, ud], v[du, ud] = upper
        v[ud, du], v[du, du] = lower
    return v


def label_eigenstates(vectors: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Permutation assigning each reference column to the best-overlapping eigenvector.

    Returns ``perm`` such that ``vectors[:, perm[k]]`` is labelled ``k``.
    """
    overlap = np.abs(reference.conj().T @ vectors) ** 2
    rows, cols = linear_sum_assignment(-overlap)
    perm = np.empty(reference.shape[1], dtype=int)
    perm[rows] = cols
    return perm


def exact_levels(sys: SpinSystem, hyperfine: str = "full") -> tuple[np.ndarray, np.ndarray]:
    """Numerically exact levels labelled by product state.

    Returns
    -------
    energies : ndarray
        ``energies[k]`` is the eigenvalue adiabatically labelled by product ``k``.
    vectors : ndarray
        Matching eigenvectors as columns.
    """
    h = build_static_hamiltonian(sys, hyperfine=hyperfine)
    w, v = np.linalg.eigh(h)
    perm = label_eigenstates(v, secular_eigenvectors(sys))
    return w[perm], v[:, perm]


@dataclass(frozen=True)
class FrequencyEntry:
    """One conditional transition.

    Attributes
    ----------
    driven : str
        ``"e0"``/``"e1"`` for electrons, ``"n<i>"`` for nuclei.
    controls : str
        Configuration of the conditioning nuclei ('U'/'D' per nucleus).
    partner : str or None
        State of the other electron ('u'/'d') for a pair, the electron
        state for NMR lines, ``None`` for single-cluster ESR.
    branch : str or None
        Sign of the exchange square-root term in the frequency.
    freq_mhz : float
        Positive transition frequency.
    upper, lower : int
        Product-basis indices of the two levels.
    signature : tuple or None
        Signed hyperfine sums of the configuration; identical signatures
        give identical frequencies for every J.
    """

    driven: str
    controls: str
    partner: str | None
    branch: str | None
    freq_mhz: float
    upper: int
    lower: int
    signature: tuple | None = None


@dataclass(frozen=True)
class FrequencyTable:
    entries: tuple[FrequencyEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def select(self, driven=None, partner=None, controls=None) -> list[FrequencyEntry]:
        out = []
        for e in self.entries:
            if driven is not None and e.driven != driven:
                continue
            if partner is not None and e.partner != partner:
                continue
            if controls is not None and e.controls != controls:
                continue
            out.append(e)
        return out

    def find(self, driven, controls, partner=None) -> FrequencyEntry:
        hits = self.select(driven=driven, partner=partner, controls=controls)
        if len(hits) != 1:
            raise KeyError(f"no unique entry for {driven} {controls} {partner}: {len(hits)} found")
        return hits[0]

    def frequencies(self) -> np.ndarray:
        return np.array([e.freq_mhz for e in self.entries])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["driven", "controls", "partner_electron", "branch", "freq_mhz"])
        for e in self.entries:
            writer.writerow([e.driven, e.controls, e.partner or "", e.branch or "", repr(e.freq_mhz)])
        return buf.getvalue()


def _esr_entries(sys: SpinSystem, levels: np.ndarray) -> list[FrequencyEntry]:
    m = 2**sys.n_nuclei
    signs = nuclear_signs(sys.n_nuclei)
    t = config_terms(sys)
    entries = []
    if sys.n_electrons == 1:
        for n in range(m):
            up, down = n, m + n
            entries.append(
                FrequencyEntry(
                    "e0", nuclear_label(signs[n]), None, None,
                    float(abs(levels[up] - levels[down])), up, down, (float(t.a[n, 0]),),
                )
            )
        return entries
    for k in (0, 1):
        for partner in ("d", "u"):
            for n in range(m):
                pair_up = ("u" + partner) if k == 0 else (partner + "u")
                pair_down = ("d" + partner) if k == 0 else (partner + "d")
                up = PAIR_CONFIGS.index(pair_up) * m + n
                down = PAIR_CONFIGS.index(pair_down) * m + n
                branch_sign = 1.0 if t.delta[n] >= 0 else -1.0
                # the root enters with +branch via ud and with -branch via du
                coeff = branch_sign if k == 0 else -branch_sign
                entries.append(
                    FrequencyEntry(
                        f"e{k}", nuclear_label(signs[n]), partner,
                        "plus" if coeff > 0 else "minus",
                        float(abs(levels[up] - levels[down])), up, down,
                        (float(t.a[n, 0]), float(t.a[n, 1])),
                    )
                )
    return entries


def _table_from_levels(sys: SpinSystem, levels: np.ndarray) -> FrequencyTable:
    return FrequencyTable(tuple(_esr_entries(sys, levels)))


def esr_frequency_table(sys: SpinSystem) -> FrequencyTable:
    """Closed-form conditional ESR lines for every nuclear and partner configuration."""
    return _table_from_levels(sys, analytic_levels(sys))


def exact_esr_frequency_table(sys: SpinSystem, hyperfine: str = "full") -> FrequencyTable:
    """Same lines as :func:`esr_frequency_table` from exact diagonalization."""
    levels, _ = exact_levels(sys, hyperfine=hyperfine)
    return _table_from_levels(sys, levels)


def _electron_index(sys: SpinSystem, electron: str) -> int:
    if electron not in ("down", "up"):
        raise ValueError(f"electron must be 'down' or 'up', got {electron!r}")
    if sys.n_electrons == 1:
        return 1 if electron == "down" else 0
    return PAIR_CONFIGS.index("dd" if electron == "down" else "uu")


def _nmr_entries(sys: SpinSystem, levels: np.ndarray, electron: str) -> list[FrequencyEntry]:
    m = 2**sys.n_nuclei
    e_idx = _electron_index(sys, electron)
    signs = nuclear_signs(sys.n_nuclei)
    entries = []
    for i in range(sys.n_nuclei):
        bit = 1 << (sys.n_nuclei - 1 - i)
        for n in range(m):
            if n & bit:
                continue
            a, b = e_idx * m + n, e_idx * m + (n | bit)
            upper, lower = (a, b) if levels[a] >= levels[b] else (b, a)
            others = np.delete(signs[n], i)
            entries.append(
                FrequencyEntry(
                    f"n{i}", nuclear_label(others), electron[0], None,
                    float(levels[upper] - levels[lower]), upper, lower, None,
                )
            )
    return entries


def nmr_frequency_table(sys: SpinSystem, electron: str = "down", exact: bool = False) -> FrequencyTable:
    """NMR lines of every nucleus for every configuration of the other nuclei.

    ``controls`` lists the other nuclei in canonical order. With ``exact`` the
    levels come from diagonalizing the full Hamiltonian.
    """
    levels = exact_levels(sys)[0] if exact else analytic_levels(sys)
    return FrequencyTable(tuple(_nmr_entries(sys, levels, electron)))


def nmr_frequency(sys: SpinSystem, nucleus_index: int, electron: str = "down") -> float:
    """Closed-form NMR frequency of one nucleus with all electrons polarized.

    With the electron down the line sits at ``|gamma_n B - A/2|``; with the
    electron up at ``|gamma_n B + A/2|``. ``B`` includes the gradient offset
    for nuclei of the second cluster.
    """
    if not 0 <= nucleus_index < sys.n_nuclei:
        raise IndexError(f"nucleus index {nucleus_index} out of range")
    a = sys.hyperfine[nucleus_index]
    b = sys.cluster_field(int(sys.nucleus_cluster[nucleus_index]))
    s = -1.0 if electron == "down" else 1.0
    _electron_index(sys, electron)
    return float(abs(sys.gamma_n * b + s * a / 2))


def _accidental(a: FrequencyEntry, b: FrequencyEntry, tol: float) -> bool:
    if a.driven != b.driven or a.partner != b.partner:
        return False
    if a.signature is None or b.signature is None:
        return abs(a.freq_mhz - b.freq_mhz) < tol
    return bool(np.all(np.abs(np.subtract(a.signature, b.signature)) < tol))


def min_detuning(
    table: FrequencyTable | list[FrequencyEntry],
    target: FrequencyEntry,
    exclude_degenerate: bool = False,
    tol: float = DEGENERACY_TOL_MHZ,
) -> float:
    """Smallest |f_target - f_other| over the other entries of ``table``.

    With ``exclude_degenerate`` entries that coincide with the target for a
    structural reason unrelated to addressability (same driven spin and
    partner, identical hyperfine sums) are skipped.
    """
    entries = list(table)
    best = math.inf
    for e in entries:
        if e is target or e == target:
            continue
        if exclude_degenerate and _accidental(target, e, tol):
            continue
        best = min(best, abs(e.freq_mhz - target.freq_mhz))
    return best


def configuration_groups(sys: SpinSystem, k: int) -> dict[str, list[int]]:
    """Map each configuration of cluster ``k`` nuclei to full nuclear indices."""
    idx = sys.nuclear_indices(k)
    signs = nuclear_signs(sys.n_nuclei)
    groups: dict[str, list[int]] = {}
    for n, row in enumerate(signs):
        groups.setdefault(nuclear_label(row[idx]), []).append(n)
    return groups


def all_configurations(n: int) -> list[str]:
    return ["".join(p) for p in itertools.product("UD", repeat=n)]


def label_of(sys: SpinSystem, index: int) -> str:
    return str(SpinBasisLabel.from_index(index, sys.n_electrons, sys.n_nuclei))
