"""XZZX toric codes on twisted tori and their placement on cluster chains.

Paulis are stored in symplectic form: a length-``2n`` 0/1 vector ``(x | z)``.
Data qubits sit on the edges of an ``l1 x l2`` square lattice whose
vertical boundary is shifted by one column, i.e. ``(x, y + l2) ~ (x + 1, y)``.
Starting from the toric code (X stars, Z plaquettes), a Hadamard on every
vertical edge turns both families into weight-4 checks with two X and two Z.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .compiler import GateSpec


class InfeasibleLayoutError(ValueError):
    """Raised when a code cannot be placed on the given cluster chain."""


# ------------------------------------------------------------ GF(2) helpers


def pauli_to_symplectic(p: str) -> np.ndarray:
    n = len(p)
    v = np.zeros(2 * n, dtype=np.uint8)
    for i, ch in enumerate(p):
        if ch in "XY":
            v[i] = 1
        if ch in "ZY":
            v[n + i] = 1
        if ch not in "IXYZ":
            raise ValueError(f"bad Pauli letter {ch!r}")
    return v


def symplectic_to_pauli(v: np.ndarray) -> str:
    n = v.size // 2
    table = {(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}
    return "".join(table[(int(v[i]), int(v[n + i]))] for i in range(n))


def symplectic_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Commutation matrix (0 commute, 1 anticommute) between rows of ``a`` and ``b``."""
    a = np.atleast_2d(a).astype(np.int64)
    b = np.atleast_2d(b).astype(np.int64)
    n = a.shape[1] // 2
    return ((a[:, :n] @ b[:, n:].T + a[:, n:] @ b[:, :n].T) % 2).astype(np.uint8)


def gf2_rref(m: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over GF(2) and pivot columns."""
    m = np.array(m, dtype=np.uint8) % 2
    rows, cols = m.shape
    pivots = []
    r = 0
    for c in range(cols):
        hit = np.nonzero(m[r:, c])[0]
        if hit.size == 0:
            continue
        p = r + hit[0]
        m[[r, p]] = m[[p, r]]
        others = np.nonzero(m[:, c])[0]
        others = others[others != r]
        m[others] ^= m[r]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    return m[:r], pivots


def gf2_rank(m: np.ndarray) -> int:
    if np.asarray(m).size == 0:
        return 0
    return len(gf2_rref(m)[1])


def gf2_nullspace(m: np.ndarray) -> np.ndarray:
    """Basis (rows) of ``{v : m v = 0}`` over GF(2)."""
    m = np.atleast_2d(np.asarray(m, dtype=np.uint8))
    cols = m.shape[1]
    r, pivots = gf2_rref(m)
    free = [c for c in range(cols) if c not in pivots]
    basis = []
    for f in free:
        v = np.zeros(cols, dtype=np.uint8)
        v[f] = 1
        for row, p in zip(r, pivots):
            if row[f]:
                v[p] = 1
        basis.append(v)
    return np.array(basis, dtype=np.uint8).reshape(len(basis), cols)


def in_span(rows: np.ndarray, v: np.ndarray) -> bool:
    return gf2_rank(np.vstack([rows, v])) == gf2_rank(rows)


# -------------------------------------------------------------------- codes


@dataclass
class StabilizerCode:
    """A stabilizer code given by Pauli-string checks.

    Attributes
    ----------
    n_qubits : int
    checks : list of str
    logicals : list of str
        ``[X1, Z1, X2, Z2, ...]`` symplectic pairs.
    assignment : dict
        Optional qubit -> (cluster, slot) placement.
    name : str
    """

    n_qubits: int
    checks: list[str]
    logicals: list[str] = field(default_factory=list)
    assignment: dict = field(default_factory=dict)
    name: str = ""

    def check_matrix(self) -> np.ndarray:
        if not self.checks:
            return np.zeros((0, 2 * self.n_qubits), dtype=np.uint8)
        return np.array([pauli_to_symplectic(c) for c in self.checks])

    def logical_matrix(self) -> np.ndarray:
        if not self.logicals:
            return np.zeros((0, 2 * self.n_qubits), dtype=np.uint8)
        return np.array([pauli_to_symplectic(c) for c in self.logicals])

    @property
    def k(self) -> int:
        return self.n_qubits - gf2_rank(self.check_matrix())

    def checks_commute(self) -> bool:
        s = self.check_matrix()
        return not symplectic_product(s, s).any()

    def support(self, check: int) -> list[int]:
        return [i for i, ch in enumerate(self.checks[check]) if ch != "I"]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n_qubits": self.n_qubits,
            "k": self.k,
            "checks": list(self.checks),
            "logicals": list(self.logicals),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def find_logicals(checks: np.ndarray) -> np.ndarray:
    """Symplectic pairs ``[X1, Z1, X2, Z2, ...]`` spanning normalizer / stabilizer."""
    n = checks.shape[1] // 2
    # v commutes with s  <=>  s_x . v_z + s_z . v_x = 0  <=>  (s_z | s_x) v = 0
    swapped = np.hstack([checks[:, n:], checks[:, :n]])
    normalizer = gf2_nullspace(swapped)
    reps = []
    span = checks.copy()
    for v in normalizer:
        if not in_span(span, v):
            reps.append(v)
            span = np.vstack([span, v])
    reps = [np.array(v) for v in reps]
    pairs = []
    while reps:
        a = reps.pop(0)
        partner = next((i for i, b in enumerate(reps) if symplectic_product(a, b)[0, 0]), None)
        if partner is None:
            raise RuntimeError("logical operators without a symplectic partner")
        b = reps.pop(partner)
        fixed = []
        for c in reps:
            # remove overlap with the new pair so later pairs stay orthogonal
            if symplectic_product(c, b)[0, 0]:
                c = c ^ a
            if symplectic_product(c, a)[0, 0]:
                c = c ^ b
            fixed.append(c)
        reps = fixed
        pairs.extend([a, b])
    return np.array(pairs, dtype=np.uint8).reshape(len(pairs), 2 * n)


def _order_xz(pairs: np.ndarray) -> np.ndarray:
    """Put the member with more X weight first in each pair."""
    out = pairs.copy()
    n = pairs.shape[1] // 2
    for i in range(0, len(out), 2):
        a, b = out[i], out[i + 1]
        if a[:n].sum() - a[n:].sum() < b[:n].sum() - b[n:].sum():
            out[i], out[i + 1] = b.copy(), a.copy()
    return out


def twisted_torus_edges(l1: int, l2: int) -> dict:
    """Edge indexing of the twisted torus.

    Horizontal edge of vertex ``(x, y)`` is ``h = y * l1 + x`` and the
    vertical one ``l1 * l2 + h``. Returns neighbour maps and edge lists.
    """
    n_v = l1 * l2

    def vid(x, y):
        # (x, y + l2) ~ (x + 1, y)
        shift, y = divmod(y, l2)
        return y * l1 + (x + shift) % l1

    right = {}
    up = {}
    for y in range(l2):
        for x in range(l1):
            v = vid(x, y)
            right[v] = vid(x + 1, y)
            up[v] = vid(x, y + 1)
    left = {r: v for v, r in right.items()}
    down = {u: v for v, u in up.items()}
    return {"n_vertices": n_v, "right": right, "up": up, "left": left, "down": down}


def build_xzzx_toric(l1: int, l2: int) -> StabilizerCode:
    """XZZX code with ``2 l1 l2`` qubits on the twisted ``l1 x l2`` torus."""
    if l1 < 2 or l2 < 2:
        raise ValueError("need l1, l2 >= 2")
    lat = twisted_torus_edges(l1, l2)
    n_v = lat["n_vertices"]
    n = 2 * n_v

    def h(v):
        return v

    def vt(v):
        return n_v + v

    checks = []
    for v in range(n_v):
        # star: X on horizontals, Z on verticals (after the vertical Hadamards)
        star = ["I"] * n
        for e in (h(v), h(lat["left"][v])):
            star[e] = "X"
        for e in (vt(v), vt(lat["down"][v])):
            star[e] = "Z"
        checks.append("".join(star))
    for v in range(n_v):
        plaq = ["I"] * n
        for e in (h(v), h(lat["up"][v])):
            plaq[e] = "Z"
        for e in (vt(v), vt(lat["right"][v])):
            plaq[e] = "X"
        checks.append("".join(plaq))
    code = StabilizerCode(n, checks, name=f"xzzx_twisted_{l1}x{l2}")
    logicals = _order_xz(find_logicals(code.check_matrix()))
    code.logicals = [symplectic_to_pauli(v) for v in logicals]
    return code


def _paulis_of_weight(n: int, w: int):
    """Symplectic vectors of all weight-``w`` Paulis, in chunks."""
    letters = np.array([[1, 0], [0, 1], [1, 1]], dtype=np.uint8)
    choices = np.array(list(itertools.product(range(3), repeat=w)), dtype=np.intp)
    for support in itertools.combinations(range(n), w):
        v = np.zeros((choices.shape[0], 2 * n), dtype=np.uint8)
        for j, q in enumerate(support):
            v[:, q] = letters[choices[:, j], 0]
            v[:, n + q] = letters[choices[:, j], 1]
        yield v


def code_distance(code: StabilizerCode, max_weight: int | None = None) -> int | None:
    """Smallest weight of a Pauli commuting with every check but acting on the logicals.

    Brute force; returns ``None`` if no logical of weight ``<= max_weight`` exists.
    """
    s = code.check_matrix()
    logic = code.logical_matrix()
    if logic.shape[0] == 0:
        logic = find_logicals(s)
    n = code.n_qubits
    max_weight = n if max_weight is None else max_weight
    for w in range(1, max_weight + 1):
        for chunk in _paulis_of_weight(n, w):
            ok = ~symplectic_product(chunk, s).any(axis=1)
            if not ok.any():
                continue
            if symplectic_product(chunk[ok], logic).any():
                return w
    return None


def check_types(code: StabilizerCode) -> np.ndarray:
    """(n_qubits, 2) counts of X-type and Z-type check positions per qubit."""
    counts = np.zeros((code.n_qubits, 2), dtype=int)
    for c in code.checks:
        for i, ch in enumerate(c):
            if ch == "X":
                counts[i, 0] += 1
            elif ch == "Z":
                counts[i, 1] += 1
    return counts


# --------------------------------------------------------------- placement


@dataclass
class ChainAssignment:
    """Placement of data and ancilla qubits on a chain of clusters.

    ``data[q]`` gives ``(cluster, slot)`` of data qubit ``q``.
    ``ancilla[c]`` gives the ``(cluster, slot)`` of the nucleus that
    measures check ``c``; with shared ancillas several checks use the same
    nucleus one after another (measure, reset, reuse). ``window[c]`` lists
    the clusters check ``c`` may touch.
    """

    chain: list[int]
    data: dict[int, tuple[int, int]]
    ancilla: dict[int, tuple[int, int]]
    window: dict[int, tuple[int, ...]]
    closed: bool = False

    def adjacent(self, i: int, j: int) -> bool:
        """Same or neighbouring clusters."""
        d = abs(i - j)
        if self.closed and len(self.chain) > 2:
            d = min(d, len(self.chain) - d)
        return d <= 1

    @property
    def ancilla_nodes(self) -> list[tuple[int, int]]:
        return sorted(set(self.ancilla.values()))

    def node_of_ancilla(self, check: int, n_data: int) -> int:
        return n_data + self.ancilla_nodes.index(self.ancilla[check])

    def place(self, node: int, n_data: int) -> tuple[int, int]:
        return self.data[node] if node < n_data else self.ancilla_nodes[node - n_data]

    def clusters_of(self, check: int, code: StabilizerCode) -> set[int]:
        qs = {self.data[q][0] for q in code.support(check)}
        qs.add(self.ancilla[check][0])
        return qs

    def to_dict(self) -> dict:
        return {
            "chain": list(self.chain),
            "data": {str(k): list(v) for k, v in self.data.items()},
            "ancilla": {str(k): list(v) for k, v in self.ancilla.items()},
            "window": {str(k): list(v) for k, v in self.window.items()},
            "closed": self.closed,
        }


def _first_unsatisfiable(code: StabilizerCode, chain: list[int], locality: str = "gate") -> int | None:
    """First check whose support plus ancilla exceeds the largest admissible block."""
    width = 2 if locality == "check" else 3
    cap = max(sum(chain[i : i + width]) for i in range(max(1, len(chain) - width + 1)))
    for c in range(len(code.checks)):
        if len(code.support(c)) + 1 > cap:
            return c
    return None


def assign_to_chain(
    code: StabilizerCode,
    chain: list[int],
    shared_ancillas: bool = True,
    locality: str = "gate",
    closed: bool = False,
    time_limit: float = 30.0,
) -> ChainAssignment:
    """Place the data qubits and the measuring ancillas on ``chain``.

    Parameters
    ----------
    shared_ancillas : bool
        Each cluster may reserve one ancilla nucleus that measures several
        checks in turn; otherwise every check gets its own ancilla.
    locality : {"gate", "check"}
        ``"gate"``: every data qubit of a check sits in the ancilla's cluster
        or a neighbouring one, so each ancilla-data gate is intra- or
        adjacent-cluster. ``"check"``: the whole check plus ancilla fits in
        one cluster or two neighbouring clusters.
    closed : bool
        Treat the chain as a ring, the last cluster neighbouring the first.

    Solved as a 0/1 program preferring checks confined to few clusters,
    then few ancillas.
    """
    chain = [int(c) for c in chain]
    if not chain or min(chain) < 1:
        raise ValueError("chain must list positive cluster sizes")
    if locality not in ("gate", "check"):
        raise ValueError("locality must be 'gate' or 'check'")
    n_d, n_c = code.n_qubits, len(code.checks)
    n_cl = len(chain)
    need = n_d + (1 if shared_ancillas and n_c else n_c)
    if need > sum(chain):
        raise InfeasibleLayoutError(
            f"{n_d} data qubits and their ancillas exceed chain capacity {sum(chain)}"
            + _unsat_suffix(code, chain, locality)
        )
    bad = _first_unsatisfiable(code, chain, locality)
    if bad is not None:
        raise InfeasibleLayoutError(f"check {bad} ({code.checks[bad]}) cannot fit around one ancilla cluster")

    def neighbours(k):
        if closed and n_cl > 2:
            return [(k - 1) % n_cl, k, (k + 1) % n_cl]
        return [j for j in (k - 1, k, k + 1) if 0 <= j < n_cl]

    if locality == "check":
        pairs = range(n_cl if closed and n_cl > 2 else n_cl - 1)
        windows = [(c,) for c in range(n_cl)] + [(c, (c + 1) % n_cl) for c in pairs]
    else:
        # windows are indexed by the ancilla cluster
        windows = [tuple(sorted(neighbours(c))) for c in range(n_cl)]
    n_w = len(windows)
    # variables: x[q, k] data placement, y[c, w] check window, a[c, k] ancilla cluster of check c,
    # u[k] shared ancilla nucleus reserved in cluster k
    nx = n_d * n_cl
    ny = n_c * n_w
    na = n_c * n_cl
    nvar = nx + ny + na + n_cl

    def xi(q, k):
        return q * n_cl + k

    def yi(c, w):
        return nx + c * n_w + w

    def ai(c, k):
        return nx + ny + c * n_cl + k

    def ui(k):
        return nx + ny + na + k

    rows, lo, hi = [], [], []

    def add(coeffs, lb, ub):
        r = np.zeros(nvar)
        for i, v in coeffs:
            r[i] += v
        rows.append(r)
        lo.append(lb)
        hi.append(ub)

    for q in range(n_d):
        add([(xi(q, k), 1) for k in range(n_cl)], 1, 1)
    for k in range(n_cl):
        if shared_ancillas:
            add([(xi(q, k), 1) for q in range(n_d)] + [(ui(k), 1)], 0, chain[k])
        else:
            add([(xi(q, k), 1) for q in range(n_d)] + [(ai(c, k), 1) for c in range(n_c)], 0, chain[k])
    for c in range(n_c):
        add([(yi(c, w), 1) for w in range(n_w)], 1, 1)
        add([(ai(c, k), 1) for k in range(n_cl)], 1, 1)
        for w, win in enumerate(windows):
            for q in code.support(c):
                add([(yi(c, w), 1)] + [(xi(q, k), -1) for k in win], -np.inf, 0)
        for k in range(n_cl):
            if locality == "check":
                hosts = [w for w, win in enumerate(windows) if k in win]
            else:
                hosts = [k]
            add([(ai(c, k), 1)] + [(yi(c, w), -1) for w in hosts], -np.inf, 0)
            if shared_ancillas:
                add([(ai(c, k), 1), (ui(k), -1)], -np.inf, 0)
    cost = np.zeros(nvar)
    for c in range(n_c):
        for w, win in enumerate(windows):
            cost[yi(c, w)] = len(win) - 1 if locality == "check" else 0.0
    for k in range(n_cl):
        cost[ui(k)] = 1.0 / (n_cl + 1)
    upper = np.ones(nvar)
    if not shared_ancillas:
        upper[nx + ny + na :] = 0
    res = milp(
        cost,
        constraints=LinearConstraint(np.array(rows), lo, hi),
        integrality=np.ones(nvar),
        bounds=Bounds(0, upper),
        options={"time_limit": time_limit},
    )
    if res.x is None:
        raise InfeasibleLayoutError(
            "no placement satisfies the adjacency constraints" + _unsat_suffix(code, chain, locality)
        )
    x = np.round(res.x).astype(int)
    slots = [0] * n_cl
    data, anc, window = {}, {}, {}
    for q in range(n_d):
        k = int(np.argmax(x[xi(q, 0) : xi(q, 0) + n_cl]))
        data[q] = (k, slots[k])
        slots[k] += 1
    shared_slot = {}
    for c in range(n_c):
        k = int(np.argmax(x[ai(c, 0) : ai(c, 0) + n_cl]))
        if shared_ancillas:
            if k not in shared_slot:
                shared_slot[k] = slots[k]
                slots[k] += 1
            anc[c] = (k, shared_slot[k])
        else:
            anc[c] = (k, slots[k])
            slots[k] += 1
        w = int(np.argmax(x[yi(c, 0) : yi(c, 0) + n_w]))
        window[c] = windows[w]
    out = ChainAssignment(chain, data, anc, window, closed)
    for k in range(n_cl):
        if slots[k] > chain[k]:
            raise RuntimeError(f"solver overfilled cluster {k}")
    for c in range(n_c):
        a_cl = anc[c][0]
        cl = out.clusters_of(c, code)
        if locality == "check":
            ok = all(out.adjacent(i, j) for i in cl for j in cl)
        else:
            ok = all(out.adjacent(a_cl, k) for k in cl)
        if not ok:
            raise RuntimeError(f"solver returned a non-local placement for check {c}")
    return out


def _unsat_suffix(code: StabilizerCode, chain: list[int], locality: str = "gate") -> str:
    bad = _first_unsatisfiable(code, chain, locality)
    return "" if bad is None else f"; first unsatisfiable check: {bad} ({code.checks[bad]})"


# --------------------------------------------------------------- schedules


@dataclass(frozen=True)
class ScheduledGate:
    """One entangling gate of a syndrome round.

    ``spec`` uses chain-global node ids: data qubit ``q`` is node ``q`` and
    the ``j``-th ancilla nucleus (see :attr:`ChainAssignment.ancilla_nodes`)
    is node ``n_data + j``. ``clusters`` are the hosting clusters.
    """

    check: int
    spec: GateSpec
    clusters: tuple[int, ...]


def syndrome_schedule(code: StabilizerCode, assignment: ChainAssignment, use_cxx: bool = True) -> list[ScheduledGate]:
    """Gates measuring every check onto its ancilla, check by check.

    The ancilla (prepared in ``|+>``) controls an X on every X position
    and a Z on every Z position of the check; Y positions get both. X
    positions are merged into CXX fan-outs when ``use_cxx`` is set, one per
    neighbouring cluster so every gate stays within two adjacent clusters.
    """
    n_d = code.n_qubits
    out: list[ScheduledGate] = []

    def cluster(node):
        return assignment.place(node, n_d)[0]

    for c, check in enumerate(code.checks):
        a = assignment.node_of_ancilla(c, n_d)
        xs = [q for q, ch in enumerate(check) if ch in "XY"]
        zs = [q for q, ch in enumerate(check) if ch in "ZY"]
        if xs:
            if use_cxx:
                # one fan-out per neighbouring cluster; targets beside the ancilla join the first group
                home = cluster(a)
                by_cluster: dict[int, list[int]] = {}
                for q in xs:
                    by_cluster.setdefault(cluster(q), []).append(q)
                own = by_cluster.pop(home, [])
                groups = [by_cluster[k] for k in sorted(by_cluster)] or [[]]
                groups[0] = own + groups[0]
            else:
                groups = [[q] for q in xs]
            for g in groups:
                kind = "CXX" if len(g) > 1 else "CNOT"
                spec = GateSpec(kind, (a,), tuple(g))
                out.append(ScheduledGate(c, spec, tuple(sorted({cluster(q) for q in (a, *g)}))))
        for q in zs:
            spec = GateSpec("CZ", (a,), (q,))
            out.append(ScheduledGate(c, spec, tuple(sorted({cluster(a), cluster(q)}))))
    return out


def schedule_is_local(schedule: list[ScheduledGate], assignment: ChainAssignment | None = None) -> bool:
    """Every gate touches one cluster or two neighbouring clusters."""
    for g in schedule:
        if len(g.clusters) > 2:
            return False
        if len(g.clusters) == 2:
            i, j = g.clusters
            ok = assignment.adjacent(i, j) if assignment is not None else abs(i - j) <= 1
            if not ok:
                return False
    return True


def local_gate(gate: ScheduledGate, assignment: ChainAssignment, n_data: int) -> tuple[tuple[int, ...], GateSpec]:
    """Re-index ``gate`` to the nuclei of its one- or two-cluster block.

    Returns the hosting clusters and a :class:`GateSpec` whose ids follow
    the canonical order of a spin system built from those clusters.
    """
    clusters = gate.clusters
    offsets = {}
    acc = 0
    for k in clusters:
        offsets[k] = acc
        acc += assignment.chain[k]

    def local(node):
        k, slot = assignment.place(node, n_data)
        return offsets[k] + slot

    s = gate.spec
    return clusters, GateSpec(s.kind, tuple(local(q) for q in s.controls), tuple(local(q) for q in s.targets), scheme=s.scheme)
