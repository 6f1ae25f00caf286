"""Heavy-atom molecular graphs: records, perception rules, feature coding.

The perception rules implemented here are deliberately small and documented
(docs/features.md):

- ring membership: an atom/bond is "in a ring" iff the bond is not a bridge;
- aromaticity: only what the input notation declares (lowercase SMILES atoms,
  SDF bond type 4); no Kekule perception;
- implicit hydrogens: smallest standard valence that fits the bond-order sum
  (aromatic bonds count 1.5 and the sum is rounded up; aromatic atoms never
  overflow, they just get 0);
- conjugation: aromatic bonds are conjugated; a multiple bond is conjugated
  when a single/aromatic bond at either end reaches a pi system or lone-pair
  donor; a single bond is conjugated when one end carries a pi bond and the
  other carries a pi bond or a lone pair;
- hybridization: aromatic -> sp2; triple or two doubles -> sp; one double ->
  sp2; otherwise sp3.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AtomRecord", "BondRecord", "MolGraph2D", "MolError",
    "build_graph", "atom_features", "bond_features",
    "encode_atom_features", "encode_bond_features",
    "ATOM_FIELD_SIZES", "BOND_FIELD_SIZES",
    "canonical_key", "formula",
]


class MolError(ValueError):
    """Invalid molecular input or graph construction request."""


class ValenceError(MolError):
    """Bond-order sum exceeds every allowed valence; carries the atom position."""

    def __init__(self, message: str, position: int):
        super().__init__(message)
        self.position = position


ELEMENTS = {
    "H": 1, "He": 2, "Li": 3, "Be": 4, "B": 5, "C": 6, "N": 7, "O": 8,
    "F": 9, "Ne": 10, "Na": 11, "Mg": 12, "Al": 13, "Si": 14, "P": 15,
    "S": 16, "Cl": 17, "Ar": 18, "K": 19, "Ca": 20, "Sc": 21, "Ti": 22,
    "V": 23, "Cr": 24, "Mn": 25, "Fe": 26, "Co": 27, "Ni": 28, "Cu": 29,
    "Zn": 30, "Ga": 31, "Ge": 32, "As": 33, "Se": 34, "Br": 35, "Kr": 36,
    "Rb": 37, "Sr": 38, "Ag": 47, "Cd": 48, "In": 49, "Sn": 50, "Sb": 51,
    "Te": 52, "I": 53, "Xe": 54, "Cs": 55, "Ba": 56, "Pt": 78, "Au": 79,
    "Hg": 80, "Tl": 81, "Pb": 82, "Bi": 83,
}

# Standard valence lists for implicit-hydrogen assignment (neutral atoms).
VALENCES = {
    "B": (3,), "C": (4,), "N": (3, 5), "O": (2,), "P": (3, 5),
    "S": (2, 4, 6), "F": (1,), "Cl": (1,), "Br": (1,), "I": (1,),
}


@dataclass(frozen=True)
class AtomRecord:
    element: str
    aromatic: bool
    charge: int
    chirality: int          # 0 none, 1 @, 2 @@
    n_hydrogens: int
    degree: int             # heavy-atom degree
    in_ring: bool
    hybridization: int      # 0 other, 1 sp, 2 sp2, 3 sp3
    radical_electrons: int = 0


@dataclass(frozen=True)
class BondRecord:
    u: int
    v: int
    order: int              # 1, 2, 3 (multiplicity; 1 for aromatic)
    aromatic: bool
    stereo: int             # 0 none (the supported input subset carries none)
    conjugated: bool
    in_ring: bool

    def order_code(self) -> int:
        """Feature code: 0 single, 1 double, 2 triple, 3 aromatic."""
        return 3 if self.aromatic else self.order - 1


@dataclass
class MolGraph2D:
    """Immutable heavy-atom graph with precomputed feature matrices."""

    atoms: list[AtomRecord]
    bonds: list[BondRecord]
    node_features: np.ndarray          # |V| x 9 int
    edge_features: np.ndarray          # |E| x 3 int
    _adj: list[list[tuple[int, int]]] = field(repr=False, default_factory=list)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    def neighbors(self, i: int) -> list[tuple[int, int]]:
        """(neighbor atom index, bond index) pairs for atom i."""
        return self._adj[i]


# -- construction -------------------------------------------------------------

def _find_ring_bonds(n_atoms: int, bond_pairs: list[tuple[int, int]]) -> set[int]:
    """Indices of bonds on cycles (non-bridges), via iterative Tarjan."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n_atoms)]
    for bi, (u, v) in enumerate(bond_pairs):
        adj[u].append((v, bi))
        adj[v].append((u, bi))
    disc = [-1] * n_atoms
    low = [0] * n_atoms
    bridges: set[int] = set()
    timer = 0
    for root in range(n_atoms):
        if disc[root] != -1:
            continue
        stack: list[tuple[int, int, int]] = [(root, -1, 0)]
        while stack:
            node, in_bond, ptr = stack.pop()
            if ptr == 0:
                disc[node] = low[node] = timer
                timer += 1
            if ptr < len(adj[node]):
                stack.append((node, in_bond, ptr + 1))
                nxt, bi = adj[node][ptr]
                if bi == in_bond:
                    continue
                if disc[nxt] == -1:
                    stack.append((nxt, bi, 0))
                else:
                    low[node] = min(low[node], disc[nxt])
            else:
                if in_bond != -1:
                    parent = bond_pairs[in_bond][0] if bond_pairs[in_bond][1] == node \
                        else bond_pairs[in_bond][1]
                    low[parent] = min(low[parent], low[node])
                    if low[node] > disc[parent]:
                        bridges.add(in_bond)
    return {bi for bi in range(len(bond_pairs))} - bridges


def _implicit_hydrogens(element: str, aromatic: bool, charge: int,
                        bond_sum: float) -> tuple[int, bool]:
    """(hydrogen count, overflowed). Aromatic atoms saturate instead of overflow."""
    valences = VALENCES.get(element)
    if valences is None:
        return 0, False
    if charge != 0:
        # charge-adjusted lists; only the common drug-like cases are covered
        if element in ("N", "P") and charge == 1:
            valences = (4,)
        elif element in ("O", "S") and charge == 1:
            valences = (3,)
        elif charge < 0:
            valences = tuple(max(v + charge, 0) for v in valences)
        else:
            return 0, False
    need = int(np.ceil(bond_sum - 1e-9))
    if aromatic:
        return max(valences[0] - need, 0), False
    for v in valences:
        if v >= need:
            return v - need, False
    return 0, True


def build_graph(raw_atoms: list[dict], raw_bonds: list[dict],
                offsets: list[int] | None = None) -> MolGraph2D:
    """Finalize a heavy-atom graph from raw parses.

    raw_atoms entries: element, aromatic, charge, chirality, explicit_h
    (int or None to derive from valence). raw_bonds entries: u, v, symbol
    (one of '-', '=', '#', ':', None for "unspecified"). `offsets` are
    per-atom source positions used in error messages.
    """
    n = len(raw_atoms)
    seen_pairs: set[tuple[int, int]] = set()
    pairs: list[tuple[int, int]] = []
    for b in raw_bonds:
        u, v = b["u"], b["v"]
        if not (0 <= u < n and 0 <= v < n):
            raise MolError(f"bond ({u},{v}) references a missing atom")
        if u == v:
            raise MolError(f"self-loop bond on atom {u}")
        key = (min(u, v), max(u, v))
        if key in seen_pairs:
            raise MolError(f"duplicate bond between atoms {u} and {v}")
        seen_pairs.add(key)
        pairs.append((u, v))

    ring_bonds = _find_ring_bonds(n, pairs)
    ring_atoms = {a for bi in ring_bonds for a in pairs[bi]}

    # resolve bond orders; unspecified bonds between aromatic atoms are
    # aromatic only when the bond lies on a ring
    orders: list[int] = []
    aromatic_bonds: list[bool] = []
    for bi, b in enumerate(raw_bonds):
        sym = b["symbol"]
        if sym is None:
            both_aromatic = (raw_atoms[b["u"]]["aromatic"]
                             and raw_atoms[b["v"]]["aromatic"])
            arom = both_aromatic and bi in ring_bonds
            orders.append(1)
            aromatic_bonds.append(arom)
        elif sym == ":":
            orders.append(1)
            aromatic_bonds.append(True)
        else:
            orders.append({"-": 1, "=": 2, "#": 3}[sym])
            aromatic_bonds.append(False)

    # per-atom bond-order sums (aromatic counts 1.5) and degrees
    bond_sum = [0.0] * n
    degree = [0] * n
    for bi, (u, v) in enumerate(pairs):
        contrib = 1.5 if aromatic_bonds[bi] else float(orders[bi])
        bond_sum[u] += contrib
        bond_sum[v] += contrib
        degree[u] += 1
        degree[v] += 1

    hydrogens: list[int] = []
    for i, a in enumerate(raw_atoms):
        if a["explicit_h"] is not None:
            hydrogens.append(a["explicit_h"])
            continue
        hcount, overflow = _implicit_hydrogens(
            a["element"], a["aromatic"], a["charge"], bond_sum[i])
        if overflow:
            pos = offsets[i] if offsets else i
            raise ValenceError(
                f"valence overflow on atom {a['element']!r}: "
                f"bond order sum {bond_sum[i]:g}", pos)
        hydrogens.append(hcount)

    # conjugation
    multiple = [orders[bi] >= 2 or aromatic_bonds[bi] for bi in range(len(pairs))]
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for bi, (u, v) in enumerate(pairs):
        adj[u].append((v, bi))
        adj[v].append((u, bi))

    def has_pi(i: int) -> bool:
        return any(multiple[bi] for _, bi in adj[i])

    def lone_pair(i: int) -> bool:
        return raw_atoms[i]["element"] in ("N", "O", "S", "P") \
            and raw_atoms[i]["charge"] <= 0

    def pi_or_pair(i: int) -> bool:
        return has_pi(i) or lone_pair(i)

    conjugated: list[bool] = []
    for bi, (u, v) in enumerate(pairs):
        if aromatic_bonds[bi]:
            conjugated.append(True)
        elif orders[bi] >= 2:
            reach = False
            for end in (u, v):
                for w, wb in adj[end]:
                    if wb == bi or w in (u, v):
                        continue
                    if (orders[wb] == 1 or aromatic_bonds[wb]) and pi_or_pair(w):
                        reach = True
            conjugated.append(reach)
        else:
            conjugated.append((has_pi(u) and pi_or_pair(v))
                              or (has_pi(v) and pi_or_pair(u)))

    def hybridization(i: int) -> int:
        if raw_atoms[i]["aromatic"]:
            return 2
        doubles = sum(1 for _, bi in adj[i] if orders[bi] == 2 and not aromatic_bonds[bi])
        triples = sum(1 for _, bi in adj[i] if orders[bi] == 3)
        if triples or doubles >= 2:
            return 1
        if doubles == 1:
            return 2
        return 3

    atoms = [
        AtomRecord(
            element=a["element"], aromatic=a["aromatic"], charge=a["charge"],
            chirality=a.get("chirality", 0), n_hydrogens=hydrogens[i],
            degree=degree[i], in_ring=i in ring_atoms,
            hybridization=hybridization(i),
        )
        for i, a in enumerate(raw_atoms)
    ]
    bonds = [
        BondRecord(u=u, v=v, order=orders[bi], aromatic=aromatic_bonds[bi],
                   stereo=0, conjugated=conjugated[bi], in_ring=bi in ring_bonds)
        for bi, (u, v) in enumerate(pairs)
    ]
    mol = MolGraph2D(atoms=atoms, bonds=bonds,
                     node_features=np.empty(0), edge_features=np.empty(0),
                     _adj=adj)
    mol.node_features = np.array([atom_features(mol, i) for i in range(n)],
                                 dtype=np.int64).reshape(n, 9)
    mol.edge_features = np.array([bond_features(mol, bi) for bi in range(len(bonds))],
                                 dtype=np.int64).reshape(len(bonds), 3)
    return mol


# -- feature vectors -----------------------------------------------------------

def atom_features(mol: MolGraph2D, idx: int) -> np.ndarray:
    """9 integer fields: atomic number, chirality, degree, formal charge,
    attached hydrogens, radical electrons, hybridization, aromatic, ring."""
    a = mol.atoms[idx]
    return np.array([
        ELEMENTS.get(a.element, 0), a.chirality, a.degree, a.charge,
        a.n_hydrogens, a.radical_electrons, a.hybridization,
        int(a.aromatic), int(a.in_ring),
    ], dtype=np.int64)


def bond_features(mol: MolGraph2D, idx: int) -> np.ndarray:
    """3 integer fields: order code, stereo code, conjugated flag."""
    b = mol.bonds[idx]
    return np.array([b.order_code(), b.stereo, int(b.conjugated)], dtype=np.int64)


# Embedding codebook sizes per feature field; values outside the fixed
# vocabulary map to the reserved 'other' index (the last slot).
ATOM_FIELD_SIZES = (120, 4, 8, 10, 10, 6, 5, 2, 2)
BOND_FIELD_SIZES = (4, 4, 2)


def _code(value: int, lo: int, hi: int, other: int) -> int:
    return value - lo if lo <= value <= hi else other


def encode_atom_features(feats: np.ndarray) -> np.ndarray:
    """Map raw (possibly signed) feature values onto embedding rows."""
    feats = np.atleast_2d(feats)
    out = np.empty_like(feats)
    for r, f in enumerate(feats):
        out[r] = [
            _code(f[0], 1, 118, 119), _code(f[1], 0, 2, 3), _code(f[2], 0, 6, 7),
            _code(f[3], -4, 4, 9), _code(f[4], 0, 8, 9), _code(f[5], 0, 4, 5),
            _code(f[6], 0, 3, 4), f[7], f[8],
        ]
    return out


def encode_bond_features(feats: np.ndarray) -> np.ndarray:
    feats = np.atleast_2d(feats)
    out = np.empty_like(feats)
    for r, f in enumerate(feats):
        out[r] = [_code(f[0], 0, 3, 3), _code(f[1], 0, 2, 3), f[2]]
    return out


def formula(mol: MolGraph2D, atom_subset: list[int] | None = None) -> str:
    """Hill-ish molecular formula counting implicit hydrogens."""
    idxs = range(mol.n_atoms) if atom_subset is None else atom_subset
    counts: dict[str, int] = {}
    for i in idxs:
        a = mol.atoms[i]
        counts[a.element] = counts.get(a.element, 0) + 1
        counts["H"] = counts.get("H", 0) + a.n_hydrogens
    parts = []
    for el in ["C", "H"] + sorted(set(counts) - {"C", "H"}):
        nel = counts.get(el, 0)
        if nel:
            parts.append(el + (str(nel) if nel > 1 else ""))
    return "".join(parts)


# -- canonical labeling --------------------------------------------------------

def canonical_key(mol: MolGraph2D, attachments: dict[int, int] | None = None) -> str:
    """Order-independent graph hash.

    Two graphs get the same key iff they are isomorphic under atom invariants
    (element, aromatic, charge, hydrogen count, attachment count) and bond
    invariants (order, aromatic). Chirality is deliberately ignored. Uses
    WL color refinement plus minimal-code backtracking, so it is exact, not
    probabilistic.
    """
    n = mol.n_atoms
    att = attachments or {}
    base = [
        (a.element, a.aromatic, a.charge, a.n_hydrogens, att.get(i, 0))
        for i, a in enumerate(mol.atoms)
    ]
    binv = {bi: (b.order, b.aromatic) for bi, b in enumerate(mol.bonds)}
    colors = _wl_colors(mol, base, binv)
    code = _canonical_code(mol, colors, base, binv)
    payload = repr(code).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def _wl_colors(mol: MolGraph2D, base: list, binv: dict) -> list[int]:
    colors = _rank([repr(b) for b in base])
    for _ in range(mol.n_atoms):
        sigs = []
        for i in range(mol.n_atoms):
            neigh = sorted((binv[bi], colors[j]) for j, bi in mol.neighbors(i))
            sigs.append(repr((colors[i], neigh)))
        new = _rank(sigs)
        if new == colors:
            break
        colors = new
    return colors


def _rank(sigs: list[str]) -> list[int]:
    order = {s: r for r, s in enumerate(sorted(set(sigs)))}
    return [order[s] for s in sigs]


def _canonical_code(mol: MolGraph2D, colors: list[int], base: list, binv: dict):
    """Lexicographically minimal placement code over all canonical orderings."""
    n = mol.n_atoms
    if n == 0:
        return ()
    inv = [(colors[i], repr(base[i])) for i in range(n)]
    best: list | None = None

    def entry(atom: int, pos: dict[int, int]):
        edges = sorted((pos[j], binv[bi]) for j, bi in mol.neighbors(atom) if j in pos)
        return (inv[atom], tuple(edges))

    start_inv = min(inv)
    starts = [i for i in range(n) if inv[i] == start_inv]

    stack = [((i,), {i: 0}, [entry(i, {})]) for i in starts]
    # depth-first over candidate orderings, pruning against the best code
    while stack:
        order, pos, code = stack.pop()
        if best is not None and code > best[:len(code)]:
            continue
        if len(order) == n:
            if best is None or code < best:
                best = code
            continue
        frontier = [i for i in range(n) if i not in pos
                    and any(j in pos for j, _ in mol.neighbors(i))]
        if not frontier:  # disconnected input; fall back to any remaining atom
            frontier = [i for i in range(n) if i not in pos]
        entries = [(entry(i, pos), i) for i in frontier]
        emin = min(e for e, _ in entries)
        for e, i in entries:
            if e == emin:
                stack.append((order + (i,), {**pos, i: len(order)}, code + [e]))
    return tuple(best or ())
