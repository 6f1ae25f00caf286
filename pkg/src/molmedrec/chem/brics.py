"""Retrosynthetic fragment decomposition over the 16 link environments.

Each environment is an atom-centered predicate translated from the published
SMARTS rule table; a bond is cleaved when it is acyclic, has the required
order (single for every pair except 7-7, which cuts a double bond), and its
two end atoms match a listed environment pair. Fragments keep their parent
hydrogen counts and ring membership; per-fragment features are recomputed on
the fragment graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mol import AtomRecord, BondRecord, MolGraph2D, build_graph, canonical_key

__all__ = ["Substructure", "SubstructureTable", "find_brics_bonds",
           "brics_decompose", "build_substructure_table"]


@dataclass
class Substructure:
    fragment: MolGraph2D
    attachment_points: list[int]       # fragment atom index per cleaved bond end
    parent_atom_map: dict[int, int]    # fragment atom index -> parent atom index
    canonical_key: str


@dataclass
class SubstructureTable:
    """Deduplicated fragments over a drug list plus the membership mask."""

    substructures: list[Substructure]
    mask: np.ndarray                   # |drugs| x |fragments|, 0/1 float

    @property
    def n_substructures(self) -> int:
        return len(self.substructures)


# -- environment predicates ----------------------------------------------------

def _atom(mol: MolGraph2D, i: int) -> AtomRecord:
    return mol.atoms[i]


def _bonds(mol: MolGraph2D, i: int):
    for j, bi in mol.neighbors(i):
        yield j, mol.bonds[bi]


def _single_acyclic(b: BondRecord) -> bool:
    return b.order == 1 and not b.aromatic and not b.in_ring


def _has_carbonyl_o(mol: MolGraph2D, i: int) -> tuple[bool, int]:
    for j, b in _bonds(mol, i):
        if _atom(mol, j).element == "O" and b.order == 2 and not b.aromatic:
            return True, j
    return False, -1


def _env_1(mol, i):
    # acyl carbon: C, D3, =O, plus another C/N/O neighbor
    a = _atom(mol, i)
    if a.element != "C" or a.aromatic or a.degree != 3:
        return False
    has_o, o = _has_carbonyl_o(mol, i)
    return has_o and any(j != o and _atom(mol, j).element in ("C", "N", "O")
                         for j, _ in _bonds(mol, i))


def _env_3(mol, i):
    # ether/ester oxygen with an acyclic single bond to carbon
    a = _atom(mol, i)
    return (a.element == "O" and not a.aromatic and a.degree == 2
            and any(_single_acyclic(b) and _atom(mol, j).element == "C"
                    for j, b in _bonds(mol, i)))


def _env_4(mol, i):
    # sp3-ish carbon (no double bond) singly bonded off-ring to a carbon
    a = _atom(mol, i)
    if a.element != "C" or a.aromatic or a.degree < 2:
        return False
    if any(b.order == 2 and not b.aromatic for _, b in _bonds(mol, i)):
        return False
    return any(_single_acyclic(b) and _atom(mol, j).element == "C"
               for j, b in _bonds(mol, i))


def _env_5(mol, i):
    # amine nitrogen: all neighbors C/S, no double bonds, not a lactam N
    a = _atom(mol, i)
    if a.element != "N" or a.aromatic or a.degree < 2:
        return False
    for j, b in _bonds(mol, i):
        if b.order == 2 and not b.aromatic:
            return False
        if b.order == 1 and not b.aromatic and _atom(mol, j).element not in ("C", "S"):
            return False
    if a.in_ring:
        for j, b in _bonds(mol, i):
            if b.in_ring and _atom(mol, j).element == "C" \
                    and not _atom(mol, j).aromatic and _has_carbonyl_o(mol, j)[0]:
                return False
    return True


def _env_6(mol, i):
    # acyclic carbonyl carbon with a single acyclic bond to C/N/O
    a = _atom(mol, i)
    if a.element != "C" or a.aromatic or a.in_ring or a.degree != 3:
        return False
    has_o, o = _has_carbonyl_o(mol, i)
    return has_o and any(j != o and _single_acyclic(b)
                         and _atom(mol, j).element in ("C", "N", "O")
                         for j, b in _bonds(mol, i))


def _env_7(mol, i):
    # olefin carbon with a plain single bond to a carbon (7-7 cuts the C=C)
    a = _atom(mol, i)
    return (a.element == "C" and not a.aromatic and a.degree in (2, 3)
            and any(b.order == 1 and not b.aromatic and _atom(mol, j).element == "C"
                    for j, b in _bonds(mol, i)))


def _env_8(mol, i):
    # plain alkyl carbon: acyclic, all bonds single
    a = _atom(mol, i)
    return (a.element == "C" and not a.aromatic and not a.in_ring
            and a.degree >= 2
            and all(b.order == 1 and not b.aromatic for _, b in _bonds(mol, i)))


def _env_9(mol, i):
    # neutral aromatic nitrogen flanked by two aromatic C/N/O/S
    a = _atom(mol, i)
    if a.element != "N" or not a.aromatic or a.charge != 0:
        return False
    flank = [j for j, b in _bonds(mol, i)
             if b.aromatic and _atom(mol, j).aromatic
             and _atom(mol, j).element in ("C", "N", "O", "S")]
    return len(flank) >= 2


def _env_10(mol, i):
    # lactam nitrogen: ring N bonded in-ring to a carbonyl C and to C/N/O/S
    a = _atom(mol, i)
    if a.element != "N" or a.aromatic or not a.in_ring:
        return False
    ring_partners = [j for j, b in _bonds(mol, i)
                     if b.in_ring and not _atom(mol, j).aromatic
                     and _atom(mol, j).element in ("C", "N", "O", "S")]
    carbonyl = [j for j in ring_partners
                if _atom(mol, j).element == "C" and _has_carbonyl_o(mol, j)[0]]
    return bool(carbonyl) and len(ring_partners) >= 2


def _env_11(mol, i):
    # thioether sulfur
    a = _atom(mol, i)
    return (a.element == "S" and not a.aromatic and a.degree == 2
            and any(_single_acyclic(b) and _atom(mol, j).element == "C"
                    for j, b in _bonds(mol, i)))


def _env_12(mol, i):
    # sulfonyl sulfur: two =O plus a carbon neighbor
    a = _atom(mol, i)
    if a.element != "S" or a.aromatic or a.degree != 4:
        return False
    n_dbl_o = sum(1 for j, b in _bonds(mol, i)
                  if _atom(mol, j).element == "O" and b.order == 2 and not b.aromatic)
    has_c = any(_atom(mol, j).element == "C" for j, _ in _bonds(mol, i))
    return n_dbl_o >= 2 and has_c


def _ring_single_partners(mol, i, allowed: tuple[str, ...]) -> list[int]:
    return [j for j, b in _bonds(mol, i)
            if b.in_ring and b.order == 1 and not b.aromatic
            and not _atom(mol, j).aromatic and _atom(mol, j).element in allowed]


def _env_13(mol, i):
    # ring carbon joined in-ring (single bonds) to C/N/O/S and to N/O/S
    a = _atom(mol, i)
    if a.element != "C" or a.aromatic or not a.in_ring:
        return False
    broad = _ring_single_partners(mol, i, ("C", "N", "O", "S"))
    hetero = _ring_single_partners(mol, i, ("N", "O", "S"))
    return len(hetero) >= 1 and len(broad) >= 2


def _env_14(mol, i):
    # aromatic carbon next to an aromatic heteroatom
    a = _atom(mol, i)
    if a.element != "C" or not a.aromatic:
        return False
    flank = [(j, _atom(mol, j).element) for j, b in _bonds(mol, i)
             if b.aromatic and _atom(mol, j).aromatic]
    hetero = [j for j, el in flank if el in ("N", "O", "S")]
    broad = [j for j, el in flank if el in ("C", "N", "O", "S")]
    return bool(hetero) and len(broad) >= 2


def _env_15(mol, i):
    # carbocyclic ring carbon with two in-ring single bonds to aliphatic C
    a = _atom(mol, i)
    return (a.element == "C" and not a.aromatic and a.in_ring
            and len(_ring_single_partners(mol, i, ("C",))) >= 2)


def _env_16(mol, i):
    # benzene-like aromatic carbon
    a = _atom(mol, i)
    if a.element != "C" or not a.aromatic:
        return False
    flank = [j for j, b in _bonds(mol, i)
             if b.aromatic and _atom(mol, j).aromatic and _atom(mol, j).element == "C"]
    return len(flank) >= 2


ENVS = {
    "1": _env_1, "3": _env_3, "4": _env_4, "5": _env_5, "6": _env_6,
    "7": _env_7, "8": _env_8, "9": _env_9, "10": _env_10, "11": _env_11,
    "12": _env_12, "13": _env_13, "14": _env_14, "15": _env_15, "16": _env_16,
}

# (env a, env b, bond order) -- every pair cuts a single acyclic bond except
# 7-7, which cuts a double.
PAIRS: list[tuple[str, str, int]] = [
    ("1", "3", 1), ("1", "5", 1), ("1", "10", 1),
    ("3", "4", 1), ("3", "13", 1), ("3", "14", 1), ("3", "15", 1), ("3", "16", 1),
    ("4", "5", 1), ("4", "11", 1),
    ("5", "12", 1), ("5", "14", 1), ("5", "16", 1), ("5", "13", 1), ("5", "15", 1),
    ("6", "13", 1), ("6", "14", 1), ("6", "15", 1), ("6", "16", 1),
    ("7", "7", 2),
    ("8", "9", 1), ("8", "10", 1), ("8", "13", 1), ("8", "14", 1),
    ("8", "15", 1), ("8", "16", 1),
    ("9", "13", 1), ("9", "14", 1), ("9", "15", 1), ("9", "16", 1),
    ("10", "13", 1), ("10", "14", 1), ("10", "15", 1), ("10", "16", 1),
    ("11", "13", 1), ("11", "14", 1), ("11", "15", 1), ("11", "16", 1),
    ("13", "14", 1), ("13", "15", 1), ("13", "16", 1),
    ("14", "14", 1), ("14", "15", 1), ("14", "16", 1),
    ("15", "16", 1),
    ("16", "16", 1),
]


def find_brics_bonds(mol: MolGraph2D) -> list[tuple[tuple[int, int], tuple[str, str]]]:
    """(bond endpoints, environment labels) for every cleavable bond, in
    bond order; each bond reported once with its first matching pair."""
    matches: dict[str, set[int]] = {
        label: {i for i in range(mol.n_atoms) if pred(mol, i)}
        for label, pred in ENVS.items()
    }
    found: list[tuple[tuple[int, int], tuple[str, str]]] = []
    for bi, b in enumerate(mol.bonds):
        if b.in_ring or b.aromatic:
            continue
        for la, lb, order in PAIRS:
            if b.order != order:
                continue
            if b.u in matches[la] and b.v in matches[lb]:
                found.append(((b.u, b.v), (la, lb)))
                break
            if b.v in matches[la] and b.u in matches[lb]:
                found.append(((b.v, b.u), (la, lb)))
                break
    return found


def brics_decompose(mol: MolGraph2D) -> list[Substructure]:
    """Cleave every matching bond and return connected fragments, ordered by
    smallest parent atom index. Uncleavable molecules come back whole as a
    single fragment with no attachment points."""
    cut_bonds = {frozenset(pair) for pair, _ in find_brics_bonds(mol)}
    n = mol.n_atoms
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for b in mol.bonds:
        if frozenset((b.u, b.v)) not in cut_bonds:
            ru, rv = find(b.u), find(b.v)
            if ru != rv:
                parent[ru] = rv

    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    components = sorted(groups.values(), key=min)

    out: list[Substructure] = []
    for comp in components:
        local = {a: k for k, a in enumerate(comp)}
        raw_atoms = []
        for a in comp:
            rec = mol.atoms[a]
            raw_atoms.append({
                "element": rec.element, "aromatic": rec.aromatic,
                "charge": rec.charge, "chirality": rec.chirality,
                "explicit_h": rec.n_hydrogens,  # freeze parent hydrogen counts
            })
        raw_bonds = []
        for b in mol.bonds:
            if b.u in local and b.v in local and frozenset((b.u, b.v)) not in cut_bonds:
                sym = ":" if b.aromatic else {1: "-", 2: "=", 3: "#"}[b.order]
                raw_bonds.append({"u": local[b.u], "v": local[b.v], "symbol": sym})
        frag = build_graph(raw_atoms, raw_bonds)
        attach = []
        for pair in cut_bonds:
            for a in pair:
                if a in local:
                    attach.append(local[a])
        attach.sort()
        counts: dict[int, int] = {}
        for a in attach:
            counts[a] = counts.get(a, 0) + 1
        out.append(Substructure(
            fragment=frag,
            attachment_points=attach,
            parent_atom_map={local[a]: a for a in comp},
            canonical_key=canonical_key(frag, counts),
        ))
    return out


def build_substructure_table(mols: list[MolGraph2D]) -> SubstructureTable:
    """Decompose every drug molecule, deduplicate fragments by canonical key
    (stable first-seen order), and build the drug x fragment membership mask."""
    seen: dict[str, int] = {}
    subs: list[Substructure] = []
    members: list[set[int]] = []
    for mol in mols:
        cols = set()
        for frag in brics_decompose(mol):
            col = seen.get(frag.canonical_key)
            if col is None:
                col = len(subs)
                seen[frag.canonical_key] = col
                subs.append(frag)
            cols.add(col)
        members.append(cols)
    mask = np.zeros((len(mols), len(subs)), dtype=np.float64)
    for row, cols in enumerate(members):
        mask[row, list(cols)] = 1.0
    return SubstructureTable(substructures=subs, mask=mask)
