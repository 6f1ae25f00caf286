"""SMILES parser for the drug-like subset this pipeline consumes.

Supported: organic-subset atoms (B C N O P S F Cl Br I), aromatic lowercase
(b c n o p s), bracket atoms with charge / explicit hydrogen count /
chirality (@ / @@), branches, bond symbols - = # :, ring closures 0-9 and
%nn. Not supported (rejected with a position): isotopes, wildcard atoms,
explicit [H] atoms, dots, cis/trans slashes, reaction syntax.

Aromatic perception is purely notational: atoms are aromatic iff written
lowercase, and an unadorned bond between two aromatic atoms is aromatic iff
it lies on a ring.
"""

from __future__ import annotations

from .mol import ELEMENTS, MolError, MolGraph2D, ValenceError, build_graph

__all__ = ["parse_smiles", "SmilesError"]

ORGANIC = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}
AROMATIC_ORGANIC = {"b", "c", "n", "o", "p", "s"}
BOND_SYMBOLS = "-=#:"


class SmilesError(MolError):
    """Syntax or chemistry error in a SMILES string, with character offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


def parse_smiles(text: str) -> MolGraph2D:
    """Parse a SMILES string into a heavy-atom graph with features."""
    if not text or not text.strip():
        raise SmilesError("empty SMILES string", 0)
    text = text.strip()
    atoms: list[dict] = []
    offsets: list[int] = []
    bonds: list[dict] = []
    ring_open: dict[int, tuple[int, str | None, int]] = {}  # num -> (atom, bond, offset)
    branch_stack: list[tuple[int | None, int]] = []
    prev: int | None = None
    pending_bond: str | None = None
    pending_bond_offset = -1
    i = 0
    n = len(text)

    def add_atom(raw: dict, pos: int) -> None:
        nonlocal prev, pending_bond
        atoms.append(raw)
        offsets.append(pos)
        idx = len(atoms) - 1
        if prev is not None:
            bonds.append({"u": prev, "v": idx, "symbol": pending_bond})
        elif pending_bond is not None:
            raise SmilesError("bond symbol with no preceding atom", pending_bond_offset)
        prev = idx
        pending_bond = None

    def close_ring(num: int, pos: int) -> None:
        nonlocal pending_bond
        if prev is None:
            raise SmilesError("ring closure before any atom", pos)
        if num in ring_open:
            other, obond, _ = ring_open.pop(num)
            if other == prev:
                raise SmilesError(f"ring closure {num} bonds an atom to itself", pos)
            symbol = pending_bond if pending_bond is not None else obond
            if pending_bond is not None and obond is not None and pending_bond != obond:
                raise SmilesError(f"conflicting bond symbols on ring closure {num}", pos)
            bonds.append({"u": other, "v": prev, "symbol": symbol})
        else:
            ring_open[num] = (prev, pending_bond, pos)
        pending_bond = None

    while i < n:
        ch = text[i]
        if ch in BOND_SYMBOLS:
            if pending_bond is not None:
                raise SmilesError("two consecutive bond symbols", i)
            pending_bond = ch
            pending_bond_offset = i
            i += 1
        elif ch == "(":
            if prev is None:
                raise SmilesError("branch before any atom", i)
            branch_stack.append((prev, i))
            i += 1
        elif ch == ")":
            if not branch_stack:
                raise SmilesError("unmatched closing parenthesis", i)
            if pending_bond is not None:
                raise SmilesError("dangling bond symbol before ')'", pending_bond_offset)
            prev, _ = branch_stack.pop()
            i += 1
        elif ch.isdigit():
            close_ring(int(ch), i)
            i += 1
        elif ch == "%":
            if i + 2 >= n or not text[i + 1:i + 3].isdigit():
                raise SmilesError("'%' ring closure needs two digits", i)
            close_ring(int(text[i + 1:i + 3]), i)
            i += 3
        elif ch == "[":
            raw, width = _parse_bracket(text, i)
            add_atom(raw, i)
            i += width
        elif text[i:i + 2] in ORGANIC:
            add_atom(_plain_atom(text[i:i + 2], aromatic=False), i)
            i += 2
        elif ch in ORGANIC:
            add_atom(_plain_atom(ch, aromatic=False), i)
            i += 1
        elif ch in AROMATIC_ORGANIC:
            add_atom(_plain_atom(ch.upper(), aromatic=True), i)
            i += 1
        elif ch == ".":
            raise SmilesError("disconnected structures ('.') are unsupported", i)
        elif ch in "/\\":
            raise SmilesError("cis/trans bond markers are unsupported", i)
        else:
            raise SmilesError(f"unknown element or symbol {ch!r}", i)

    if branch_stack:
        raise SmilesError("unmatched opening parenthesis", branch_stack[-1][1])
    if ring_open:
        num, (_, _, pos) = next(iter(sorted(ring_open.items())))
        raise SmilesError(f"dangling ring-closure digit {num}", pos)
    if pending_bond is not None:
        raise SmilesError("dangling bond symbol at end of input", pending_bond_offset)
    if not atoms:
        raise SmilesError("no atoms found", 0)
    try:
        return build_graph(atoms, bonds, offsets)
    except ValenceError as exc:
        raise SmilesError(str(exc), exc.position) from None


def _plain_atom(element: str, aromatic: bool) -> dict:
    return {"element": element, "aromatic": aromatic, "charge": 0,
            "chirality": 0, "explicit_h": None}


def _parse_bracket(text: str, start: int) -> tuple[dict, int]:
    """Parse '[...]' starting at `start`; returns (raw atom, consumed width)."""
    end = text.find("]", start)
    if end == -1:
        raise SmilesError("unclosed bracket atom", start)
    body = text[start + 1:end]
    i = 0
    if not body:
        raise SmilesError("empty bracket atom", start)
    if body[0].isdigit():
        raise SmilesError("isotope labels are unsupported", start + 1)
    if body[0] == "*":
        raise SmilesError("wildcard atoms are unsupported", start + 1)

    aromatic = False
    if body[i].isupper():
        element = body[i]
        if i + 1 < len(body) and body[i + 1].islower() \
                and element + body[i + 1] in ELEMENTS:
            element += body[i + 1]
        i += len(element)
    elif body[i] in AROMATIC_ORGANIC:
        element = body[i].upper()
        aromatic = True
        i += 1
    else:
        raise SmilesError(f"unknown element symbol {body[i]!r}", start + 1 + i)
    if element == "H":
        raise SmilesError("explicit hydrogen atoms are unsupported", start + 1)
    if element not in ELEMENTS:
        raise SmilesError(f"unknown element symbol {element!r}", start + 1)

    chirality = 0
    if i < len(body) and body[i] == "@":
        chirality = 1
        i += 1
        if i < len(body) and body[i] == "@":
            chirality = 2
            i += 1

    n_h = 0
    if i < len(body) and body[i] == "H":
        i += 1
        digits = ""
        while i < len(body) and body[i].isdigit():
            digits += body[i]
            i += 1
        n_h = int(digits) if digits else 1

    charge = 0
    if i < len(body) and body[i] in "+-":
        sign = 1 if body[i] == "+" else -1
        symbol = body[i]
        i += 1
        digits = ""
        while i < len(body) and body[i].isdigit():
            digits += body[i]
            i += 1
        if digits:
            charge = sign * int(digits)
        else:
            charge = sign
            while i < len(body) and body[i] == symbol:
                charge += sign
                i += 1

    if i != len(body):
        raise SmilesError(f"unexpected {body[i]!r} in bracket atom", start + 1 + i)
    return {"element": element, "aromatic": aromatic, "charge": charge,
            "chirality": chirality, "explicit_h": n_h}, end - start + 1
