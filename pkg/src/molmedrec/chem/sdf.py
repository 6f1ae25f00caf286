"""SDF / MOL V2000 connection-table parser (read side only).

Reads coordinates verbatim and keeps the connection table so records can be
paired with SMILES-derived graphs. Multi-record files split on '$$$$'.
Supported property lines: 'M  CHG' (formal charges); other 'M  ' lines and
trailing data items are skipped. 'M  END' closes the block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mol import MolError, MolGraph2D, build_graph

__all__ = ["SdfRecord", "SdfError", "parse_sdf"]


class SdfError(MolError):
    """Malformed SDF content, reported with a 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"{message} (line {line})")
        self.line = line


@dataclass
class SdfRecord:
    name: str
    mol: MolGraph2D
    coords: np.ndarray  # n_atoms x 3, Angstroms, as written


def parse_sdf(text: str) -> list[SdfRecord]:
    """Parse every V2000 record in `text`."""
    lines = text.split("\n")
    records: list[SdfRecord] = []
    pos = 0
    while pos < len(lines):
        # skip blank padding between records
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            break
        records.append(_parse_record(lines, pos))
        # advance past this record's terminator
        while pos < len(lines) and lines[pos].strip() != "$$$$":
            pos += 1
        pos += 1
    return records


def _parse_record(lines: list[str], start: int) -> SdfRecord:
    def line(k: int) -> str:
        if k >= len(lines) or lines[k].strip() == "$$$$":
            raise SdfError("truncated record", k + 1)
        return lines[k]

    name = line(start).strip()
    counts_line = line(start + 3)
    counts_no = start + 4
    try:
        n_atoms = int(counts_line[0:3])
        n_bonds = int(counts_line[3:6])
    except (ValueError, IndexError):
        raise SdfError(f"bad counts line {counts_line!r}", counts_no) from None
    if "V3000" in counts_line:
        raise SdfError("V3000 records are unsupported", counts_no)

    coords = np.zeros((n_atoms, 3), dtype=np.float64)
    elements: list[str] = []
    for i in range(n_atoms):
        no = start + 4 + i
        row = line(no)
        if len(row) < 34:
            raise SdfError(f"atom line too short: {row!r}", no + 1)
        try:
            coords[i] = [float(row[0:10]), float(row[10:20]), float(row[20:30])]
        except ValueError:
            raise SdfError(f"non-numeric coordinate in {row!r}", no + 1) from None
        elements.append(row[31:34].strip())

    bond_rows: list[tuple[int, int, int]] = []
    for i in range(n_bonds):
        no = start + 4 + n_atoms + i
        row = line(no)
        try:
            u = int(row[0:3])
            v = int(row[3:6])
            t = int(row[6:9])
        except (ValueError, IndexError):
            raise SdfError(f"bad bond line {row!r}", no + 1) from None
        if not (1 <= u <= n_atoms and 1 <= v <= n_atoms):
            raise SdfError(f"bond references atom out of range in {row!r}", no + 1)
        if t not in (1, 2, 3, 4):
            raise SdfError(f"unsupported bond type {t}", no + 1)
        bond_rows.append((u - 1, v - 1, t))

    charges: dict[int, int] = {}
    k = start + 4 + n_atoms + n_bonds
    while k < len(lines):
        row = lines[k]
        if row.strip() == "$$$$":
            break
        if row.startswith("M  END"):
            break
        if row.startswith("M  CHG"):
            fields = row.split()
            try:
                cnt = int(fields[2])
                pairs = fields[3:3 + 2 * cnt]
                for a, c in zip(pairs[0::2], pairs[1::2]):
                    charges[int(a) - 1] = int(c)
            except (ValueError, IndexError):
                raise SdfError(f"bad charge line {row!r}", k + 1) from None
        k += 1

    aromatic_atoms = {u for u, v, t in bond_rows if t == 4} \
        | {v for u, v, t in bond_rows if t == 4}
    raw_atoms = [
        {"element": el, "aromatic": i in aromatic_atoms,
         "charge": charges.get(i, 0), "chirality": 0, "explicit_h": None}
        for i, el in enumerate(elements)
    ]
    symbol_for = {1: "-", 2: "=", 3: "#", 4: ":"}
    raw_bonds = [{"u": u, "v": v, "symbol": symbol_for[t]} for u, v, t in bond_rows]
    try:
        mol = build_graph(raw_atoms, raw_bonds)
    except MolError as exc:
        raise SdfError(f"bad connection table: {exc}", start + 4) from None
    return SdfRecord(name=name, mol=mol, coords=coords)


def write_sdf_record(name: str, mol: MolGraph2D, coords: np.ndarray) -> str:
    """Render one V2000 record (used by the data generator and asset tooling)."""
    out = [name, "  molmedrec 3D", "", f"{mol.n_atoms:>3}{mol.n_bonds:>3}  0  0  0  0  0  0  0  0999 V2000"]
    for i, a in enumerate(mol.atoms):
        x, y, z = coords[i]
        out.append(f"{x:>10.4f}{y:>10.4f}{z:>10.4f} {a.element:<3} 0  0  0  0  0  0  0  0  0  0  0  0")
    for b in mol.bonds:
        t = 4 if b.aromatic else b.order
        out.append(f"{b.u + 1:>3}{b.v + 1:>3}{t:>3}  0")
    charged = [(i + 1, a.charge) for i, a in enumerate(mol.atoms) if a.charge]
    for group_start in range(0, len(charged), 8):
        group = charged[group_start:group_start + 8]
        row = f"M  CHG{len(group):>3}"
        for idx, chg in group:
            row += f"{idx:>4}{chg:>4}"
        out.append(row)
    out.append("M  END")
    out.append("$$$$")
    return "\n".join(out) + "\n"
