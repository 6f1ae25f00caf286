"""Generate the bundled molecule assets (catalog.tsv + molecules.sdf).

Run from the repo root:  python3 tools/make_assets.py

Coordinates come from seeded stress minimization of graph distances
(bond-length targets with hop-dependent contraction), not from a conformer
search; they are plausible enough for radius-graph features, which is all the
pipeline consumes. The output files are committed; nothing regenerates them
at runtime.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from molmedrec.chem import (  # noqa: E402
    brics_decompose, build_substructure_table, parse_smiles, write_sdf_record,
)

CATALOG = [
    ("aspirin", "CC(=O)Oc1ccccc1C(=O)O"),
    ("paracetamol", "CC(=O)Nc1ccc(O)cc1"),
    ("ibuprofen", "CC(C)Cc1ccc(cc1)C(C)C(=O)O"),
    ("caffeine", "Cn1cnc2c1c(=O)n(C)c(=O)n2C"),
    ("nicotine", "CN1CCCC1c1cccnc1"),
    ("benzocaine", "CCOC(=O)c1ccc(N)cc1"),
    ("procaine", "CCN(CC)CCOC(=O)c1ccc(N)cc1"),
    ("lidocaine", "CCN(CC)CC(=O)Nc1c(C)cccc1C"),
    ("sulfanilamide", "Nc1ccc(cc1)S(N)(=O)=O"),
    ("salbutamol", "CC(C)(C)NCC(O)c1ccc(O)c(CO)c1"),
    ("warfarin", "CC(=O)CC(c1ccccc1)C1=C(O)c2ccccc2OC1=O"),
    ("metoprolol", "COCCc1ccc(OCC(O)CNC(C)C)cc1"),
    ("felbinac", "OC(=O)Cc1ccc(-c2ccccc2)cc1"),
    ("diazepam", "CN1c2ccc(Cl)cc2C(=NCC1=O)c1ccccc1"),
    ("phenytoin", "O=C1NC(=O)C(c2ccccc2)(c2ccccc2)N1"),
    ("chlorpromazine", "CN(C)CCCN1c2ccccc2Sc2ccc(Cl)cc21"),
    ("fluoxetine", "CNCCC(Oc1ccc(C(F)(F)F)cc1)c1ccccc1"),
    ("naproxen", "COc1ccc2cc(C(C)C(=O)O)ccc2c1"),
    ("atropine", "CN1C2CCC1CC(OC(=O)C(CO)c1ccccc1)C2"),
    ("bethanechol", "C[N+](C)(C)CC(C)OC(N)=O"),
]

BOND_LENGTH = {1: 1.54, 2: 1.34, 3: 1.21}
AROMATIC_LENGTH = 1.40
HOP_FACTOR = {1: 1.0, 2: 0.84, 3: 0.78}
FAR_FACTOR = 0.75


def _path_lengths(mol) -> tuple[np.ndarray, np.ndarray]:
    """All-pairs (path length in Angstrom-sums, hop count) via BFS-Dijkstra."""
    n = mol.n_atoms
    dist = np.full((n, n), np.inf)
    hops = np.full((n, n), 10 ** 6)
    for s in range(n):
        dist[s, s] = 0.0
        hops[s, s] = 0
        todo = {s}
        while todo:
            i = min(todo, key=lambda k: dist[s, k])
            todo.discard(i)
            for j, bi in mol.neighbors(i):
                b = mol.bonds[bi]
                w = AROMATIC_LENGTH if b.aromatic else BOND_LENGTH[b.order]
                if dist[s, i] + w < dist[s, j] - 1e-12:
                    dist[s, j] = dist[s, i] + w
                    hops[s, j] = hops[s, i] + 1
                    todo.add(j)
    return dist, hops


def embed(mol, seed: int) -> np.ndarray:
    """Seeded 3D stress minimization; returns n_atoms x 3 coordinates."""
    n = mol.n_atoms
    rng = np.random.default_rng(seed)
    if n == 1:
        return np.zeros((1, 3))
    path, hops = _path_lengths(mol)
    factor = np.where(hops <= 3,
                      np.vectorize(lambda h: HOP_FACTOR.get(int(h), FAR_FACTOR))(hops),
                      FAR_FACTOR)
    target = path * factor
    weight = 1.0 / np.maximum(target, 0.5) ** 2
    np.fill_diagonal(weight, 0.0)
    strong = hops <= 3  # long-range targets only stop collapse, weigh low
    weight = np.where(strong, weight, 0.05 * weight)

    x = rng.normal(scale=2.0, size=(n, 3))
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    for t in range(1, 4001):
        delta = x[:, None, :] - x[None, :, :]
        d = np.sqrt((delta ** 2).sum(-1)) + 1e-9
        np.fill_diagonal(d, 1.0)
        coef = weight * (d - target) / d
        np.fill_diagonal(coef, 0.0)
        grad = 4.0 * (coef[:, :, None] * delta).sum(axis=1)
        m = 0.9 * m + 0.1 * grad
        v = 0.999 * v + 0.001 * grad ** 2
        x -= 0.05 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    return x - x.mean(axis=0)


def check_geometry(mol, coords) -> list[str]:
    issues = []
    for b in mol.bonds:
        d = np.linalg.norm(coords[b.u] - coords[b.v])
        if not 1.0 < d < 1.9:
            issues.append(f"bond {b.u}-{b.v} length {d:.2f}")
    bonded = {(b.u, b.v) for b in mol.bonds} | {(b.v, b.u) for b in mol.bonds}
    for i in range(mol.n_atoms):
        for j in range(i + 1, mol.n_atoms):
            if (i, j) in bonded:
                continue
            d = np.linalg.norm(coords[i] - coords[j])
            if d < 1.7:
                issues.append(f"clash {i}-{j} at {d:.2f}")
    return issues


def main() -> None:
    assets = Path(__file__).resolve().parent.parent / "src" / "molmedrec" / "assets"
    assets.mkdir(parents=True, exist_ok=True)

    catalog_rows = []
    sdf_chunks = []
    mols = []
    for idx, (name, smiles) in enumerate(CATALOG):
        mol = parse_smiles(smiles)
        mols.append(mol)
        best = None
        for attempt in range(8):
            coords = embed(mol, seed=1000 * idx + attempt)
            issues = check_geometry(mol, coords)
            if not issues:
                best = coords
                break
            best = coords
        else:
            print(f"warning: {name} geometry issues persist: {issues[:3]}")
        catalog_rows.append(f"{idx}\t{smiles}\t{name}")
        sdf_chunks.append(write_sdf_record(name, mol, best))
        print(f"{idx:>2} {name:<16} atoms={mol.n_atoms:>2} "
              f"fragments={len(brics_decompose(mol))}")

    (assets / "catalog.tsv").write_text(
        "# drug_id\tsmiles\tsdf_name\n" + "\n".join(catalog_rows) + "\n")
    (assets / "molecules.sdf").write_text("".join(sdf_chunks))

    table = build_substructure_table(mols)
    keys = {canonical for canonical in
            (s.canonical_key for s in table.substructures)}
    mol_keys = {__import__("molmedrec.chem", fromlist=["canonical_key"])
                .canonical_key(m) for m in mols}
    corpus = len(mol_keys | keys)
    print(f"\nunique substructures: {table.n_substructures}")
    print(f"pretraining corpus size (molecules + fragments, deduplicated): {corpus}")


if __name__ == "__main__":
    main()
