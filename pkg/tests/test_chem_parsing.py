"""SMILES / SDF parsing, feature vectors, and graph invariants."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from molmedrec.chem import (
    MolError,
    SdfError,
    SmilesError,
    atom_features,
    bond_features,
    canonical_key,
    formula,
    parse_sdf,
    parse_smiles,
    write_sdf_record,
)

SP3, SP2, SP = 3, 2, 1


def test_methane():
    m = parse_smiles("C")
    assert (m.n_atoms, m.n_bonds) == (1, 0)
    assert m.atoms[0].n_hydrogens == 4
    np.testing.assert_array_equal(atom_features(m, 0), [6, 0, 0, 0, 4, 0, SP3, 0, 0])


def test_benzene_ring_closure():
    m = parse_smiles("c1ccccc1")
    assert (m.n_atoms, m.n_bonds) == (6, 6)  # the closure supplies the 6th bond
    assert all(a.aromatic and a.in_ring for a in m.atoms)
    assert all(b.aromatic for b in m.bonds)
    feats = atom_features(m, 0)
    assert feats[2] == 2 and feats[7] == 1 and feats[8] == 1
    np.testing.assert_array_equal(bond_features(m, 0), [3, 0, 1])


def test_aspirin_counts():
    m = parse_smiles("CC(=O)Oc1ccccc1C(=O)O")
    assert (m.n_atoms, m.n_bonds) == (13, 13)
    assert formula(m) == "C9H8O4"


def test_bracket_ammonium():
    m = parse_smiles("[NH4+]")
    a = m.atoms[0]
    assert a.charge == 1 and a.n_hydrogens == 4
    feats = atom_features(m, 0)
    assert feats[3] == 1 and feats[4] == 4


def test_single_bond_features():
    m = parse_smiles("CC")
    np.testing.assert_array_equal(bond_features(m, 0), [0, 0, 0])


def test_conjugated_diene():
    m = parse_smiles("C=CC=C")
    # alternating multiple/single: every bond in butadiene is conjugated
    assert [b.conjugated for b in m.bonds] == [True, True, True]
    lone = parse_smiles("C=CCC")  # isolated alkene: nothing conjugated
    assert not any(b.conjugated for b in lone.bonds)


def test_chirality_tags():
    m = parse_smiles("N[C@H](C)C(=O)O")
    assert m.atoms[1].chirality == 1
    m2 = parse_smiles("N[C@@H](C)C(=O)O")
    assert m2.atoms[1].chirality == 2


def test_ring_percent_closure():
    m = parse_smiles("C%12CCCCC%12")
    assert m.n_bonds == 6 and all(a.in_ring for a in m.atoms)


@pytest.mark.parametrize("bad, fragment", [
    ("CQ", "unknown element"),
    ("C(C", "unmatched opening"),
    ("CC)C", "unmatched closing"),
    ("C1CC", "dangling ring-closure"),
    ("CC(C)(C)(C)C", "valence overflow"),
    ("[13C]", "isotope"),
    ("[*]", "wildcard"),
    ("C.C", "unsupported"),
])
def test_parse_errors_carry_offset(bad, fragment):
    with pytest.raises(SmilesError, match=fragment) as err:
        parse_smiles(bad)
    assert "offset" in str(err.value)


def test_valence_overflow_offset_points_at_atom():
    with pytest.raises(SmilesError) as err:
        parse_smiles("CC(C)(C)(C)C")
    assert err.value.offset == 1


def test_hybridization_rules():
    m = parse_smiles("C=C")
    assert m.atoms[0].hybridization == SP2
    m = parse_smiles("C#N")
    assert m.atoms[0].hybridization == SP
    m = parse_smiles("C=C=C")
    assert m.atoms[1].hybridization == SP


def test_isomorphic_writings_same_key():
    pairs = [("CCO", "OCC"), ("c1ccccc1C", "Cc1ccccc1"),
             ("CC(=O)O", "OC(C)=O"), ("CN1CCCC1", "C1CCN(C)C1")]
    for a, b in pairs:
        ga, gb = parse_smiles(a), parse_smiles(b)
        assert canonical_key(ga) == canonical_key(gb), (a, b)


def test_different_molecules_different_key():
    assert canonical_key(parse_smiles("CCO")) != canonical_key(parse_smiles("CCN"))
    assert canonical_key(parse_smiles("C1CC1")) != canonical_key(parse_smiles("CCC"))


@given(st.integers(2, 7), st.integers(0, 1000))
def test_random_relabelings_same_key(n, seed):
    # random tree + decorations, rewritten with a shifted atom order
    rng = np.random.default_rng(seed)
    elements = ["C", "N", "O"]
    raw = [{"element": elements[rng.integers(0, 3)], "aromatic": False,
            "charge": 0, "chirality": 0, "explicit_h": 0} for _ in range(n)]
    bonds = [{"u": int(rng.integers(0, i)), "v": i, "symbol": "-"}
             for i in range(1, n)]
    from molmedrec.chem.mol import build_graph
    g1 = build_graph([dict(a) for a in raw], [dict(b) for b in bonds])
    perm = list(rng.permutation(n))
    inv = {p: i for i, p in enumerate(perm)}
    raw2 = [dict(raw[p]) for p in perm]
    bonds2 = [{"u": inv[b["u"]], "v": inv[b["v"]], "symbol": "-"} for b in bonds]
    g2 = build_graph(raw2, bonds2)
    assert canonical_key(g1) == canonical_key(g2)


# -- SDF ------------------------------------------------------------------------

TWO_ATOM_RECORD = """two_atoms
  test

  2  1  0  0  0  0  0  0  0  0999 V2000
    0.0000    0.0000    0.0000 C   0  0  0  0  0  0  0  0  0  0  0  0
    1.5000    0.0000    0.0000 C   0  0  0  0  0  0  0  0  0  0  0  0
  1  2  1  0
M  END
$$$$
"""


def test_sdf_two_atom_record():
    recs = parse_sdf(TWO_ATOM_RECORD)
    assert len(recs) == 1
    rec = recs[0]
    np.testing.assert_array_equal(rec.coords, [[0, 0, 0], [1.5, 0, 0]])
    assert rec.mol.n_bonds == 1
    assert rec.name == "two_atoms"


def test_sdf_counts_mismatch_reports_line():
    bad = TWO_ATOM_RECORD.replace("  2  1", "  3  1")
    with pytest.raises(SdfError, match=r"line \d+"):
        parse_sdf(bad)


def test_sdf_non_numeric_coordinate():
    bad = TWO_ATOM_RECORD.replace("    1.5000", "    x.5000")
    with pytest.raises(SdfError, match="non-numeric"):
        parse_sdf(bad)


def test_sdf_two_records():
    recs = parse_sdf(TWO_ATOM_RECORD + TWO_ATOM_RECORD.replace("two_atoms", "again"))
    assert [r.name for r in recs] == ["two_atoms", "again"]


def test_sdf_round_trip_with_charges_and_aromatics():
    mol = parse_smiles("C[N+](C)(C)CC(C)OC(N)=O")
    coords = np.arange(mol.n_atoms * 3, dtype=float).reshape(-1, 3)
    text = write_sdf_record("test_mol", mol, coords)
    rec = parse_sdf(text)[0]
    np.testing.assert_allclose(rec.coords, coords)
    assert rec.mol.atoms[1].charge == 1
    assert [a.element for a in rec.mol.atoms] == [a.element for a in mol.atoms]
    assert [a.n_hydrogens for a in rec.mol.atoms] == [a.n_hydrogens for a in mol.atoms]
    arom = parse_smiles("c1ccccc1O")
    rec2 = parse_sdf(write_sdf_record("phenol", arom, np.zeros((7, 3)) + np.arange(7)[:, None]))[0]
    assert [a.aromatic for a in rec2.mol.atoms] == [a.aromatic for a in arom.atoms]
    assert [a.n_hydrogens for a in rec2.mol.atoms] == [a.n_hydrogens for a in arom.atoms]


def test_duplicate_bond_rejected():
    from molmedrec.chem.mol import build_graph
    atoms = [{"element": "C", "aromatic": False, "charge": 0, "chirality": 0,
              "explicit_h": 0} for _ in range(2)]
    bonds = [{"u": 0, "v": 1, "symbol": "-"}, {"u": 1, "v": 0, "symbol": "-"}]
    with pytest.raises(MolError, match="duplicate"):
        build_graph(atoms, bonds)
