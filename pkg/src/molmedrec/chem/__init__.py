"""Molecule ingestion: SMILES/SDF parsing, features, fragments, 3D graphs."""

from .mol import (
    AtomRecord,
    BondRecord,
    MolError,
    MolGraph2D,
    atom_features,
    bond_features,
    canonical_key,
    encode_atom_features,
    encode_bond_features,
    formula,
    ATOM_FIELD_SIZES,
    BOND_FIELD_SIZES,
)
from .smiles import SmilesError, parse_smiles
from .sdf import SdfError, SdfRecord, parse_sdf, write_sdf_record
from .geometry import (
    MolGraph3D,
    RADIUS_CUTOFF,
    RBF_CENTERS,
    RBF_SIGMA,
    build_graph3d,
    build_radius_graph,
    inherit_conformer,
    rbf_expand,
)
from .brics import (
    Substructure,
    SubstructureTable,
    brics_decompose,
    build_substructure_table,
    find_brics_bonds,
)

__all__ = [
    "AtomRecord", "BondRecord", "MolError", "MolGraph2D",
    "atom_features", "bond_features", "canonical_key",
    "encode_atom_features", "encode_bond_features", "formula",
    "ATOM_FIELD_SIZES", "BOND_FIELD_SIZES",
    "SmilesError", "parse_smiles",
    "SdfError", "SdfRecord", "parse_sdf", "write_sdf_record",
    "MolGraph3D", "RADIUS_CUTOFF", "RBF_CENTERS", "RBF_SIGMA",
    "build_graph3d", "build_radius_graph", "inherit_conformer", "rbf_expand",
    "Substructure", "SubstructureTable", "brics_decompose",
    "build_substructure_table", "find_brics_bonds",
]
