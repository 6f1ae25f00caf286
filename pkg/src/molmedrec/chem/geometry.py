"""3D conformer graphs: radius edges, RBF distances, unit displacement vectors.

Only relative geometry enters the features (distances and unit vectors), so
the downstream geometric encoder sees translation-invariant inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mol import MolError, MolGraph2D

__all__ = ["MolGraph3D", "RADIUS_CUTOFF", "RBF_CENTERS", "RBF_SIGMA",
           "build_radius_graph", "rbf_expand", "build_graph3d",
           "inherit_conformer"]

RADIUS_CUTOFF = 4.5  # Angstroms
N_RBF = 16
RBF_CENTERS = np.linspace(0.0, RADIUS_CUTOFF, N_RBF)
RBF_SIGMA = RBF_CENTERS[1] - RBF_CENTERS[0]  # sigma = center spacing


@dataclass
class MolGraph3D:
    """Conformer graph paired with the 2D connectivity it was built from."""

    mol: MolGraph2D
    coords: np.ndarray        # N x 3
    edge_src: np.ndarray      # E directed radius edges (both directions)
    edge_dst: np.ndarray
    node_scalar: np.ndarray   # N x 9 raw integer atom features
    node_vector: np.ndarray   # N x 1 x 3 mean unit displacement to neighbors
    edge_scalar: np.ndarray   # E x 16 RBF expansion of the distance
    edge_vector: np.ndarray   # E x 1 x 3 unit displacement src -> dst

    @property
    def n_atoms(self) -> int:
        return self.coords.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edge_src.shape[0]


def build_radius_graph(coords: np.ndarray, cutoff: float = RADIUS_CUTOFF
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Directed edges (both orientations) between atoms strictly closer than
    `cutoff`; no self edges. Coincident atoms (distance ~0) get no edge."""
    coords = np.asarray(coords, dtype=np.float64)
    if not np.all(np.isfinite(coords)):
        raise MolError("non-finite coordinates")
    n = coords.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp)
    delta = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((delta ** 2).sum(-1))
    hit = (dist < cutoff) & (dist > 1e-9)
    src, dst = np.nonzero(hit)
    return src.astype(np.intp), dst.astype(np.intp)


def rbf_expand(d) -> np.ndarray:
    """16 Gaussians exp(-(d - mu_k)^2 / (2 sigma^2)), centers on [0, 4.5]."""
    d = np.asarray(d, dtype=np.float64)
    diff = d[..., None] - RBF_CENTERS
    return np.exp(-(diff ** 2) / (2.0 * RBF_SIGMA ** 2))


def build_graph3d(mol: MolGraph2D, coords: np.ndarray,
                  cutoff: float = RADIUS_CUTOFF) -> MolGraph3D:
    """Assemble the conformer graph for a 2D molecule with given coordinates."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape != (mol.n_atoms, 3):
        raise MolError(
            f"coordinate shape {coords.shape} does not match {mol.n_atoms} atoms")
    src, dst = build_radius_graph(coords, cutoff)
    disp = coords[dst] - coords[src]
    dist = np.linalg.norm(disp, axis=1)
    unit = disp / dist[:, None] if len(dist) else disp.reshape(0, 3)

    node_vector = np.zeros((mol.n_atoms, 1, 3))
    if len(src):
        np.add.at(node_vector[:, 0, :], dst, -unit)  # displacement toward dst's neighbors
        counts = np.bincount(dst, minlength=mol.n_atoms).astype(np.float64)
        counts[counts == 0] = 1.0
        node_vector[:, 0, :] /= counts[:, None]

    return MolGraph3D(
        mol=mol,
        coords=coords,
        edge_src=src,
        edge_dst=dst,
        node_scalar=mol.node_features.copy(),
        node_vector=node_vector,
        edge_scalar=rbf_expand(dist),
        edge_vector=unit.reshape(-1, 1, 3),
    )


def inherit_conformer(parent: MolGraph3D, frag) -> MolGraph3D:
    """Give a substructure the coordinates of its mapped parent atoms and
    rebuild radius edges / RBF / vector features on the fragment."""
    n = frag.fragment.n_atoms
    rows = []
    for i in range(n):
        j = frag.parent_atom_map.get(i)
        if j is None or not (0 <= j < parent.n_atoms):
            raise MolError(f"fragment atom {i} is not mapped into the parent")
        rows.append(j)
    return build_graph3d(frag.fragment, parent.coords[rows])
