"""EHR records, DDI matrices, molecule catalogs, splits, and the seeded
synthetic-EHR generator.

File formats (byte-level examples in docs/formats.md):

- EHR: one patient per line, ``id | visit | visit | ...`` where a visit is
  ``d <ints> ; p <ints> ; m <ints>``. '#' lines are comments.
- DDI: two integer columns per line, '#' comments; pairs are symmetrized.
- Catalog: TSV of drug_id, SMILES, SDF record name.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chem import MolGraph2D, parse_sdf, parse_smiles
from .util import rng_for

__all__ = [
    "PatientRecord", "Visit", "DataError", "load_ehr", "save_ehr",
    "read_vocab_header", "load_ddi", "save_ddi", "split_patients",
    "CatalogEntry", "Catalog", "load_catalog", "round_robin_catalog",
    "SyntheticSpec", "synth_generate",
]


class DataError(ValueError):
    """Malformed record files or inconsistent vocabulary bounds."""


@dataclass
class Visit:
    diseases: list[int]
    procedures: list[int]
    medications: list[int]

    def multi_hot(self, field_name: str, size: int) -> np.ndarray:
        out = np.zeros(size, dtype=np.float64)
        out[getattr(self, field_name)] = 1.0
        return out


@dataclass
class PatientRecord:
    patient_id: str
    visits: list[Visit]


# -- EHR text format -------------------------------------------------------------

def _parse_group(token: str, letter: str, line_no: int) -> list[int]:
    token = token.strip()
    if not token.startswith(letter):
        raise DataError(f"line {line_no}: expected group {letter!r} in {token!r}")
    body = token[len(letter):].split()
    try:
        return [int(x) for x in body]
    except ValueError:
        raise DataError(f"line {line_no}: non-integer index in {token!r}") from None


def read_vocab_header(path: str | Path) -> dict[str, int] | None:
    """Vocabulary sizes from a '#vocab d=.. p=.. m=..' header line, if any."""
    for line in Path(path).read_text().splitlines():
        if line.startswith("#vocab"):
            out = {}
            for token in line[len("#vocab"):].split():
                key, _, value = token.partition("=")
                if key in ("d", "p", "m") and value.isdigit():
                    out[key] = int(value)
            if set(out) == {"d", "p", "m"}:
                return {"n_diseases": out["d"], "n_procedures": out["p"],
                        "n_medications": out["m"]}
            raise DataError(f"malformed #vocab header: {line!r}")
        if line.strip() and not line.startswith("#"):
            break
    return None


def load_ehr(path: str | Path, n_diseases: int, n_procedures: int,
             n_medications: int) -> list[PatientRecord]:
    """Parse the line-delimited record format with bounds validation."""
    records: list[PatientRecord] = []
    bounds = {"d": n_diseases, "p": n_procedures, "m": n_medications}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("|")
        if len(parts) < 2:
            raise DataError(f"line {line_no}: patient has no visits")
        pid = parts[0].strip()
        if not pid:
            raise DataError(f"line {line_no}: empty patient id")
        visits = []
        for chunk in parts[1:]:
            groups = chunk.split(";")
            if len(groups) != 3:
                raise DataError(
                    f"line {line_no}: visit needs 'd ; p ; m' groups, got {chunk!r}")
            d = _parse_group(groups[0], "d", line_no)
            p = _parse_group(groups[1], "p", line_no)
            m = _parse_group(groups[2], "m", line_no)
            for letter, idxs in (("d", d), ("p", p), ("m", m)):
                for i in idxs:
                    if not 0 <= i < bounds[letter]:
                        raise DataError(
                            f"line {line_no}: index {i} out of range for "
                            f"{letter!r} (vocabulary size {bounds[letter]})")
            visits.append(Visit(d, p, m))
        records.append(PatientRecord(pid, visits))
    return records


def save_ehr(path: str | Path, records: list[PatientRecord],
             vocab: tuple[int, int, int] | None = None) -> None:
    lines = ["# patient_id | d <i..> ; p <i..> ; m <i..> | ..."]
    if vocab is not None:
        lines.append(f"#vocab d={vocab[0]} p={vocab[1]} m={vocab[2]}")
    for rec in records:
        chunks = []
        for v in rec.visits:
            chunks.append("d " + " ".join(map(str, v.diseases))
                          + " ; p " + " ".join(map(str, v.procedures))
                          + " ; m " + " ".join(map(str, v.medications)))
        lines.append(rec.patient_id + " | " + " | ".join(chunks))
    Path(path).write_text("\n".join(lines) + "\n")


# -- DDI pair files ---------------------------------------------------------------

def load_ddi(path: str | Path, n_medications: int) -> np.ndarray:
    """Symmetric 0/1 matrix from a two-column pair list; (i,i) warned, skipped."""
    mat = np.zeros((n_medications, n_medications), dtype=np.float64)
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 2:
            raise DataError(f"line {line_no}: expected two columns, got {line!r}")
        try:
            i, j = int(fields[0]), int(fields[1])
        except ValueError:
            raise DataError(f"line {line_no}: non-integer pair {line!r}") from None
        if not (0 <= i < n_medications and 0 <= j < n_medications):
            raise DataError(f"line {line_no}: pair ({i},{j}) out of range")
        if i == j:
            warnings.warn(f"ddi line {line_no}: self-pair ({i},{i}) ignored")
            continue
        mat[i, j] = mat[j, i] = 1.0
    return mat


def save_ddi(path: str | Path, mat: np.ndarray) -> None:
    lines = ["# drug_i drug_j (symmetric interaction pairs)"]
    n = mat.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            if mat[i, j]:
                lines.append(f"{i} {j}")
    Path(path).write_text("\n".join(lines) + "\n")


# -- splits ------------------------------------------------------------------------

def split_patients(records: list[PatientRecord],
                   ratios: tuple[float, float, float] = (2 / 3, 1 / 6, 1 / 6),
                   seed: int = 0) -> tuple[list[PatientRecord], ...]:
    """Seeded shuffle then contiguous patient-level split (no visit leakage)."""
    rng = rng_for(seed, "split")
    order = rng.permutation(len(records))
    shuffled = [records[i] for i in order]
    n = len(records)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    return (shuffled[:n_train],
            shuffled[n_train:n_train + n_val],
            shuffled[n_train + n_val:])


# -- molecule catalog ----------------------------------------------------------------

@dataclass
class CatalogEntry:
    drug_id: int
    smiles: str
    sdf_name: str
    mol: MolGraph2D
    coords: np.ndarray


@dataclass
class Catalog:
    entries: list[CatalogEntry]

    @property
    def n_drugs(self) -> int:
        return len(self.entries)

    def mols(self) -> list[MolGraph2D]:
        return [e.mol for e in self.entries]


def round_robin_catalog(n_drugs: int, bundled: Catalog) -> Catalog:
    """Drug k maps to bundled molecule (k mod n); the synthetic pipeline's
    drug -> molecule assignment."""
    entries = []
    for k in range(n_drugs):
        src = bundled.entries[k % bundled.n_drugs]
        entries.append(CatalogEntry(k, src.smiles, src.sdf_name, src.mol, src.coords))
    return Catalog(entries)


def load_catalog(catalog_path: str | Path, sdf_path: str | Path) -> Catalog:
    """Load the drug table and pair each row with its SDF conformer record.

    The SDF record's atom order must match the SMILES parse; element
    sequences are validated.
    """
    records = {r.name: r for r in parse_sdf(Path(sdf_path).read_text())}
    entries: list[CatalogEntry] = []
    for line_no, line in enumerate(Path(catalog_path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise DataError(f"catalog line {line_no}: expected 3 tab-separated "
                            f"columns, got {line!r}")
        try:
            drug_id = int(fields[0])
        except ValueError:
            raise DataError(f"catalog line {line_no}: bad drug id {fields[0]!r}") from None
        smiles, sdf_name = fields[1], fields[2]
        if sdf_name not in records:
            raise DataError(f"catalog line {line_no}: SDF record {sdf_name!r} not found")
        mol = parse_smiles(smiles)
        rec = records[sdf_name]
        got = [a.element for a in rec.mol.atoms]
        want = [a.element for a in mol.atoms]
        if got != want:
            raise DataError(
                f"catalog line {line_no}: SDF record {sdf_name!r} atom elements "
                f"{got} do not match SMILES parse {want}")
        entries.append(CatalogEntry(drug_id, smiles, sdf_name, mol, rec.coords))
    ids = [e.drug_id for e in entries]
    if ids != list(range(len(entries))):
        raise DataError("catalog drug ids must be 0..n-1 in order")
    return Catalog(entries)


# -- synthetic EHR generator ------------------------------------------------------------

@dataclass
class SyntheticSpec:
    """Latent-cluster patient generator.

    Each patient draws a persistent condition cluster and keeps a persistent
    per-patient subset of that cluster's drug regimen, so medication history
    carries signal beyond the current diseases. Cluster disease pools overlap,
    which blurs per-disease marginals.
    """

    n_diseases: int = 60
    n_procedures: int = 30
    n_medications: int = 50
    n_patients: int = 500
    n_clusters: int = 12
    visit_count_probs: tuple = ((1, 0.10), (2, 0.40), (3, 0.30), (4, 0.20))
    label_noise: float = 0.1
    ddi_target_rate: tuple[float, float] = (0.05, 0.07)
    ddi_density: float = 0.08
    regimen_fraction: float = 0.6
    seed: int = 0

    def validate(self) -> None:
        for name in ("n_diseases", "n_procedures", "n_medications",
                     "n_patients", "n_clusters"):
            if getattr(self, name) <= 0:
                raise DataError(f"{name} must be positive")
        if not 0 <= self.label_noise < 1:
            raise DataError("label_noise must be in [0, 1)")


@dataclass
class _Cluster:
    diseases: list[int]
    procedures: list[int]
    drugs: list[int]


_SIMILARITY_CACHE: dict[int, np.ndarray] = {}


def _drug_similarity(n_meds: int) -> np.ndarray:
    """Fragment-set overlap between the molecules the round-robin assignment
    gives each drug pair; makes regimens chemically coherent so molecular
    knowledge carries signal."""
    if n_meds in _SIMILARITY_CACHE:
        return _SIMILARITY_CACHE[n_meds]
    from importlib import resources

    from .chem import brics_decompose
    assets = resources.files("molmedrec") / "assets"
    bundled = load_catalog(str(assets / "catalog.tsv"),
                           str(assets / "molecules.sdf"))
    keysets = [frozenset(f.canonical_key for f in brics_decompose(e.mol))
               for e in bundled.entries]
    n_cat = len(keysets)
    sim = np.zeros((n_meds, n_meds))
    for k in range(n_meds):
        for l in range(n_meds):
            a, b = keysets[k % n_cat], keysets[l % n_cat]
            sim[k, l] = len(a & b) / len(a | b)
    _SIMILARITY_CACHE[n_meds] = sim
    return sim


def _make_clusters(spec: SyntheticSpec, rng: np.random.Generator) -> list[_Cluster]:
    # disease pool restricted to 2/3 of the vocabulary so clusters overlap
    pool = rng.permutation(spec.n_diseases)[: max(spec.n_diseases * 2 // 3, 5)]
    sim = _drug_similarity(spec.n_medications)
    clusters = []
    for _ in range(spec.n_clusters):
        n_dis = int(rng.integers(4, 7))
        n_proc = int(rng.integers(2, 4))
        n_drug = int(rng.integers(5, 9))
        seed_drug = int(rng.integers(0, spec.n_medications))
        weights = 0.15 + sim[seed_drug]
        weights[seed_drug] = 0.0
        others = rng.choice(spec.n_medications, size=min(n_drug, spec.n_medications) - 1,
                            replace=False, p=weights / weights.sum())
        clusters.append(_Cluster(
            diseases=sorted(rng.choice(pool, size=min(n_dis, len(pool)),
                                       replace=False).tolist()),
            procedures=sorted(rng.choice(spec.n_procedures, size=n_proc,
                                         replace=False).tolist()),
            drugs=sorted({seed_drug} | set(others.tolist())),
        ))
    return clusters


def _visit_labels(regimen: list[int], spec: SyntheticSpec,
                  rng: np.random.Generator) -> list[int]:
    keep = [m for m in regimen if rng.random() >= spec.label_noise]
    others = [m for m in range(spec.n_medications) if m not in regimen]
    n_add = int(rng.binomial(len(regimen), spec.label_noise))
    added = rng.choice(others, size=min(n_add, len(others)), replace=False).tolist() \
        if others and n_add else []
    out = sorted(set(keep) | set(added))
    if not out:
        out = [int(rng.choice(regimen))]
    return out


def _pair_stats(records: list[PatientRecord], n_meds: int) -> tuple[np.ndarray, int]:
    co_count = np.zeros((n_meds, n_meds), dtype=np.int64)
    total_pairs = 0
    for rec in records:
        for v in rec.visits:
            ms = v.medications
            total_pairs += len(ms) * (len(ms) - 1) // 2
            for a_i in range(len(ms)):
                for b_i in range(a_i + 1, len(ms)):
                    co_count[ms[a_i], ms[b_i]] += 1
                    co_count[ms[b_i], ms[a_i]] += 1
    return co_count, total_pairs


def _build_ddi(records: list[PatientRecord], spec: SyntheticSpec,
               rng: np.random.Generator) -> np.ndarray:
    """Pick interaction pairs so the true-label DDI rate lands in the target
    band: greedily add co-occurring pairs toward the midpoint, then pad with
    never-co-occurring pairs up to the density target."""
    n = spec.n_medications
    lo, hi = spec.ddi_target_rate
    co_count, total_pairs = _pair_stats(records, n)
    if total_pairs == 0:
        raise DataError("no visit has two medications; cannot place DDI pairs")
    target_hits = 0.5 * (lo + hi) * total_pairs
    pairs = [(co_count[i, j], i, j) for i in range(n) for j in range(i + 1, n)]
    order = sorted(pairs, key=lambda t: (-t[0], t[1], t[2]))
    mat = np.zeros((n, n), dtype=np.float64)
    hits = 0
    for count, i, j in order:
        if count == 0 or hits >= target_hits:
            break
        if hits + count > hi * total_pairs:
            continue  # would overshoot the band
        mat[i, j] = mat[j, i] = 1.0
        hits += count
    rate = hits / total_pairs
    if not lo <= rate <= hi:
        raise DataError(
            f"could not reach DDI rate band [{lo}, {hi}]; got {rate:.4f}")
    want_total = int(spec.ddi_density * n * (n - 1) / 2)
    zero_pairs = [(i, j) for c, i, j in order if c == 0 and not mat[i, j]]
    rng.shuffle(zero_pairs)
    for i, j in zero_pairs:
        if mat.sum() / 2 >= want_total:
            break
        mat[i, j] = mat[j, i] = 1.0
    return mat


def synth_generate(spec: SyntheticSpec
                   ) -> tuple[list[PatientRecord], list[int], np.ndarray]:
    """Generate (patients, drug -> catalog-entry assignment, DDI matrix),
    fully determined by spec.seed. The assignment is round-robin over the
    bundled catalog (resolved by the caller, which knows the catalog size)."""
    spec.validate()
    rng = rng_for(spec.seed, "synth")
    clusters = _make_clusters(spec, rng)
    counts, probs = zip(*spec.visit_count_probs)
    records: list[PatientRecord] = []
    for pid in range(spec.n_patients):
        cluster = clusters[int(rng.integers(0, len(clusters)))]
        n_keep = max(2, int(round(spec.regimen_fraction * len(cluster.drugs))))
        regimen = sorted(rng.choice(cluster.drugs, size=min(n_keep, len(cluster.drugs)),
                                    replace=False).tolist())
        n_visits = int(rng.choice(counts, p=np.array(probs) / sum(probs)))
        visits = []
        for _ in range(n_visits):
            n_dis = min(int(rng.integers(3, 6)), len(cluster.diseases))
            dis = set(rng.choice(cluster.diseases, size=n_dis, replace=False).tolist())
            if rng.random() < 0.5:  # comorbidity noise from the full vocabulary
                dis.add(int(rng.integers(0, spec.n_diseases)))
            n_proc = min(int(rng.integers(1, 3)), len(cluster.procedures))
            proc = rng.choice(cluster.procedures, size=n_proc, replace=False).tolist()
            visits.append(Visit(sorted(dis), sorted(proc),
                                _visit_labels(regimen, spec, rng)))
        records.append(PatientRecord(f"P{pid:04d}", visits))
    ddi = _build_ddi(records, spec, rng)
    assignment = list(range(spec.n_medications))  # drug k -> catalog (k mod n_cat)
    return records, assignment, ddi
