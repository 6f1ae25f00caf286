"""Command-line entry point wiring every pipeline stage.

Config precedence: built-in defaults < --config JSON file < explicit flags.
Relative output paths are resolved against $MOLMEDREC_OUTDIR when set.
Exit codes: 0 success, 2 usage error, 3 unknown patient id, 4 data error.
"""

from __future__ import annotations

import json
import os
import shutil
import sys
from pathlib import Path

import click
import numpy as np

from .autograd import CheckpointError, load_checkpoint, load_into, no_grad
from .chem import MolError, build_graph3d, build_substructure_table
from .data import (
    DataError,
    SyntheticSpec,
    load_catalog,
    load_ddi,
    load_ehr,
    read_vocab_header,
    round_robin_catalog,
    save_ddi,
    save_ehr,
    split_patients,
    synth_generate,
)
from .encoders import Batch2D, Batch3D
from .estimator import MedicationRecommender
from .fusion import recommend as threshold_recommend
from .metrics import bootstrap_eval
from .pretrain import (
    PretrainConfig,
    PretrainModel,
    build_corpus,
    run_pretrain,
    save_pretrain_checkpoint,
    substructure_conformers,
)

OUTDIR_ENV = "MOLMEDREC_OUTDIR"

EXIT_NOT_FOUND = 3
EXIT_DATA = 4


def _out_path(path: str) -> Path:
    base = os.environ.get(OUTDIR_ENV)
    p = Path(path)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _fail(category: str, message: str, code: int) -> None:
    click.echo(f"error: category={category}: {message}", err=True)
    sys.exit(code)


def _guarded(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (DataError, MolError, CheckpointError) as exc:
        _fail("data", str(exc), EXIT_DATA)
    except FileNotFoundError as exc:
        _fail("io", str(exc), EXIT_DATA)


def _apply_config_file(ctx: click.Context) -> None:
    """Fill parameters from --config for every flag left at its default."""
    config_path = ctx.params.pop("config", None)
    if not config_path:
        return
    try:
        values = json.loads(Path(config_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        _fail("data", f"bad config file {config_path}: {exc}", EXIT_DATA)
    for name, value in values.items():
        key = name.replace("-", "_")
        if key not in ctx.params:
            continue
        if ctx.get_parameter_source(key) == click.core.ParameterSource.DEFAULT:
            ctx.params[key] = value


def config_option(fn):
    return click.option("--config", type=click.Path(exists=True), default=None,
                        help="JSON config file (defaults < file < flags).")(fn)


def _resolve_vocab(ehr_path, n_diseases, n_procedures, n_medications):
    header = read_vocab_header(ehr_path)
    sizes = {"n_diseases": n_diseases, "n_procedures": n_procedures,
             "n_medications": n_medications}
    for key, value in sizes.items():
        if value is None:
            if header is None:
                raise DataError(
                    f"{key} not given and {ehr_path} has no #vocab header")
            sizes[key] = header[key]
    return sizes


@click.group()
@click.version_option(package_name="molmedrec")
def main():
    """Medication recommendation with bimodal molecular knowledge."""


# -- gen-data ----------------------------------------------------------------------

@main.command("gen-data")
@click.option("--out-dir", default="data", show_default=True)
@click.option("--n-diseases", default=60, show_default=True)
@click.option("--n-procedures", default=30, show_default=True)
@click.option("--n-medications", default=50, show_default=True)
@click.option("--patients", default=500, show_default=True)
@click.option("--clusters", default=12, show_default=True)
@click.option("--noise", default=0.1, show_default=True, help="Label noise rate.")
@click.option("--ddi-density", default=0.08, show_default=True)
@click.option("--seed", default=0, show_default=True)
@config_option
@click.pass_context
def cmd_gen_data(ctx, out_dir, n_diseases, n_procedures, n_medications,
                 patients, clusters, noise, ddi_density, seed, **_):
    """Write a synthetic EHR dataset (ehr.txt, ddi.txt, catalog.tsv, molecules.sdf)."""
    _apply_config_file(ctx)
    p = ctx.params
    spec = SyntheticSpec(
        n_diseases=p["n_diseases"], n_procedures=p["n_procedures"],
        n_medications=p["n_medications"], n_patients=p["patients"],
        n_clusters=p["clusters"], label_noise=p["noise"],
        ddi_density=p["ddi_density"], seed=p["seed"])
    try:
        spec.validate()
    except DataError as exc:
        raise click.UsageError(str(exc)) from None
    records, _, ddi = _guarded(synth_generate, spec)
    out = _out_path(p["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    save_ehr(out / "ehr.txt", records,
             vocab=(spec.n_diseases, spec.n_procedures, spec.n_medications))
    save_ddi(out / "ddi.txt", ddi)
    from importlib import resources
    assets = resources.files("molmedrec") / "assets"
    bundled = load_catalog(str(assets / "catalog.tsv"), str(assets / "molecules.sdf"))
    catalog = round_robin_catalog(spec.n_medications, bundled)
    rows = ["# drug_id\tsmiles\tsdf_name"]
    rows += [f"{e.drug_id}\t{e.smiles}\t{e.sdf_name}" for e in catalog.entries]
    (out / "catalog.tsv").write_text("\n".join(rows) + "\n")
    shutil.copyfile(str(assets / "molecules.sdf"), out / "molecules.sdf")
    click.echo(f"wrote {len(records)} patients, {int(ddi.sum() / 2)} interaction "
               f"pairs, {catalog.n_drugs} drugs -> {out}")


# -- pretrain ----------------------------------------------------------------------

@main.command("pretrain")
@click.option("--molecules", required=True, type=click.Path(exists=True),
              help="Catalog TSV (drug_id, smiles, sdf_name).")
@click.option("--sdf", required=True, type=click.Path(exists=True))
@click.option("--epochs", default=300, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--tau-nt", default=0.1, show_default=True,
              help="Contrastive temperature.")
@click.option("--inclusive-denominator", is_flag=True, default=False,
              help="Include the positive pair in the denominator.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default="pretrain.ckpt", show_default=True)
@click.option("--log-csv", default=None, help="Loss CSV path (default <out>.csv).")
@click.option("--resume", type=click.Path(exists=True), default=None,
              help="Continue from a previous checkpoint.")
@config_option
@click.pass_context
def cmd_pretrain(ctx, **_):
    """Contrastive 2D/3D encoder pretraining over the molecule catalog."""
    _apply_config_file(ctx)
    p = ctx.params
    catalog = _guarded(load_catalog, p["molecules"], p["sdf"])
    corpus = _guarded(build_corpus, catalog)
    cfg = PretrainConfig(epochs=p["epochs"], batch_size=p["batch_size"],
                         lr=p["lr"], tau_nt=p["tau_nt"],
                         inclusive_denominator=p["inclusive_denominator"],
                         seed=p["seed"])
    result = _guarded(run_pretrain, corpus, cfg, resume_from=p["resume"],
                      log=click.echo)
    out = _out_path(p["out"])
    save_pretrain_checkpoint(out, result, cfg)
    csv_path = _out_path(p["log_csv"]) if p["log_csv"] else out.with_suffix(".csv")
    rows = ["epoch,loss,retrieval_acc"]
    rows += [f"{e},{l:.10g},{a:.10g}" for e, l, a in result.rows]
    csv_path.write_text("\n".join(rows) + "\n")
    click.echo(f"checkpoint -> {out} ({len(corpus)} corpus items)")


# -- train --------------------------------------------------------------------------

@main.command("train")
@click.option("--ehr", required=True, type=click.Path(exists=True))
@click.option("--ddi", "ddi_path", required=True, type=click.Path(exists=True))
@click.option("--molecules", required=True, type=click.Path(exists=True))
@click.option("--sdf", required=True, type=click.Path(exists=True))
@click.option("--pretrained", type=click.Path(exists=True), default=None,
              help="Pretraining checkpoint; omit to pretrain in-process.")
@click.option("--no-pretrain", is_flag=True, default=False,
              help="Ablation: randomly initialized frozen 2D encoder.")
@click.option("--no-visit-distill", is_flag=True, default=False,
              help="Ablation: latest-visit-only interaction.")
@click.option("--no-ddi-control", is_flag=True, default=False,
              help="Force the loss mixing weight to 1 (interaction term off).")
@click.option("--epochs", default=20, show_default=True)
@click.option("--pretrain-epochs", default=300, show_default=True)
@click.option("--lr", default=5e-4, show_default=True)
@click.option("--pretrain-lr", default=1e-3, show_default=True)
@click.option("--train-batch", default=2, show_default=True,
              help="Patients per optimizer step.")
@click.option("--batch-size", default=32, show_default=True,
              help="Pretraining batch size.")
@click.option("--tau-nt", default=0.1, show_default=True)
@click.option("--dim", default=128, show_default=True)
@click.option("--gnn-layers", default=4, show_default=True)
@click.option("--gvp-layers", default=3, show_default=True)
@click.option("--beta", default=0.95, show_default=True)
@click.option("--phi", default=0.06, show_default=True)
@click.option("--kappa-ddi", default=2.5, show_default=True)
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--n-diseases", type=int, default=None,
              help="Override the EHR #vocab header.")
@click.option("--n-procedures", type=int, default=None)
@click.option("--n-medications", type=int, default=None)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default="model.ckpt", show_default=True)
@click.option("--log-csv", default=None)
@config_option
@click.pass_context
def cmd_train(ctx, **_):
    """Train the recommender; logs per-epoch validation Jaccard/DDI."""
    _apply_config_file(ctx)
    p = ctx.params
    sizes = _guarded(_resolve_vocab, p["ehr"], p["n_diseases"],
                     p["n_procedures"], p["n_medications"])
    records = _guarded(load_ehr, p["ehr"], **sizes)
    ddi = _guarded(load_ddi, p["ddi_path"], sizes["n_medications"])
    catalog = _guarded(load_catalog, p["molecules"], p["sdf"])
    train, val, _test = split_patients(records, seed=p["seed"])
    est = MedicationRecommender(
        dim=p["dim"], gnn_layers=p["gnn_layers"], gvp_layers=p["gvp_layers"],
        pretrain_epochs=p["pretrain_epochs"], train_epochs=p["epochs"],
        batch_size=p["batch_size"], train_batch=p["train_batch"],
        pretrain_lr=p["pretrain_lr"], train_lr=p["lr"], tau_nt=p["tau_nt"],
        beta=p["beta"], phi=p["phi"], kappa_ddi=p["kappa_ddi"],
        threshold=p["threshold"], use_pretrain=not p["no_pretrain"],
        per_visit_distill=not p["no_visit_distill"],
        ddi_control=not p["no_ddi_control"], seed=p["seed"])
    _guarded(est.fit, train, catalog=catalog, ddi=ddi, **sizes,
             val_records=val, pretrained=p["pretrained"], log=click.echo)
    out = _out_path(p["out"])
    est.save(out, extra_meta={"split_seed": p["seed"]})
    csv_path = _out_path(p["log_csv"]) if p["log_csv"] else out.with_suffix(".csv")
    header = sorted({k for row in est.history_ for k in row})
    rows = [",".join(header)]
    rows += [",".join(f"{row.get(k, '')}" for k in header) for row in est.history_]
    csv_path.write_text("\n".join(rows) + "\n")
    click.echo(f"checkpoint -> {out}")


# -- eval ---------------------------------------------------------------------------

@main.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--ehr", required=True, type=click.Path(exists=True))
@click.option("--ddi", "ddi_path", required=True, type=click.Path(exists=True))
@click.option("--split", type=click.Choice(["test", "val", "train", "all"]),
              default="test", show_default=True)
@click.option("--rounds", default=10, show_default=True)
@click.option("--fraction", default=0.8, show_default=True)
@click.option("--seed", default=0, show_default=True,
              help="Bootstrap sampling seed.")
@click.option("--out-csv", default=None)
@config_option
@click.pass_context
def cmd_eval(ctx, **_):
    """Bootstrap evaluation report on a stored split."""
    _apply_config_file(ctx)
    p = ctx.params
    est = _guarded(MedicationRecommender.load, p["checkpoint"])
    manifest, _ = load_checkpoint(p["checkpoint"])
    records = _guarded(load_ehr, p["ehr"], **est.vocab_)
    ddi = _guarded(load_ddi, p["ddi_path"], est.vocab_["n_medications"])
    split_seed = manifest["meta"].get("split_seed", est.seed)
    train, val, test = split_patients(records, seed=split_seed)
    chosen = {"test": test, "val": val, "train": train, "all": records}[p["split"]]
    if not chosen:
        _fail("data", f"empty {p['split']} split", EXIT_DATA)
    report = bootstrap_eval(lambda pats: est.evaluate(pats, ddi), chosen,
                            rounds=p["rounds"], fraction=p["fraction"],
                            seed=p["seed"])
    click.echo(report.table())
    if p["out_csv"]:
        _out_path(p["out_csv"]).write_text(report.csv())


# -- recommend ------------------------------------------------------------------------

@main.command("recommend")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--ehr", required=True, type=click.Path(exists=True))
@click.option("--patient", required=True, help="Patient id from the EHR file.")
@click.option("--threshold", default=None, type=float,
              help="Override the checkpoint's decision threshold.")
@config_option
@click.pass_context
def cmd_recommend(ctx, **_):
    """Per-drug probabilities and the thresholded set for one patient."""
    _apply_config_file(ctx)
    p = ctx.params
    est = _guarded(MedicationRecommender.load, p["checkpoint"])
    records = _guarded(load_ehr, p["ehr"], **est.vocab_)
    match = [r for r in records if r.patient_id == p["patient"]]
    if not match:
        _fail("not-found", f"patient {p['patient']!r} not in {p['ehr']}",
              EXIT_NOT_FOUND)
    threshold = p["threshold"] if p["threshold"] is not None else est.threshold
    probs = est.predict_proba(match)[0][-1]  # newest visit
    chosen = threshold_recommend(probs, threshold)
    click.echo(f"patient {p['patient']}: visit {len(match[0].visits)} "
               f"({int(chosen.sum())} drugs over threshold {threshold})")
    for drug in np.lexsort((np.arange(len(probs)), -probs)):
        marker = "*" if chosen[drug] else " "
        click.echo(f" {marker} drug {drug:>3}  p={probs[drug]:.4f}")


# -- export-embeddings ---------------------------------------------------------------

@main.command("export-embeddings")
@click.option("--checkpoint", required=True, type=click.Path(exists=True),
              help="Pretraining checkpoint.")
@click.option("--molecules", required=True, type=click.Path(exists=True))
@click.option("--sdf", required=True, type=click.Path(exists=True))
@click.option("--modality", type=click.Choice(["2d", "3d", "both"]),
              default="2d", show_default=True)
@click.option("--out", default="embeddings.csv", show_default=True)
@config_option
@click.pass_context
def cmd_export_embeddings(ctx, **_):
    """Raw 128-dim molecule and substructure embeddings as CSV."""
    _apply_config_file(ctx)
    p = ctx.params
    catalog = _guarded(load_catalog, p["molecules"], p["sdf"])
    manifest, arrays = load_checkpoint(p["checkpoint"])
    model = PretrainModel(seed=0)
    _guarded(load_into, model.parameters(),
             {k: v for k, v in arrays.items() if not k.startswith("optim.")})
    table = build_substructure_table(catalog.mols())
    mols2d = catalog.mols() + [s.fragment for s in table.substructures]
    labels = [f"drug:{e.drug_id}" for e in catalog.entries] \
        + [f"substructure:{i}" for i in range(table.n_substructures)]
    out_rows = ["label,modality," + ",".join(f"e{i}" for i in range(128))]

    def emit(matrix, modality):
        for label, row in zip(labels, matrix):
            out_rows.append(f"{label},{modality}," + ",".join(f"{x:.8g}" for x in row))

    with no_grad():
        if p["modality"] in ("2d", "both"):
            emit(model.gin.encode(Batch2D(mols2d)).data, "2d")
        if p["modality"] in ("3d", "both"):
            graphs = [build_graph3d(e.mol, e.coords) for e in catalog.entries]
            graphs += substructure_conformers(catalog, table)
            emit(model.gvp.encode(Batch3D(graphs)).data, "3d")
    path = _out_path(p["out"])
    path.write_text("\n".join(out_rows) + "\n")
    click.echo(f"{len(out_rows) - 1} rows -> {path}")


if __name__ == "__main__":
    main()
