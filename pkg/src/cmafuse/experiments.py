"""Config-driven experiment families: single runs, the unimodal suite, the
modality-decrease table, query/key sweeps, attention-key exclusion, the
stopword ablation, and model-efficiency reporting.

A run directory gets a resolved spec snapshot, machine CSVs (repr floats,
byte-reproducible from spec + seeds), and a human-readable text table. Timing
columns live in a separate CSV because wall-clock is not reproducible.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import dataclass, field, replace
from itertools import combinations
from pathlib import Path

from . import embedding_store as es
from . import metrics as mx
from . import nn_core as nn
from . import train_eval as te
from .fusion_models import AttentionConfig, Model, ModelConfig, build_model, param_count
from .metrics import MetricsReport

FAMILIES = (
    "single",
    "unimodal-suite",
    "modality-decrease",
    "qk-sweep",
    "cma-key-ablation",
    "stopword-ablation",
    "efficiency",
)

CANONICAL = ("T", "O", "A", "V")

# Per-subset key/query assignments used by the modality-decrease table.
DEFAULT_DECREASE_ROWS = [
    {"modalities": "TO", "key": "T", "query": "O"},
    {"modalities": "TA", "key": "T", "query": "A"},
    {"modalities": "TV", "key": "T", "query": "V"},
    {"modalities": "OA", "key": "A", "query": "O"},
    {"modalities": "OV", "key": "V", "query": "O"},
    {"modalities": "AV", "key": "A", "query": "V"},
    {"modalities": "TOA", "key": "TO", "query": "A"},
    {"modalities": "TOV", "key": "TV", "query": "O"},
    {"modalities": "TVA", "key": "TV", "query": "A"},
    {"modalities": "OAV", "key": "OA", "query": "V"},
    {"modalities": "TOAV", "key": "TAV", "query": "O"},
]

# Attention-key subsets for the exclusion ablation (query fixed to O).
KEY_ABLATION_ROWS = [
    ("Audio only", ("A",)),
    ("Video only", ("V",)),
    ("Transcript only", ("T",)),
    ("Audio + Video", ("A", "V")),
    ("Audio + Transcript", ("A", "T")),
    ("Video + Transcript", ("V", "T")),
    ("MM-HSD (A+V+T)", ("A", "V", "T")),
]

METRIC_COLUMNS = ("acc", "m_f1", "f1_h", "p_h", "r_h", "p_m", "r_m")


class SpecError(ValueError):
    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class ExperimentSpec:
    family: str
    out: str
    manifest: str | None = None
    seeds: tuple = (0,)
    split_seed: int = 0
    folds: tuple | None = None
    model: dict = field(default_factory=dict)
    hyperparams: dict = field(default_factory=dict)
    grid: dict | None = None  # single family: search this grid first
    sweep_mode: str = "cma_s"  # qk-sweep: cma_s or cma_lf
    modalities: str = "TOAV"  # qk-sweep universe
    rows: list | None = None  # modality-decrease assignments
    stopword_manifest: str | None = None
    name: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise SpecError("family", f"unknown family {self.family!r}; expected {FAMILIES}")
        if not self.out:
            raise SpecError("out", "output directory is required")
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise SpecError("seeds", "need at least one seed")
        if self.folds is not None:
            self.folds = tuple(int(f) for f in self.folds)
        if self.manifest is None:
            raise SpecError("manifest", "manifest path is required")
        if self.family == "stopword-ablation" and not self.stopword_manifest:
            raise SpecError("stopword_manifest", "stopword-ablation needs a second manifest")
        if self.sweep_mode not in ("cma_s", "cma_lf"):
            raise SpecError("sweep_mode", f"must be cma_s or cma_lf, got {self.sweep_mode!r}")
        if self.grid is not None and self.family != "single":
            raise SpecError("grid", "hyperparameter grids only apply to the single family")
        for m in self.modalities:
            if m not in CANONICAL:
                raise SpecError("modalities", f"unknown modality {m!r}")
        if len(self.modalities) < 2 and self.family == "qk-sweep":
            raise SpecError("modalities", "qk-sweep needs at least two modalities")


_SPEC_KEYS = set(ExperimentSpec.__dataclass_fields__)


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SpecError("spec", f"no such spec file: {path}")
    except json.JSONDecodeError as e:
        raise SpecError("spec", f"not valid JSON: {e}")
    if not isinstance(doc, dict):
        raise SpecError("spec", "top level must be an object")
    unknown = set(doc) - _SPEC_KEYS
    if unknown:
        raise SpecError(sorted(unknown)[0], "unknown spec field")
    missing = {"family", "out"} - set(doc)
    if missing:
        raise SpecError(sorted(missing)[0], "required field missing")
    return ExperimentSpec(**doc)


def qk_assignments(modalities="TOAV"):
    """Every (subset of size >= 2, query, key=rest) assignment, canonical order."""
    mods = tuple(m for m in CANONICAL if m in modalities)
    out = []
    for size in range(2, len(mods) + 1):
        for subset in combinations(mods, size):
            for q in subset:
                keys = tuple(m for m in subset if m != q)
                out.append(("".join(subset), q, keys))
    return out


@dataclass
class RowSpec:
    label: str
    config: ModelConfig
    fields: dict = field(default_factory=dict)  # extra table columns
    manifest_key: str = "main"  # which dataset the row trains on


def _base_model_kwargs(spec) -> dict:
    kwargs = dict(spec.model)
    kwargs.pop("mode", None)
    kwargs.pop("active_modalities", None)
    kwargs.pop("attention", None)
    kwargs.pop("cma_key_subset", None)
    return kwargs


def _attention_from(doc) -> AttentionConfig:
    return AttentionConfig(query=doc["query"], keys=tuple(doc["keys"]))


def build_rows(spec: ExperimentSpec) -> list:
    """Translate one experiment family into concrete (label, config) rows."""
    base = _base_model_kwargs(spec)
    fam = spec.family

    if fam == "single":
        doc = dict(spec.model)
        if "mode" not in doc:
            raise SpecError("model.mode", "single family needs an explicit model mode")
        config = ModelConfig.from_dict(doc)
        return [RowSpec(label=config.mode, config=config)]

    if fam == "unimodal-suite":
        return [
            RowSpec(label=m, config=ModelConfig(mode="unimodal", active_modalities=(m,), **base),
                    fields={"modality": m})
            for m in CANONICAL
        ]

    if fam == "modality-decrease":
        rows = spec.rows if spec.rows is not None else DEFAULT_DECREASE_ROWS
        out = []
        for i, row in enumerate(rows):
            for need in ("modalities",):
                if need not in row:
                    raise SpecError(f"rows[{i}].{need}", "required field missing")
            mods = tuple(m for m in CANONICAL if m in row["modalities"])
            if len(mods) == 1:
                config = ModelConfig(mode="unimodal", active_modalities=mods, **base)
                out.append(RowSpec(label=row["modalities"], config=config,
                                   fields={"modalities": row["modalities"], "key": "-",
                                           "query": "-"}))
                continue
            for need in ("key", "query"):
                if need not in row:
                    raise SpecError(f"rows[{i}].{need}", "required field missing")
            att = AttentionConfig(query=row["query"], keys=tuple(row["key"]))
            config = ModelConfig(mode="mm_hsd", active_modalities=mods, attention=att, **base)
            out.append(RowSpec(label=row["modalities"], config=config,
                               fields={"modalities": row["modalities"], "key": row["key"],
                                       "query": row["query"]}))
        return out

    if fam == "qk-sweep":
        out = []
        for subset, q, keys in qk_assignments(spec.modalities):
            att = AttentionConfig(query=q, keys=keys)
            mods = tuple(m for m in CANONICAL if m in subset)
            config = ModelConfig(mode=spec.sweep_mode, active_modalities=mods,
                                 attention=att, **base)
            out.append(RowSpec(label=subset, config=config,
                               fields={"modalities": subset, "key": "".join(keys), "query": q}))
        return out

    if fam == "cma-key-ablation":
        att = AttentionConfig(query="O", keys=("T", "A", "V"))
        out = []
        for label, subset in KEY_ABLATION_ROWS:
            config = ModelConfig(mode="mm_hsd", attention=att, cma_key_subset=subset, **base)
            out.append(RowSpec(label=label, config=config,
                               fields={"keys": "".join(k for k in CANONICAL if k in subset),
                                       "query": "O"}))
        return out

    if fam == "stopword-ablation":
        att_doc = spec.model.get("attention", {"query": "O", "keys": ["T", "A", "V"]})
        att = _attention_from(att_doc)
        config = ModelConfig(mode="mm_hsd", attention=att, **base)
        return [
            RowSpec(label="MM-HSD", config=config, manifest_key="main"),
            RowSpec(label="MM-HSD (removing stopwords)", config=config,
                    manifest_key="stopwords"),
        ]

    if fam == "efficiency":
        att = AttentionConfig(query="O", keys=("T", "A", "V"))
        rows = [RowSpec(label=m, config=ModelConfig(mode="unimodal", active_modalities=(m,),
                                                    **base))
                for m in ("A", "T", "O", "V")]
        rows += [
            RowSpec(label="CMA-S", config=ModelConfig(mode="cma_s", attention=att, **base)),
            RowSpec(label="MM-HSD", config=ModelConfig(mode="mm_hsd", attention=att, **base)),
            RowSpec(label="w/o CMA", config=ModelConfig(mode="concat_lf", **base)),
            RowSpec(label="CMA-LF", config=ModelConfig(mode="cma_lf", attention=att, **base)),
        ]
        return rows

    raise SpecError("family", f"unhandled family {fam!r}")


def _next_run_dir(root: Path, family: str) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    n = 0
    while True:
        candidate = root / f"{family}-{n:04d}"
        if not candidate.exists():
            candidate.mkdir()
            return candidate
        n += 1


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    path.write_text(buf.getvalue(), encoding="utf-8")


@dataclass
class RowResult:
    row: RowSpec
    cv: te.CvResult


def _search_grid(spec: ExperimentSpec, config, manifest, store, run_dir: Path):
    """Pick hyperparameters by validation M-F1 over the spec's grid."""
    baseline = te.HyperParams(**spec.hyperparams)
    result = te.grid_search(manifest, config, spec.grid, seed=spec.seeds[0],
                            split_seed=spec.split_seed, folds=spec.folds,
                            max_epochs=baseline.max_epochs, store=store)
    rows = [[hp.lr, hp.l1, hp.l2, hp.dropout, hp.patience, repr(score)]
            for hp, score in result.leaderboard]
    _write_csv(run_dir / "grid_leaderboard.csv",
               ["lr", "l1", "l2", "dropout", "patience", "val_m_f1"], rows)
    return replace(result.best, batch_size=baseline.batch_size,
                   max_epochs=baseline.max_epochs)


def run_rows(spec: ExperimentSpec, rows, manifests, stores, hp=None) -> list:
    hp = hp if hp is not None else te.HyperParams(**spec.hyperparams)
    results = []
    for row in rows:
        manifest = manifests[row.manifest_key]
        store = stores[row.manifest_key]
        cv = te.run_cv(manifest, row.config, hp, seeds=spec.seeds,
                       split_seed=spec.split_seed, folds=spec.folds, store=store)
        results.append(RowResult(row=row, cv=cv))
    return results


def _results_tables(run_dir: Path, spec, results):
    extra_cols = sorted({k for r in results for k in r.row.fields})
    header = ["label", *extra_cols]
    for m in METRIC_COLUMNS:
        header += [f"{m}_mean", f"{m}_std"]
    rows = []
    for r in results:
        agg = r.cv.aggregate
        row = [r.row.label, *(str(r.row.fields.get(c, "")) for c in extra_cols)]
        for m in METRIC_COLUMNS:
            row += [repr(getattr(agg.mean, m)), repr(getattr(agg.std, m))]
        rows.append(row)
    _write_csv(run_dir / "results.csv", header, rows)

    lines = []
    label_w = max(24, max(len(r.row.label) for r in results) + 2)
    cols = ["ACC", "M-F1", "F1(H)", "P(H)", "R(H)", "P(M)", "R(M)"]
    lines.append("Model".ljust(label_w) + "".join(c.rjust(14) for c in cols))
    for r in results:
        agg = r.cv.aggregate
        cells = [agg.cell(m).rjust(14) for m in METRIC_COLUMNS]
        lines.append(r.row.label.ljust(label_w) + "".join(cells))
    (run_dir / "results.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _per_seed_csv(run_dir: Path, results):
    header = ["label", "seed", "chosen_fold", *METRIC_COLUMNS]
    rows = []
    for r in results:
        for sr in r.cv.per_seed:
            rows.append(
                [r.row.label, sr.seed, sr.chosen_fold]
                + [repr(getattr(sr.report, m)) for m in METRIC_COLUMNS]
            )
    _write_csv(run_dir / "per_seed.csv", header, rows)


def _history_csv(run_dir: Path, results):
    header = ["label", "seed", "fold", "epoch", "train_loss", "val_loss", "lr"]
    rows = []
    for r in results:
        for sr in r.cv.per_seed:
            for fold_pos, history in enumerate(sr.fold_histories):
                for h in history:
                    rows.append([r.row.label, sr.seed, fold_pos, h["epoch"],
                                 repr(h["train_loss"]), repr(h["val_loss"]), repr(h["lr"])])
    _write_csv(run_dir / "history.csv", header, rows)


def _spec_snapshot(run_dir: Path, spec, rows):
    doc = {
        "family": spec.family,
        "manifest": spec.manifest,
        "stopword_manifest": spec.stopword_manifest,
        "seeds": list(spec.seeds),
        "split_seed": spec.split_seed,
        "folds": list(spec.folds) if spec.folds is not None else None,
        "hyperparams": te.HyperParams(**spec.hyperparams).as_dict(),
        "grid": spec.grid,
        "sweep_mode": spec.sweep_mode,
        "modalities": spec.modalities,
        "rows": [
            {"label": r.label, "fields": r.fields, "config": r.config.to_dict()} for r in rows
        ],
    }
    (run_dir / "spec_snapshot.json").write_text(
        json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8"
    )


def _save_checkpoints(run_dir: Path, results):
    for r in results:
        for sr in r.cv.per_seed:
            model = build_model(r.row.config, seed=0)
            model.params.load_values(sr.best_values)
            safe = r.row.label.replace(" ", "_").replace("/", "-")
            nn.save_params(model.params, run_dir / f"ckpt_{safe}_seed{sr.seed}.mmpk")


def run_efficiency(spec: ExperimentSpec, run_dir: Path, rows, manifest, store):
    hp = te.HyperParams(**spec.hyperparams)
    plan = es.split_dataset(manifest, seed=spec.split_seed)
    fold_idx = (spec.folds or (0,))[0]
    fold = plan.folds[fold_idx]

    det_rows, time_rows = [], []
    for row in rows:
        model = build_model(row.config, seed=spec.seeds[0])
        n_par = param_count(model)
        ckpt = run_dir / f"ckpt_{row.label.replace(' ', '_').replace('/', '-')}.mmpk"
        nn.save_params(model.params, ckpt)
        size = ckpt.stat().st_size

        t0 = time.perf_counter()
        _, state, _ = te.train(model, store, fold, hp, seed=spec.seeds[0])
        total_train = time.perf_counter() - t0
        epochs = max(len(state.history), 1)

        t0 = time.perf_counter()
        te.evaluate_report(model, store, plan.test_ids)
        test_time = time.perf_counter() - t0

        det_rows.append([row.label, n_par, size])
        time_rows.append(
            [row.label, repr(total_train / epochs), repr(total_train), repr(test_time)]
        )
    _write_csv(run_dir / "efficiency.csv", ["label", "n_params", "checkpoint_bytes"], det_rows)
    _write_csv(run_dir / "efficiency_timings.csv",
               ["label", "train_time_per_epoch_s", "total_train_time_s", "test_time_s"],
               time_rows)
    lines = ["Model".ljust(24) + "# Par".rjust(12) + "Size (MB)".rjust(12)]
    for label, n_par, size in det_rows:
        lines.append(label.ljust(24) + str(n_par).rjust(12) + f"{size / 1e6:.3f}".rjust(12))
    (run_dir / "results.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_spec(spec: ExperimentSpec, out_root=None) -> Path:
    """Dispatch one experiment spec; returns the fresh run directory."""
    root = Path(os.environ.get("CMAFUSE_OUT_ROOT") or out_root or spec.out)
    rows = build_rows(spec)
    run_dir = _next_run_dir(root, spec.family)
    _spec_snapshot(run_dir, spec, rows)

    manifests, stores = {}, {}
    if spec.manifest is not None:
        manifests["main"] = es.load_manifest(spec.manifest)
        stores["main"] = te.DataStore(manifests["main"])
    if spec.stopword_manifest is not None:
        manifests["stopwords"] = es.load_manifest(spec.stopword_manifest)
        stores["stopwords"] = te.DataStore(manifests["stopwords"])

    if spec.family == "efficiency":
        run_efficiency(spec, run_dir, rows, manifests["main"], stores["main"])
        return run_dir

    hp = None
    if spec.grid is not None:
        hp = _search_grid(spec, rows[0].config, manifests["main"], stores["main"], run_dir)
    results = run_rows(spec, rows, manifests, stores, hp=hp)
    _results_tables(run_dir, spec, results)
    _per_seed_csv(run_dir, results)
    _history_csv(run_dir, results)
    if spec.family == "single":
        _save_checkpoints(run_dir, results)
        agg = results[0].cv.aggregate
        report = {
            "mean": agg.mean.as_dict(),
            "std": agg.std.as_dict(),
            "n_runs": agg.n_runs,
            "cells": {m: agg.cell(m) for m in METRIC_COLUMNS},
        }
        (run_dir / "report.json").write_text(
            json.dumps(report, indent=1, sort_keys=True) + "\n", encoding="utf-8"
        )
    return run_dir
