"""Command-line front end: run experiments, generate synthetic datasets,
postprocess OCR segments, validate datasets, and re-print run reports."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import embedding_store as es
from . import experiments as ex
from . import ocr_textproc as ot
from . import synth as sy


def _fail_spec(err: ex.SpecError) -> int:
    record = {"error": "malformed spec", "field": getattr(err, "field", "?"), "message": str(err)}
    print(json.dumps(record), file=sys.stderr)
    return 2


def cmd_run(args) -> int:
    try:
        spec = ex.load_spec(args.spec)
    except ex.SpecError as err:
        return _fail_spec(err)
    try:
        run_dir = ex.run_spec(spec, out_root=args.out)
    except ex.SpecError as err:
        return _fail_spec(err)
    print(run_dir)
    return 0


def cmd_synth(args) -> int:
    try:
        doc = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        print(json.dumps({"error": "malformed spec", "field": "spec", "message": str(err)}),
              file=sys.stderr)
        return 2
    spec_out = doc.pop("out", None)
    out = args.out or spec_out
    if not out:
        print(json.dumps({"error": "malformed spec", "field": "out",
                          "message": "output directory required"}), file=sys.stderr)
        return 2
    try:
        spec = sy.SynthSpec.from_dict(doc)
    except (TypeError, ValueError) as err:
        print(json.dumps({"error": "malformed spec", "field": "synth", "message": str(err)}),
              file=sys.stderr)
        return 2
    manifest = sy.gen_synthetic(spec, out)
    print(manifest)
    return 0


def cmd_preprocess_ocr(args) -> int:
    in_dir, out_dir = Path(args.in_dir), Path(args.out_dir)
    if not in_dir.is_dir():
        print(f"input directory not found: {in_dir}", file=sys.stderr)
        return 1
    out_dir.mkdir(parents=True, exist_ok=True)
    stopwords = None
    if args.stopwords is not None:
        stopwords = ot.load_stopwords(args.stopwords)
    n = 0
    for path in sorted(in_dir.glob("*.json")):
        doc = json.loads(path.read_text(encoding="utf-8"))
        segments = [ot.OcrSegment(int(d["frame_index"]), str(d["text"])) for d in doc]
        segments.sort(key=lambda s: s.frame_index)
        text = ot.postprocess_segments(
            segments,
            threshold=args.threshold,
            min_overlap=args.min_overlap,
            stopwords=stopwords,
        )
        (out_dir / f"{path.stem}.txt").write_text(text, encoding="utf-8")
        n += 1
    print(f"processed {n} videos -> {out_dir}")
    return 0


def cmd_validate(args) -> int:
    try:
        manifest = es.load_manifest(args.manifest)
    except (es.DatasetError, FileNotFoundError) as err:
        print(f"INVALID manifest: {err}")
        return 1
    reports = es.validate_manifest(manifest)
    n_bad = 0
    for report in reports:
        if report.ok:
            print(f"ok   {report.sample_id}")
        else:
            n_bad += 1
            issues = "; ".join(f"{i.modality}[{i.kind}] {i.message}" for i in report.issues)
            print(f"FAIL {report.sample_id}: {issues}")
    print(f"{len(reports) - n_bad}/{len(reports)} samples valid")
    return 0 if n_bad == 0 else 1


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    table = run_dir / "results.txt"
    if table.exists():
        print(table.read_text(encoding="utf-8"), end="")
        return 0
    csv_path = run_dir / "results.csv"
    if csv_path.exists():
        print(csv_path.read_text(encoding="utf-8"), end="")
        return 0
    print(f"no results found under {run_dir}", file=sys.stderr)
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmafuse",
                                     description="cross-modal attention fusion engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment spec (JSON)")
    p.add_argument("spec")
    p.add_argument("--out", default=None, help="override the output root")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("synth", help="generate a synthetic dataset from a spec (JSON)")
    p.add_argument("spec")
    p.add_argument("--out", default=None, help="override the output directory")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("preprocess-ocr", help="clean/dedup/merge raw per-video OCR JSON")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--stopwords", default=None,
                   help="enable stopword removal with this word list file")
    p.add_argument("--threshold", type=float, default=ot.DEFAULT_DEDUP_THRESHOLD)
    p.add_argument("--min-overlap", type=int, default=ot.DEFAULT_MIN_OVERLAP)
    p.set_defaults(fn=cmd_preprocess_ocr)

    p = sub.add_parser("validate", help="validate a dataset manifest and its embeddings")
    p.add_argument("manifest")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("report", help="print the tables of a finished run directory")
    p.add_argument("run_dir")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
