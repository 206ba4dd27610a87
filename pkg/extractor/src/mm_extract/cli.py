"""mm-extract command line: batch-extract a labeled video directory into a
cmafuse dataset directory."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .backends import get_backends
from .pipeline import ExtractionJob, Extractor


def read_labels(csv_path) -> list:
    """Rows of (sample id, video filename, label) from the labels CSV.

    Columns: `video` (filename within --videos), `label` (0/1), optional
    `id` (defaults to the video stem).
    """
    jobs = []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "video" not in reader.fieldnames:
            raise ValueError("labels CSV needs at least 'video' and 'label' columns")
        for row in reader:
            video = row["video"].strip()
            label = int(row["label"])
            sample_id = (row.get("id") or Path(video).stem).strip()
            jobs.append((sample_id, video, label))
    return jobs


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mm-extract",
                                     description="extract cmafuse embeddings from videos")
    parser.add_argument("--videos", required=True, help="directory of input videos")
    parser.add_argument("--labels", required=True, help="CSV with video,label[,id] rows")
    parser.add_argument("--out", required=True, help="dataset output directory")
    parser.add_argument("--backend", default="pretrained", choices=["pretrained", "stub"])
    parser.add_argument("--primary-cli", default="cmafuse",
                        help="engine CLI used for OCR postprocessing and validation")
    parser.add_argument("--skip-existing", action="store_true")
    parser.add_argument("--no-validate", action="store_true",
                        help="skip the engine validation pass at the end")
    args = parser.parse_args(argv)

    videos_dir = Path(args.videos)
    try:
        rows = read_labels(args.labels)
    except (OSError, ValueError, KeyError) as err:
        print(f"bad labels file: {err}", file=sys.stderr)
        return 2

    jobs = []
    for sample_id, video, label in rows:
        path = videos_dir / video
        if not path.exists():
            print(f"missing video: {path}", file=sys.stderr)
            return 2
        jobs.append(ExtractionJob(video=path, sample_id=sample_id, label=label))

    extractor = Extractor(get_backends(args.backend), args.out, primary_cli=args.primary_cli)
    results = extractor.run_jobs(jobs, skip_existing=args.skip_existing)
    manifest = extractor.build_manifest(results)
    if not args.no_validate:
        extractor.validate_with_engine(manifest)
    print(manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
