"""The extraction pipeline: video -> four embedding files + manifest entry.

Frame sampling is 1 fps capped at 100 (padding is the engine's job, so the
video file keeps its true row count). Audio comes from the WAV sidecar; a
missing or silent track produces a zero vector and clears the sample's
audio flag. OCR raw segments are written as JSON and postprocessed
exclusively by the engine's `preprocess-ocr` CLI before text embedding, so
there is a single text-cleaning implementation in the whole system.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import media, mmeb
from .backends import Backends


class ExtractionError(RuntimeError):
    pass


class IncompleteSample(ExtractionError):
    def __init__(self, sample_id, missing):
        super().__init__(f"sample {sample_id!r} is missing {missing}")
        self.sample_id = sample_id


@dataclass
class ExtractionJob:
    video: Path
    sample_id: str
    label: int | None = None

    def __post_init__(self):
        self.video = Path(self.video)


@dataclass
class SampleResult:
    sample_id: str
    label: int | None
    refs: dict = field(default_factory=dict)  # modality -> relative path
    has_audio_track: bool = True
    has_onscreen_text: bool = True
    transcript: str = ""
    frame_count: int = 0


class Extractor:
    def __init__(self, backends: Backends, out_dir, primary_cli: str = "cmafuse"):
        self.backends = backends
        self.out = Path(out_dir)
        self.primary_cli = primary_cli
        for sub in ("emb", "text", "ocr_raw", "ocr_clean"):
            (self.out / sub).mkdir(parents=True, exist_ok=True)

    # -- per-modality steps ----------------------------------------------

    def extract_video(self, job: ExtractionJob) -> tuple[Path, list]:
        frames, times = media.sample_frames(job.video)
        rows = self.backends.frame_embedder.embed_frames(frames)
        if rows.shape != (len(frames), 768):
            raise ExtractionError(f"frame embedder returned {rows.shape}")
        path = self.out / "emb" / f"{job.sample_id}_V.mmeb"
        mmeb.write_embedding(path, "V", rows)
        return path, times

    def extract_audio(self, job: ExtractionJob) -> tuple[Path, bool, np.ndarray | None, int]:
        loaded = media.load_audio(job.video)
        path = self.out / "emb" / f"{job.sample_id}_A.mmeb"
        if loaded is None or media.is_silent(loaded[0]):
            mmeb.write_embedding(path, "A", np.zeros(1024, dtype=np.float32))
            samples, rate = (loaded if loaded is not None else (np.zeros(0, np.float32), 16000))
            return path, False, samples, rate
        samples, rate = loaded
        vec = self.backends.audio_embedder.embed_audio(samples, rate)
        if vec.shape != (1024,):
            raise ExtractionError(f"audio embedder returned {vec.shape}")
        mmeb.write_embedding(path, "A", vec)
        return path, True, samples, rate

    def transcribe_and_embed(self, job: ExtractionJob, samples, rate) -> tuple[Path, str]:
        transcript = ""
        if samples is not None and samples.size:
            transcript = self.backends.transcriber.transcribe(samples, rate)
        text_path = self.out / "text" / f"{job.sample_id}.txt"
        text_path.write_text(transcript, encoding="utf-8")
        vec = self.backends.text_embedder.embed_text(transcript)
        path = self.out / "emb" / f"{job.sample_id}_T.mmeb"
        mmeb.write_embedding(path, "T", vec)
        return path, transcript

    def write_raw_ocr(self, job: ExtractionJob, times) -> Path:
        segments = self.backends.ocr_engine.read_frames(job.video, times)
        segments.sort(key=lambda d: d["frame_index"])
        path = self.out / "ocr_raw" / f"{job.sample_id}.json"
        path.write_text(json.dumps(segments, indent=1) + "\n", encoding="utf-8")
        return path

    def postprocess_ocr_batch(self) -> None:
        """Single source of truth: the engine CLI cleans/dedups/merges OCR text."""
        cmd = [
            self.primary_cli, "preprocess-ocr",
            "--in", str(self.out / "ocr_raw"),
            "--out", str(self.out / "ocr_clean"),
        ]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise ExtractionError(
                f"engine OCR postprocessing failed ({proc.returncode}): {proc.stderr.strip()}"
            )

    def embed_ocr(self, job: ExtractionJob) -> tuple[Path, bool]:
        clean_path = self.out / "ocr_clean" / f"{job.sample_id}.txt"
        text = clean_path.read_text(encoding="utf-8") if clean_path.exists() else ""
        vec = self.backends.text_embedder.embed_text(text)
        path = self.out / "emb" / f"{job.sample_id}_O.mmeb"
        mmeb.write_embedding(path, "O", vec)
        return path, bool(text.strip())

    # -- orchestration -----------------------------------------------------

    def run_jobs(self, jobs, skip_existing: bool = False) -> list:
        jobs = list(jobs)
        results = {}
        for job in jobs:
            result = SampleResult(sample_id=job.sample_id, label=job.label)
            v_path, times = self.extract_video(job)
            result.refs["V"] = v_path
            result.frame_count = len(times)
            a_path, has_audio, samples, rate = self.extract_audio(job)
            result.refs["A"] = a_path
            result.has_audio_track = has_audio
            t_path, transcript = self.transcribe_and_embed(job, samples, rate)
            result.refs["T"] = t_path
            result.transcript = transcript
            self.write_raw_ocr(job, times)
            results[job.sample_id] = result
        self.postprocess_ocr_batch()
        for job in jobs:
            o_path, has_text = self.embed_ocr(job)
            results[job.sample_id].refs["O"] = o_path
            results[job.sample_id].has_onscreen_text = has_text
        return [results[j.sample_id] for j in jobs]

    def build_manifest(self, results, path=None) -> Path:
        path = Path(path) if path else self.out / "manifest.json"
        root = path.resolve().parent
        samples = []
        for r in results:
            missing = [m for m in ("T", "O", "A", "V")
                       if m not in r.refs or not Path(r.refs[m]).exists()]
            if missing or r.label is None:
                raise IncompleteSample(r.sample_id, missing or "label")
            samples.append(
                {
                    "id": r.sample_id,
                    "label": int(r.label),
                    "has_onscreen_text": r.has_onscreen_text,
                    "has_audio_track": r.has_audio_track,
                    "embeddings": {
                        m: str(Path(p).resolve().relative_to(root))
                        for m, p in sorted(r.refs.items())
                    },
                }
            )
        doc = {
            "format_version": mmeb.FORMAT_VERSION,
            "provenance": json.dumps({"extractor": "mm-extract",
                                      "backends": self.backends.versions()}, sort_keys=True),
            "samples": samples,
        }
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def validate_with_engine(self, manifest_path) -> None:
        proc = subprocess.run([self.primary_cli, "validate", str(manifest_path)],
                              capture_output=True, text=True)
        if proc.returncode != 0:
            raise ExtractionError(f"engine validation failed:\n{proc.stdout}{proc.stderr}")
