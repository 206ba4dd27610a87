"""Extractor backends: the deterministic stub set plus the pretrained set.

Each backend bundle supplies the five extractor roles. The stub backends are
content-hash driven: same media bytes, same embedding, which keeps the whole
pipeline testable without model weights. The pretrained set wraps the real
models and needs the `models` extra installed plus cached weights.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


def _digest_rng(*parts) -> np.random.Generator:
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, str):
            part = part.encode("utf-8")
        h.update(part)
        h.update(b"\x00")
    seed = int.from_bytes(h.digest()[:8], "little")
    return np.random.default_rng(seed)


@dataclass
class Backends:
    frame_embedder: object
    audio_embedder: object
    transcriber: object
    text_embedder: object
    ocr_engine: object

    def versions(self) -> dict:
        return {
            "frame_embedder": self.frame_embedder.version,
            "audio_embedder": self.audio_embedder.version,
            "transcriber": self.transcriber.version,
            "text_embedder": self.text_embedder.version,
            "ocr_engine": self.ocr_engine.version,
        }


class StubFrameEmbedder:
    version = "stub-frame-sha256-v1"
    dim = 768

    def embed_frames(self, frames) -> np.ndarray:
        rows = []
        for frame in frames:
            rng = _digest_rng(b"frame", np.ascontiguousarray(frame).tobytes())
            rows.append(rng.standard_normal(self.dim).astype(np.float32))
        return np.stack(rows)


class StubAudioEmbedder:
    version = "stub-audio-sha256-v1"
    dim = 1024

    def embed_audio(self, samples, rate) -> np.ndarray:
        rng = _digest_rng(b"audio", np.asarray(samples, dtype=np.float32).tobytes(),
                          str(rate))
        return rng.standard_normal(self.dim).astype(np.float32)


class StubTranscriber:
    """Deterministic placeholder speech: words derived from the waveform hash."""

    version = "stub-transcriber-v1"

    def transcribe(self, samples, rate) -> str:
        samples = np.asarray(samples, dtype=np.float32)
        if samples.size == 0 or float(np.max(np.abs(samples))) < 1e-4:
            return ""
        token = hashlib.sha256(samples.tobytes()).hexdigest()[:12]
        return f"synthetic speech {token}"


class StubTextEmbedder:
    version = "stub-text-sha256-v1"
    dim = 768

    def embed_text(self, text: str) -> np.ndarray:
        rng = _digest_rng(b"text", text)
        return rng.standard_normal(self.dim).astype(np.float32)


class SidecarOcrEngine:
    """Reads planted per-frame text from `<video stem>.ocr.json` when present.

    Stands in for a real OCR engine in tests: the sidecar mimics the raw
    engine output (list of {frame_index, text}); videos without a sidecar
    read as text-free.
    """

    version = "stub-ocr-sidecar-v1"

    def read_frames(self, video_path, times) -> list:
        sidecar = Path(video_path).with_suffix(".ocr.json")
        if not sidecar.exists():
            return []
        doc = json.loads(sidecar.read_text(encoding="utf-8"))
        wanted = set(times)
        return [
            {"frame_index": int(d["frame_index"]), "text": str(d["text"])}
            for d in doc
            if int(d["frame_index"]) in wanted
        ]


def stub_backends() -> Backends:
    return Backends(
        frame_embedder=StubFrameEmbedder(),
        audio_embedder=StubAudioEmbedder(),
        transcriber=StubTranscriber(),
        text_embedder=StubTextEmbedder(),
        ocr_engine=SidecarOcrEngine(),
    )


def pretrained_backends() -> Backends:
    from . import pretrained

    return Backends(
        frame_embedder=pretrained.VitFrameEmbedder(),
        audio_embedder=pretrained.Wav2Vec2AudioEmbedder(),
        transcriber=pretrained.WhisperTranscriber(),
        text_embedder=pretrained.ToxicityTextEmbedder(),
        ocr_engine=pretrained.PaddleOcrEngine(),
    )


def get_backends(name: str) -> Backends:
    if name == "stub":
        return stub_backends()
    if name == "pretrained":
        return pretrained_backends()
    raise ValueError(f"unknown backend set {name!r}; expected 'stub' or 'pretrained'")
