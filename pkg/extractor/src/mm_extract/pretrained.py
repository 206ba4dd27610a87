"""Wrappers around the pretrained extractor models (lazy imports).

Model identifiers are pinned here and recorded in dataset provenance. All of
these need the `models` extra (torch + transformers; PaddleOCR separately)
and locally cached weights; nothing here is touched by the stub pipeline.
"""

from __future__ import annotations

import numpy as np

VIT_MODEL = "google/vit-base-patch16-224-in21k"
WAV2VEC2_MODEL = "facebook/wav2vec2-large-xlsr-53"
WHISPER_MODEL = "openai/whisper-base"
TOXICITY_MODEL = "unitary/toxic-bert"


def _require(module_names):
    import importlib

    mods = []
    for name in module_names:
        try:
            mods.append(importlib.import_module(name))
        except ImportError as e:
            raise ImportError(
                f"{name} is required for pretrained backends; install the 'models' extra"
            ) from e
    return mods


class VitFrameEmbedder:
    """Per-frame 768-dim CLS embedding from a pretrained vision transformer."""

    version = f"vit:{VIT_MODEL}"
    dim = 768

    def __init__(self):
        _require(["torch", "transformers"])
        from transformers import ViTImageProcessor, ViTModel

        self._processor = ViTImageProcessor.from_pretrained(VIT_MODEL)
        self._model = ViTModel.from_pretrained(VIT_MODEL).eval()

    def embed_frames(self, frames) -> np.ndarray:
        import torch

        rgb = [frame[:, :, ::-1] for frame in frames]  # cv2 gives BGR
        inputs = self._processor(images=rgb, return_tensors="pt")
        with torch.no_grad():
            out = self._model(**inputs)
        return out.last_hidden_state[:, 0, :].numpy().astype(np.float32)


class Wav2Vec2AudioEmbedder:
    """Mean-pooled 1024-dim self-supervised speech representation."""

    version = f"wav2vec2:{WAV2VEC2_MODEL}"
    dim = 1024

    def __init__(self):
        _require(["torch", "transformers"])
        from transformers import Wav2Vec2FeatureExtractor, Wav2Vec2Model

        self._processor = Wav2Vec2FeatureExtractor.from_pretrained(WAV2VEC2_MODEL)
        self._model = Wav2Vec2Model.from_pretrained(WAV2VEC2_MODEL).eval()

    def embed_audio(self, samples, rate) -> np.ndarray:
        import torch

        inputs = self._processor(samples, sampling_rate=rate, return_tensors="pt")
        with torch.no_grad():
            out = self._model(**inputs)
        return out.last_hidden_state[0].mean(dim=0).numpy().astype(np.float32)


class WhisperTranscriber:
    version = f"whisper:{WHISPER_MODEL}"

    def __init__(self):
        _require(["torch", "transformers"])
        from transformers import pipeline

        self._pipe = pipeline("automatic-speech-recognition", model=WHISPER_MODEL)

    def transcribe(self, samples, rate) -> str:
        result = self._pipe({"array": np.asarray(samples), "sampling_rate": rate})
        return result["text"].strip()


class ToxicityTextEmbedder:
    """768-dim pooled representation from a toxicity-tuned text encoder."""

    version = f"toxicity:{TOXICITY_MODEL}"
    dim = 768

    def __init__(self):
        _require(["torch", "transformers"])
        from transformers import AutoModel, AutoTokenizer

        self._tokenizer = AutoTokenizer.from_pretrained(TOXICITY_MODEL)
        self._model = AutoModel.from_pretrained(TOXICITY_MODEL).eval()

    def embed_text(self, text: str) -> np.ndarray:
        import torch

        inputs = self._tokenizer(text or "", return_tensors="pt", truncation=True,
                                 max_length=512)
        with torch.no_grad():
            out = self._model(**inputs)
        return out.last_hidden_state[0].mean(dim=0).numpy().astype(np.float32)


class PaddleOcrEngine:
    version = "paddleocr:PP-OCR"

    def __init__(self):
        _require(["paddleocr"])
        from paddleocr import PaddleOCR

        self._ocr = PaddleOCR(use_angle_cls=True, lang="en", show_log=False)

    def read_frames(self, video_path, times) -> list:
        from .media import sample_frames

        frames, frame_times = sample_frames(video_path)
        by_time = dict(zip(frame_times, frames))
        out = []
        for t in times:
            frame = by_time.get(t)
            if frame is None:
                continue
            result = self._ocr.ocr(frame, cls=True) or []
            text = " ".join(line[1][0] for block in result if block for line in block)
            if text.strip():
                out.append({"frame_index": int(t), "text": text.strip()})
        return out
