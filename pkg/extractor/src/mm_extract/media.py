"""Media access: 1 fps frame sampling via OpenCV and sidecar-WAV audio.

Container audio demuxing needs ffmpeg, which offline boxes often lack, so
audio is read from a `<video stem>.wav` sidecar when present; a missing
sidecar is treated as a missing audio track.
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

MAX_FRAMES = 100


class DecodeError(RuntimeError):
    pass


def sample_frames(video_path, max_frames: int = MAX_FRAMES):
    """One frame per second from t=0, capped; returns (frames, seconds_offsets).

    Sub-second clips still yield their first frame; an undecodable or empty
    stream raises DecodeError.
    """
    import cv2

    cap = cv2.VideoCapture(str(video_path))
    if not cap.isOpened():
        raise DecodeError(f"cannot open video stream: {video_path}")
    fps = cap.get(cv2.CAP_PROP_FPS) or 0.0
    total = int(cap.get(cv2.CAP_PROP_FRAME_COUNT) or 0)
    if fps <= 0 or total <= 0:
        cap.release()
        raise DecodeError(f"no decodable frames in {video_path}")
    duration = total / fps
    n = max(1, min(int(duration), max_frames))

    frames, times = [], []
    for t in range(n):
        index = min(int(round(t * fps)), total - 1)
        cap.set(cv2.CAP_PROP_POS_FRAMES, index)
        ok, frame = cap.read()
        if not ok:
            break
        frames.append(frame)
        times.append(t)
    cap.release()
    if not frames:
        raise DecodeError(f"no decodable frames in {video_path}")
    return frames, times


def audio_sidecar(video_path) -> Path:
    return Path(video_path).with_suffix(".wav")


def load_audio(video_path):
    """Mono float32 samples from the sidecar WAV, or None when absent."""
    sidecar = audio_sidecar(video_path)
    if not sidecar.exists():
        return None
    with wave.open(str(sidecar), "rb") as fh:
        rate = fh.getframerate()
        n = fh.getnframes()
        width = fh.getsampwidth()
        channels = fh.getnchannels()
        raw = fh.readframes(n)
    if width != 2:
        raise DecodeError(f"{sidecar}: only 16-bit PCM sidecars are supported")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    return samples, rate


def is_silent(samples: np.ndarray, threshold: float = 1e-4) -> bool:
    return bool(np.max(np.abs(samples)) < threshold) if samples.size else True
