import json

import pytest

pytest.importorskip("cv2")

from mediagen import ORDINARY_OCR, SILENT_OCR, write_video, write_wav


@pytest.fixture(scope="session")
def smoke_corpus(tmp_path_factory):
    """Three tiny videos: one ordinary, one silent, one with no on-screen text."""
    root = tmp_path_factory.mktemp("videos")
    write_video(root / "ordinary.avi", seed=1)
    write_wav(root / "ordinary.wav", tone_hz=440.0)
    (root / "ordinary.ocr.json").write_text(json.dumps(ORDINARY_OCR))

    write_video(root / "silent.avi", seed=2)
    write_wav(root / "silent.wav", silent=True)
    (root / "silent.ocr.json").write_text(json.dumps(SILENT_OCR))

    write_video(root / "textfree.avi", seed=3)
    write_wav(root / "textfree.wav", tone_hz=220.0)
    return root
