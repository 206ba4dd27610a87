"""Synthetic planted-signal datasets for desk-scale verification.

Every modality carries a noisy projection of a shared label factor at its
configured strength. A configurable fraction of samples instead encode the
label only in the *agreement* between a random sign planted in the query
modality and the same sign times the label planted in one key modality, so
no per-modality function can decode those samples but a cross-modal model
can. Shapes match the real embedding contract (1x768 / 1x768 / 1x1024 /
frames x 768), so the whole format pipeline is exercised end to end.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import embedding_store as es
from .train_eval import DataStore

DIMS = {"T": 768, "O": 768, "A": 1024, "V": 768}


@dataclass
class SynthSpec:
    n_samples: int = 400
    class_balance: float = 0.5  # hate fraction
    signal_strength: dict = field(
        default_factory=lambda: {"T": 0.9, "O": 0.15, "A": 0.2, "V": 0.15}
    )
    dependency: float = 0.0  # share of samples decodable only cross-modally
    noise_level: float = 0.5
    seed: int = 0
    query_modality: str = "O"
    key_modality: str = "A"
    video_frames: int = 12
    interaction_scale: float = 14.0
    offset_scale: float = 2.0  # constant per-modality mean shift

    def __post_init__(self):
        if self.n_samples < 40:
            raise ValueError("need at least 40 samples")
        if not 0.0 < self.class_balance < 1.0:
            raise ValueError("class balance must be in (0, 1)")
        if not 0.0 <= self.dependency <= 1.0:
            raise ValueError("dependency must be in [0, 1]")
        for m, s in self.signal_strength.items():
            if m not in DIMS or not 0.0 <= s <= 1.0:
                raise ValueError(f"bad signal strength {m}={s}")
        if self.query_modality == self.key_modality:
            raise ValueError("interaction query and key must differ")
        for m in (self.query_modality, self.key_modality):
            if m not in DIMS:
                raise ValueError(f"unknown modality {m!r}")
        if not 1 <= self.video_frames <= es.MAX_VIDEO_FRAMES:
            raise ValueError("video_frames outside [1, 100]")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


DIRECT_AMPLITUDE = 6.0  # strength 1.0 puts the label factor well clear of the noise


def generate_arrays(spec: SynthSpec):
    """Deterministically build {modality: {id: float32 array}} plus labels."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_samples

    n_hate = int(n * spec.class_balance + 0.5)
    labels_arr = np.zeros(n, dtype=np.int64)
    labels_arr[:n_hate] = 1
    rng.shuffle(labels_arr)

    n_dep = int(n * spec.dependency + 0.5)
    dep_mask = np.zeros(n, dtype=bool)
    dep_mask[rng.permutation(n)[:n_dep]] = True

    sign = rng.choice([-1.0, 1.0], size=n)  # query-side carrier
    rand_sign = rng.choice([-1.0, 1.0], size=n)  # label-free key-side filler

    directions, offsets = {}, {}
    q_dir, k_dir = {}, {}
    for m in ("T", "O", "A", "V"):
        d = DIMS[m]
        directions[m] = _unit(rng.standard_normal(d))
        offsets[m] = spec.offset_scale * _unit(rng.standard_normal(d))
        q_dir[m] = _unit(rng.standard_normal(d))
        k_dir[m] = _unit(rng.standard_normal(d))

    y_signed = 2.0 * labels_arr - 1.0
    direct = np.where(dep_mask, 0.0, y_signed)  # dependency samples carry no direct factor
    key_carrier = np.where(dep_mask, sign * y_signed, sign * rand_sign)

    ids = [f"syn{i:05d}" for i in range(n)]
    arrays = {m: {} for m in DIMS}
    labels = {}
    for i, sid in enumerate(ids):
        labels[sid] = int(labels_arr[i])
        for m in ("T", "O", "A"):
            row = _sample_row(spec, rng, m, 1, directions, offsets, q_dir, k_dir,
                              direct[i], sign[i], key_carrier[i])
            arrays[m][sid] = row
        arrays["V"][sid] = _sample_row(spec, rng, "V", spec.video_frames, directions,
                                       offsets, q_dir, k_dir, direct[i], sign[i],
                                       key_carrier[i])
    return arrays, labels


def _unit(v):
    return v / np.linalg.norm(v)


def _sample_row(spec, rng, m, rows, directions, offsets, q_dir, k_dir, direct, sign, carrier):
    d = DIMS[m]
    x = spec.noise_level * rng.standard_normal((rows, d))
    x += offsets[m]
    x += direct * spec.signal_strength[m] * DIRECT_AMPLITUDE * directions[m]
    if m == spec.query_modality:
        x += spec.interaction_scale * sign * q_dir[m]
    if m == spec.key_modality:
        x += spec.interaction_scale * carrier * k_dir[m]
    return x.astype(np.float32)


def build_store(spec: SynthSpec):
    """In-memory dataset: (DataStore, DatasetManifest with unwritten refs)."""
    arrays, labels = generate_arrays(spec)
    store = DataStore.from_arrays(arrays, labels)
    samples = [
        es.SampleRecord(
            id=sid,
            label=labels[sid],
            embedding_refs={m: Path(f"{sid}_{m}.mmeb") for m in es.MODALITIES},
        )
        for sid in sorted(labels)
    ]
    manifest = es.DatasetManifest(
        format_version=es.FORMAT_VERSION,
        samples=samples,
        provenance=f"synthetic spec={spec.to_dict()}",
    )
    return store, manifest


def gen_synthetic(spec: SynthSpec, out_dir) -> Path:
    """Write a format-conforming dataset to disk; returns the manifest path."""
    out_dir = Path(out_dir)
    emb_dir = out_dir / "emb"
    emb_dir.mkdir(parents=True, exist_ok=True)
    arrays, labels = generate_arrays(spec)

    samples = []
    for sid in sorted(labels):
        refs = {}
        for m in es.MODALITIES:
            rel = Path("emb") / f"{sid}_{m}.mmeb"
            es.write_embedding(out_dir / rel, m, arrays[m][sid])
            refs[m] = str(rel)
        samples.append(
            {"id": sid, "label": labels[sid], "has_onscreen_text": True, "embeddings": refs}
        )
    manifest_path = out_dir / "manifest.json"
    doc = {
        "format_version": es.FORMAT_VERSION,
        "provenance": json.dumps({"generator": "synthetic", "spec": spec.to_dict()},
                                 sort_keys=True),
        "samples": samples,
    }
    manifest_path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return manifest_path
