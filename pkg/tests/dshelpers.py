import json

import numpy as np

from cmafuse import embedding_store as es


def write_sample_files(root, sample_id, rng, label=0, v_frames=3, has_text=True):
    """Write four valid embedding files for one sample; returns the refs dict."""
    refs = {}
    shapes = {"T": (1, 768), "O": (1, 768), "A": (1, 1024), "V": (v_frames, 768)}
    for m, shape in shapes.items():
        path = root / f"{sample_id}_{m}.mmeb"
        es.write_embedding(path, m, rng.standard_normal(shape).astype(np.float32))
        refs[m] = path.name
    return refs


def make_dataset(root, n=4, labels=None, seed=0, v_frames=3):
    """Build a tiny valid on-disk dataset; returns the manifest path."""
    rng = np.random.default_rng(seed)
    labels = labels if labels is not None else [i % 2 for i in range(n)]
    samples = []
    for i, label in enumerate(labels):
        sid = f"v{i}"
        refs = write_sample_files(root, sid, rng, label=label, v_frames=v_frames)
        samples.append(
            {"id": sid, "label": label, "has_onscreen_text": True, "embeddings": refs}
        )
    manifest_path = root / "manifest.json"
    manifest_path.write_text(
        json.dumps({"format_version": 1, "provenance": "test", "samples": samples})
    )
    return manifest_path


def fake_manifest(labels):
    """In-memory manifest for split logic; embedding refs are never touched."""
    samples = [
        es.SampleRecord(
            id=f"s{i:04d}",
            label=int(lab),
            embedding_refs={m: f"s{i}_{m}.mmeb" for m in es.MODALITIES},
        )
        for i, lab in enumerate(labels)
    ]
    return es.DatasetManifest(format_version=1, samples=samples)
