"""On-disk embedding format, dataset manifests, video-frame padding and CV splits.

Embedding files are little-endian binary: a 17-byte header (magic ``MMEB``,
format version u32, modality code u8, rows u32, cols u32) followed by the
row-major float32 payload. The manifest is a UTF-8 JSON file indexing one
embedding file per modality per sample. See docs/file_formats.md.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"MMEB"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIBII")  # magic, version, modality code, rows, cols

MODALITIES = ("T", "O", "A", "V")
MODALITY_CODES = {m: ord(m) for m in MODALITIES}
CODE_TO_MODALITY = {v: k for k, v in MODALITY_CODES.items()}

# Per-modality shape contract: (required feature dim, max rows). T/O/A are
# single pooled vectors; V is one row per sampled frame, up to 100.
EXPECTED_COLS = {"T": 768, "O": 768, "A": 1024, "V": 768}
MAX_VIDEO_FRAMES = 100


class DatasetError(Exception):
    """Base class for manifest/embedding format violations."""


class MalformedManifest(DatasetError):
    pass


class DuplicateId(DatasetError):
    def __init__(self, sample_id):
        super().__init__(f"duplicate sample id {sample_id!r}")
        self.sample_id = sample_id


class UnknownFormatVersion(DatasetError):
    def __init__(self, version):
        super().__init__(f"unsupported manifest format_version {version!r}")
        self.version = version


class EmbeddingFormatError(DatasetError):
    pass


def parse_modality(code: str) -> str:
    """Round-trip a one-letter modality code, rejecting anything else."""
    if code not in MODALITIES:
        raise ValueError(f"unknown modality {code!r}; expected one of {MODALITIES}")
    return code


@dataclass(frozen=True)
class SampleRecord:
    id: str
    label: int  # hate=1, non_hate=0
    embedding_refs: dict  # modality -> Path
    has_onscreen_text: bool = True


@dataclass(frozen=True)
class DatasetManifest:
    format_version: int
    samples: list
    provenance: str = ""
    root: Path = field(default_factory=Path)
    video_pad_ref: Path | None = None  # optional stored blank-frame embedding

    def ids(self):
        return [s.id for s in self.samples]

    def by_id(self, sample_id: str) -> SampleRecord:
        for s in self.samples:
            if s.id == sample_id:
                return s
        raise KeyError(sample_id)


@dataclass(frozen=True)
class SplitPlan:
    seed: int
    test_ids: tuple
    folds: tuple  # 5 pairs of (train_ids, val_ids)


@dataclass(frozen=True)
class ValidationIssue:
    modality: str
    kind: str  # "io" | "shape" | "value"
    message: str


@dataclass
class ValidationReport:
    sample_id: str
    issues: list

    @property
    def ok(self) -> bool:
        return not self.issues

    def modality_ok(self, modality: str) -> bool:
        return not any(i.modality == modality for i in self.issues)


def write_embedding(path, modality: str, values: np.ndarray) -> None:
    """Write one modality embedding in the MMEB binary layout."""
    modality = parse_modality(modality)
    arr = np.ascontiguousarray(values, dtype="<f4")
    if arr.ndim != 2:
        raise EmbeddingFormatError(f"embedding must be 2-D, got shape {arr.shape}")
    rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, FORMAT_VERSION, MODALITY_CODES[modality], rows, cols))
        fh.write(arr.tobytes())


def read_embedding(path):
    """Read an MMEB file, returning (modality, rows x cols float32 array)."""
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
        if len(raw) != HEADER.size:
            raise EmbeddingFormatError(f"{path}: truncated header")
        magic, version, code, rows, cols = HEADER.unpack(raw)
        if magic != MAGIC:
            raise EmbeddingFormatError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise EmbeddingFormatError(f"{path}: unsupported format version {version}")
        if code not in CODE_TO_MODALITY:
            raise EmbeddingFormatError(f"{path}: unknown modality code {code}")
        payload = fh.read(4 * rows * cols)
        if len(payload) != 4 * rows * cols:
            raise EmbeddingFormatError(f"{path}: truncated payload")
        if fh.read(1):
            raise EmbeddingFormatError(f"{path}: trailing bytes after payload")
    values = np.frombuffer(payload, dtype="<f4").reshape(rows, cols)
    return CODE_TO_MODALITY[code], values


def load_manifest(path) -> DatasetManifest:
    """Parse and structurally validate a manifest; embedding payloads stay on disk."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise MalformedManifest(f"{path}: not valid JSON ({e})") from e
    if not isinstance(doc, dict):
        raise MalformedManifest(f"{path}: top level must be an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise UnknownFormatVersion(version)
    raw_samples = doc.get("samples")
    if not isinstance(raw_samples, list):
        raise MalformedManifest(f"{path}: 'samples' must be a list")

    root = path.resolve().parent
    samples, seen = [], set()
    for i, raw in enumerate(raw_samples):
        if not isinstance(raw, dict):
            raise MalformedManifest(f"{path}: sample #{i} must be an object")
        sid = raw.get("id")
        if not isinstance(sid, str) or not sid:
            raise MalformedManifest(f"{path}: sample #{i} has no id")
        if sid in seen:
            raise DuplicateId(sid)
        seen.add(sid)
        label = raw.get("label")
        if label not in (0, 1):
            raise MalformedManifest(f"{path}: sample {sid!r} label must be 0 or 1")
        refs = raw.get("embeddings")
        if not isinstance(refs, dict) or set(refs) != set(MODALITIES):
            raise MalformedManifest(
                f"{path}: sample {sid!r} must reference exactly the modalities {MODALITIES}"
            )
        embedding_refs = {m: root / refs[m] for m in MODALITIES}
        samples.append(
            SampleRecord(
                id=sid,
                label=int(label),
                embedding_refs=embedding_refs,
                has_onscreen_text=bool(raw.get("has_onscreen_text", True)),
            )
        )
    pad_ref = doc.get("video_pad")
    return DatasetManifest(
        format_version=version,
        samples=samples,
        provenance=str(doc.get("provenance", "")),
        root=root,
        video_pad_ref=root / pad_ref if pad_ref else None,
    )


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    root = path.resolve().parent
    doc = {
        "format_version": manifest.format_version,
        "provenance": manifest.provenance,
        "samples": [
            {
                "id": s.id,
                "label": s.label,
                "has_onscreen_text": s.has_onscreen_text,
                "embeddings": {
                    m: str(Path(p).resolve().relative_to(root)) if Path(p).is_absolute() else str(p)
                    for m, p in sorted(s.embedding_refs.items())
                },
            }
            for s in manifest.samples
        ],
    }
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def validate_embedding(modality: str, values: np.ndarray):
    """Check one loaded embedding against the shape/finiteness contract."""
    issues = []
    rows, cols = values.shape
    want_cols = EXPECTED_COLS[modality]
    if cols != want_cols:
        name = {"T": "Transcript", "O": "OnscreenText", "A": "Audio", "V": "Video"}[modality]
        issues.append(
            ValidationIssue(modality, "shape", f"{name}DimMismatch(expected {want_cols}, got {cols})")
        )
    if modality == "V":
        if rows < 1:
            issues.append(ValidationIssue(modality, "shape", "video has zero frames"))
        elif rows > MAX_VIDEO_FRAMES:
            issues.append(
                ValidationIssue(modality, "shape", f"TooManyFrames({rows} > {MAX_VIDEO_FRAMES})")
            )
    elif rows != 1:
        issues.append(ValidationIssue(modality, "shape", f"expected 1 row, got {rows}"))
    if not np.isfinite(values).all():
        issues.append(ValidationIssue(modality, "value", "non-finite values"))
    return issues


def validate_sample(record: SampleRecord) -> ValidationReport:
    """Load each referenced embedding and report per-modality pass/fail.

    I/O problems (missing/corrupt files) are reported with kind "io",
    distinct from shape/value violations.
    """
    issues = []
    for m in MODALITIES:
        path = record.embedding_refs[m]
        try:
            stored_modality, values = read_embedding(path)
        except (OSError, EmbeddingFormatError) as e:
            issues.append(ValidationIssue(m, "io", str(e)))
            continue
        if stored_modality != m:
            issues.append(ValidationIssue(m, "io", f"{path}: file is modality {stored_modality}, expected {m}"))
            continue
        issues.extend(validate_embedding(m, values))
    return ValidationReport(sample_id=record.id, issues=issues)


def validate_manifest(manifest: DatasetManifest):
    return [validate_sample(s) for s in manifest.samples]


def pad_video(frames: np.ndarray, pad_vector: np.ndarray | None = None) -> np.ndarray:
    """Extend an r x 768 frame matrix to exactly 100 rows.

    Rows past r are copies of ``pad_vector`` (all-zero by default; pass the
    extractor's blank-frame embedding to override). r=100 is the identity.
    """
    frames = np.asarray(frames, dtype=np.float32)
    if frames.ndim != 2:
        raise ValueError(f"expected 2-D frame matrix, got shape {frames.shape}")
    r, cols = frames.shape
    if r < 1 or r > MAX_VIDEO_FRAMES:
        raise ValueError(f"frame count {r} outside [1, {MAX_VIDEO_FRAMES}]")
    if r == MAX_VIDEO_FRAMES:
        return frames
    if pad_vector is None:
        pad = np.zeros((MAX_VIDEO_FRAMES - r, cols), dtype=np.float32)
    else:
        pad_vector = np.asarray(pad_vector, dtype=np.float32).reshape(1, -1)
        if pad_vector.shape[1] != cols:
            raise ValueError("pad vector width does not match frame width")
        pad = np.repeat(pad_vector, MAX_VIDEO_FRAMES - r, axis=0)
    return np.concatenate([frames, pad], axis=0)


def _class_ids(manifest: DatasetManifest):
    by_class = {0: [], 1: []}
    for s in manifest.samples:
        by_class[s.label].append(s.id)
    return by_class


def _take_stratified(by_class: dict, total: int):
    """Largest-remainder allocation of ``total`` slots across classes."""
    n = sum(len(ids) for ids in by_class.values())
    quota = {c: total * len(ids) / n for c, ids in by_class.items()}
    alloc = {c: int(np.floor(q)) for c, q in quota.items()}
    remaining = total - sum(alloc.values())
    order = sorted(quota, key=lambda c: (-(quota[c] - alloc[c]), c))
    for c in order[:remaining]:
        alloc[c] += 1
    return alloc


def split_dataset(manifest: DatasetManifest, seed: int) -> SplitPlan:
    """Deterministic stratified 15% test split + 5-fold partition of the rest.

    |test| = round(0.15 N); the five validation sets partition the pool with
    sizes differing by at most one, and every split keeps each class within
    +-1 sample of its global proportion.
    """
    n = len(manifest.samples)
    if n < 10:
        raise ValueError(f"need at least 10 samples to split, got {n}")
    by_class = _class_ids(manifest)
    if not by_class[0] or not by_class[1]:
        raise ValueError("both classes must be present to stratify")

    rng = np.random.default_rng(seed)
    shuffled = {}
    for c in sorted(by_class):
        ids = list(by_class[c])
        rng.shuffle(ids)
        shuffled[c] = ids

    n_test = int(n * 0.15 + 0.5)
    test_alloc = _take_stratified(by_class, n_test)
    test_ids, pool = [], {}
    for c in sorted(shuffled):
        k = test_alloc[c]
        if k >= len(shuffled[c]):
            raise ValueError("too few samples in a class to stratify the test split")
        test_ids.extend(shuffled[c][:k])
        pool[c] = shuffled[c][k:]

    # Per class, spread ids over 5 folds as evenly as possible; extras go to
    # whichever folds are currently smallest so overall sizes differ by <=1.
    n_folds = 5
    fold_val = [[] for _ in range(n_folds)]
    class_order = sorted(pool, key=lambda c: (-len(pool[c]), c))
    for c in class_order:
        ids = pool[c]
        base, extra = divmod(len(ids), n_folds)
        sizes = [base] * n_folds
        order = sorted(range(n_folds), key=lambda k: (len(fold_val[k]), k))
        for k in order[:extra]:
            sizes[k] += 1
        cursor = 0
        for k in range(n_folds):
            fold_val[k].extend(ids[cursor : cursor + sizes[k]])
            cursor += sizes[k]

    pool_all = [sid for c in sorted(pool) for sid in pool[c]]
    folds = []
    for k in range(n_folds):
        val = tuple(fold_val[k])
        val_set = set(val)
        train = tuple(sid for sid in pool_all if sid not in val_set)
        folds.append((train, val))
    return SplitPlan(seed=seed, test_ids=tuple(test_ids), folds=tuple(folds))
