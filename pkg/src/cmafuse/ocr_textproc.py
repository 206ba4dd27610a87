"""Per-video OCR text postprocessing: clean, de-duplicate, merge, stopword pass.

Raw per-frame OCR segments arrive as ordered (frame_index, text) pairs, one
frame per second. The pipeline reduces them to a single coherent text:
characters outside a conservative allowlist are dropped, near-duplicate
segments (ratio above a 90% threshold against any retained entry) are
discarded in one forward pass, and the survivors are folded together by
splicing at suffix/prefix overlaps. Stopword removal exists for ablations
and is off by default.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from difflib import SequenceMatcher
from importlib import resources

ALLOWED_PUNCT = ".,!?;:'\"()-"
ALLOWED_CHARS = frozenset(string.ascii_letters + string.digits + " " + ALLOWED_PUNCT)

DEFAULT_DEDUP_THRESHOLD = 0.9
DEFAULT_MIN_OVERLAP = 5


@dataclass(frozen=True)
class OcrSegment:
    frame_index: int  # seconds offset of the sampled frame
    text: str

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be >= 0, got {self.frame_index}")


def clean_text(raw: str) -> str:
    """Restrict to the allowed charset and normalize whitespace.

    Any whitespace becomes a single space; every other character outside the
    allowlist is dropped outright. Idempotent.
    """
    mapped = ("" if (c not in ALLOWED_CHARS and not c.isspace()) else c for c in raw)
    collapsed = " ".join("".join(mapped).split())
    return collapsed


def segment_similarity(a: str, b: str) -> float:
    """Matching-blocks ratio 2M/(len(a)+len(b)) in [0, 1].

    Arguments are compared in lexicographic order so the score is symmetric
    (the underlying greedy matcher is order-sensitive in corner cases).
    Two empty strings count as identical.
    """
    if a > b:
        a, b = b, a
    return SequenceMatcher(None, a, b, autojunk=False).ratio()


def dedup_segments(segments, threshold: float = DEFAULT_DEDUP_THRESHOLD):
    """Single forward pass keeping a segment only if it resembles no retained one.

    A candidate is discarded as soon as it equals, or its similarity strictly
    exceeds ``threshold`` against, any already retained segment; input order
    is preserved. At threshold 1.0 only exact duplicates go.
    """
    if not (0.0 < threshold <= 1.0):
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    retained = []
    for seg in segments:
        if all(
            seg != kept and segment_similarity(seg, kept) <= threshold for kept in retained
        ):
            retained.append(seg)
    return retained


def _suffix_prefix_overlap(acc: str, nxt: str) -> int:
    """Length of the longest suffix of ``acc`` that is a prefix of ``nxt``."""
    for k in range(min(len(acc), len(nxt)), 0, -1):
        if acc[-k:] == nxt[:k]:
            return k
    return 0


def merge_overlaps(segments, min_overlap: int = DEFAULT_MIN_OVERLAP) -> str:
    """Fold segments left-to-right, splicing at qualifying junction overlaps.

    When the longest suffix/prefix match at the junction is at least
    ``min_overlap`` characters the next segment is spliced in without
    repeating the overlap; otherwise it is appended after a single space.
    """
    acc = ""
    for seg in segments:
        if not seg:
            continue
        if not acc:
            acc = seg
            continue
        k = _suffix_prefix_overlap(acc, seg)
        if k >= min_overlap:
            acc = acc + seg[k:]
        else:
            acc = acc + " " + seg
    return acc


def remove_stopwords(text: str, stopwords) -> str:
    """Drop whole words (case-insensitively) and re-collapse whitespace."""
    stopwords = {w.lower() for w in stopwords}
    if not stopwords:
        raise ValueError("stopword list is empty")
    return " ".join(tok for tok in text.split() if tok.lower() not in stopwords)


def load_stopwords(path=None) -> frozenset:
    """Load one lowercase word per line; defaults to the bundled English list."""
    if path is None:
        text = resources.files("cmafuse").joinpath("data/stopwords.txt").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


def postprocess_segments(
    segments,
    threshold: float = DEFAULT_DEDUP_THRESHOLD,
    min_overlap: int = DEFAULT_MIN_OVERLAP,
    stopwords=None,
) -> str:
    """Full per-video pipeline: clean each segment, dedup, merge, optional stopwords.

    ``segments`` is an iterable of OcrSegment or raw strings in frame order.
    Segments that clean down to the empty string are dropped before
    de-duplication. Deterministic: identical inputs give identical bytes.
    """
    texts = [seg.text if isinstance(seg, OcrSegment) else seg for seg in segments]
    cleaned = [c for c in (clean_text(t) for t in texts) if c]
    merged = merge_overlaps(dedup_segments(cleaned, threshold=threshold), min_overlap=min_overlap)
    if stopwords is not None:
        merged = remove_stopwords(merged, stopwords)
    return merged
