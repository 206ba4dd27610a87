import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmafuse import ocr_textproc as ot


# --- independent oracles -------------------------------------------------

def reference_clean(raw):
    out = []
    for c in raw:
        if c.isspace():
            out.append(" ")
        elif c in ot.ALLOWED_CHARS:
            out.append(c)
    collapsed = []
    for c in "".join(out):
        if c == " " and collapsed and collapsed[-1] == " ":
            continue
        collapsed.append(c)
    return "".join(collapsed).strip()


def _longest_match(a, b):
    """Brute-force longest common contiguous block, earliest-in-a then -in-b."""
    best = (0, 0, 0)
    for i in range(len(a)):
        for j in range(len(b)):
            k = 0
            while i + k < len(a) and j + k < len(b) and a[i + k] == b[j + k]:
                k += 1
            if k > best[2]:
                best = (i, j, k)
    return best


def matching_chars(a, b):
    i, j, k = _longest_match(a, b)
    if k == 0:
        return 0
    return k + matching_chars(a[:i], b[:j]) + matching_chars(a[i + k:], b[j + k:])


def reference_similarity(a, b):
    if a > b:
        a, b = b, a
    if not a and not b:
        return 1.0
    return 2.0 * matching_chars(a, b) / (len(a) + len(b))


def reference_overlap(acc, nxt):
    best = 0
    for k in range(1, min(len(acc), len(nxt)) + 1):
        if acc[len(acc) - k:] == nxt[:k]:
            best = k
    return best


def reference_remove_stopwords(text, stopwords):
    lowered = {w.lower() for w in stopwords}
    kept = []
    for token in text.split():
        if token.lower() not in lowered:
            kept.append(token)
    return " ".join(kept)


texts = st.text(alphabet="ABC abc.!0", max_size=30)


class TestCleanText:
    def test_identity_on_clean_input(self):
        assert ot.clean_text("HELLO WORLD") == "HELLO WORLD"

    def test_empty(self):
        assert ot.clean_text("") == ""

    def test_unicode_stripped(self):
        raw = "H€llo… wörld!!"
        assert ot.clean_text(raw) == "Hllo wrld!!"
        assert ot.clean_text(raw) == reference_clean(raw)

    def test_whitespace_collapse(self):
        assert ot.clean_text("  a \t\n b  ") == "a b"

    @given(st.text(max_size=60))
    @settings(max_examples=200, deadline=None)
    def test_idempotent_and_matches_reference(self, raw):
        once = ot.clean_text(raw)
        assert ot.clean_text(once) == once
        assert once == reference_clean(raw)
        assert set(once) <= ot.ALLOWED_CHARS


class TestSegmentSimilarity:
    def test_identical(self):
        assert ot.segment_similarity("abc", "abc") == 1.0

    def test_disjoint(self):
        assert ot.segment_similarity("abc", "xyz") == 0.0

    def test_both_empty(self):
        assert ot.segment_similarity("", "") == 1.0

    def test_trailing_bang_ratio(self):
        # 11 matched chars over lengths 11 + 12.
        got = ot.segment_similarity("HELLO WORLD", "HELLO WORLD!")
        assert got == pytest.approx(22 / 23, abs=1e-12)
        assert got == pytest.approx(0.9565, abs=1e-4)

    @given(texts, texts)
    @settings(max_examples=200, deadline=None)
    def test_matches_bruteforce_oracle(self, a, b):
        assert ot.segment_similarity(a, b) == pytest.approx(reference_similarity(a, b), abs=1e-12)

    @given(texts, texts)
    @settings(max_examples=200, deadline=None)
    def test_symmetric_and_bounded(self, a, b):
        r = ot.segment_similarity(a, b)
        assert r == ot.segment_similarity(b, a)
        assert 0.0 <= r <= 1.0
        if a and a == b:
            assert r == 1.0
        if a != b:
            assert r < 1.0


class TestDedupSegments:
    def test_exact_duplicate_removed(self):
        assert ot.dedup_segments(["A B C", "A B C"]) == ["A B C"]

    def test_boundary_discard(self):
        got = ot.dedup_segments(["HELLO WORLD", "HELLO WORLD!", "FOX"])
        assert got == ["HELLO WORLD", "FOX"]

    def test_dissimilar_kept(self):
        assert ot.dedup_segments(["abc", "xyz"]) == ["abc", "xyz"]

    def test_threshold_one_keeps_non_exact(self):
        segs = ["HELLO WORLD", "HELLO WORLD!", "HELLO WORLD"]
        assert ot.dedup_segments(segs, threshold=1.0) == ["HELLO WORLD", "HELLO WORLD!"]

    def test_compares_against_all_retained(self):
        # Third segment resembles the *first* retained entry, not the second.
        segs = ["HELLO WORLD", "zzzz", "HELLO WORLD!"]
        assert ot.dedup_segments(segs) == ["HELLO WORLD", "zzzz"]

    def test_invalid_threshold(self):
        with pytest.raises(ValueError):
            ot.dedup_segments(["a"], threshold=0.0)
        with pytest.raises(ValueError):
            ot.dedup_segments(["a"], threshold=1.5)

    @given(st.lists(texts, max_size=10), st.floats(min_value=0.1, max_value=1.0))
    @settings(max_examples=100, deadline=None)
    def test_output_subset_in_order(self, segs, threshold):
        kept = ot.dedup_segments(segs, threshold=threshold)
        assert len(kept) <= len(segs)
        it = iter(segs)
        for k in kept:
            assert any(k == s for s in it)  # order-preserving subsequence
        for i, k in enumerate(kept):
            for prev in kept[:i]:
                assert ot.segment_similarity(k, prev) <= threshold


class TestMergeOverlaps:
    def test_single_segment(self):
        assert ot.merge_overlaps(["ONLY SEGMENT"]) == "ONLY SEGMENT"

    def test_splice_on_overlap(self):
        got = ot.merge_overlaps(["THE QUICK BROWN", "BROWN FOX JUMPS"])
        assert got == "THE QUICK BROWN FOX JUMPS"
        assert reference_overlap("THE QUICK BROWN", "BROWN FOX JUMPS") == 5

    def test_no_overlap_space_join(self):
        assert ot.merge_overlaps(["abc", "xyz"]) == "abc xyz"

    def test_empty_input(self):
        assert ot.merge_overlaps([]) == ""

    def test_short_overlap_not_spliced(self):
        # Overlap "AB" is below the 5-character floor.
        assert ot.merge_overlaps(["xxAB", "AByy"]) == "xxAB AByy"
        assert ot.merge_overlaps(["xxAB", "AByy"], min_overlap=2) == "xxAByy"

    @given(st.lists(texts, max_size=8), st.integers(min_value=1, max_value=8))
    @settings(max_examples=150, deadline=None)
    def test_junction_rule_matches_bruteforce(self, segs, min_overlap):
        acc = ""
        for seg in segs:
            if not seg:
                continue
            if not acc:
                acc = seg
                continue
            k = reference_overlap(acc, seg)
            acc = acc + seg[k:] if k >= min_overlap else acc + " " + seg
        assert ot.merge_overlaps(segs, min_overlap=min_overlap) == acc

    @given(st.lists(st.text(alphabet="AB XY", min_size=1, max_size=12), max_size=6))
    @settings(max_examples=100, deadline=None)
    def test_each_segment_residue_appears(self, segs):
        out = ot.merge_overlaps(segs)
        for seg in segs:
            # The non-overlapped suffix of every segment survives verbatim.
            assert any(seg[k:] in out for k in range(len(seg) + 1))


class TestRemoveStopwords:
    def test_single_removal(self):
        assert ot.remove_stopwords("the cat sat", {"the"}) == "cat sat"

    def test_noop(self):
        assert ot.remove_stopwords("Cat sat", {"the"}) == "Cat sat"

    def test_whole_word_case_insensitive(self):
        text = "The THE theatre"
        assert ot.remove_stopwords(text, {"the"}) == "theatre"
        assert ot.remove_stopwords(text, {"the"}) == reference_remove_stopwords(text, {"the"})

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            ot.remove_stopwords("a b", set())

    def test_bundled_list_loads(self):
        words = ot.load_stopwords()
        assert "the" in words and "and" in words
        assert len(words) > 100

    @given(st.text(alphabet="the cats", max_size=40))
    @settings(max_examples=100, deadline=None)
    def test_matches_token_reference(self, text):
        assert ot.remove_stopwords(text, {"the", "a"}) == reference_remove_stopwords(
            text, {"the", "a"}
        )


class TestPipeline:
    def test_end_to_end(self):
        segs = [
            ot.OcrSegment(0, "THE QUICK… BROWN"),
            ot.OcrSegment(1, "THE QUICK BROWN"),
            ot.OcrSegment(2, "BROWN FOX JUMPS"),
        ]
        assert ot.postprocess_segments(segs) == "THE QUICK BROWN FOX JUMPS"

    def test_empty_segments_dropped(self):
        segs = ["☃☃", "REAL TEXT", "  "]
        assert ot.postprocess_segments(segs) == "REAL TEXT"

    def test_stopword_pass(self):
        assert ot.postprocess_segments(["the cat"], stopwords={"the"}) == "cat"

    def test_negative_frame_index_rejected(self):
        with pytest.raises(ValueError):
            ot.OcrSegment(-1, "x")

    @given(st.lists(texts, max_size=8))
    @settings(max_examples=100, deadline=None)
    def test_deterministic(self, segs):
        assert ot.postprocess_segments(segs) == ot.postprocess_segments(list(segs))
