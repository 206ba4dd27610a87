import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmafuse import embedding_store as es

from dshelpers import fake_manifest, make_dataset, write_sample_files


def reference_pad(frames):
    """Loop-based padder used as an oracle for pad_video."""
    out = np.zeros((100, frames.shape[1]), dtype=np.float32)
    for i in range(frames.shape[0]):
        for j in range(frames.shape[1]):
            out[i, j] = frames[i, j]
    return out


class TestBinaryFormat:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        arr = rng.standard_normal((7, 768)).astype(np.float32)
        path = tmp_path / "x.mmeb"
        es.write_embedding(path, "V", arr)
        modality, back = es.read_embedding(path)
        assert modality == "V"
        assert back.dtype == np.float32
        assert np.array_equal(back, arr)

    def test_header_layout(self, tmp_path):
        path = tmp_path / "t.mmeb"
        es.write_embedding(path, "T", np.zeros((1, 768), dtype=np.float32))
        raw = path.read_bytes()
        assert raw[:4] == b"MMEB"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert raw[8] == ord("T")
        assert int.from_bytes(raw[9:13], "little") == 1
        assert int.from_bytes(raw[13:17], "little") == 768
        assert len(raw) == 17 + 4 * 768

    def test_modality_codes_round_trip(self):
        for m in ("T", "O", "A", "V"):
            assert es.parse_modality(m) == m
            assert es.CODE_TO_MODALITY[es.MODALITY_CODES[m]] == m
        with pytest.raises(ValueError):
            es.parse_modality("X")

    def test_corrupt_files_rejected(self, tmp_path):
        path = tmp_path / "bad.mmeb"
        path.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(es.EmbeddingFormatError):
            es.read_embedding(path)
        path.write_bytes(b"MM")
        with pytest.raises(es.EmbeddingFormatError):
            es.read_embedding(path)


class TestManifest:
    def test_load_two_valid_samples(self, tmp_path):
        manifest = es.load_manifest(make_dataset(tmp_path, n=2))
        assert len(manifest.samples) == 2
        assert manifest.ids() == ["v0", "v1"]
        assert manifest.samples[0].label in (0, 1)

    def test_duplicate_id_rejected(self, tmp_path):
        rng = np.random.default_rng(0)
        refs = write_sample_files(tmp_path, "v1", rng)
        doc = {
            "format_version": 1,
            "samples": [
                {"id": "v1", "label": 0, "embeddings": refs},
                {"id": "v1", "label": 1, "embeddings": refs},
            ],
        }
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(es.DuplicateId) as exc:
            es.load_manifest(path)
        assert exc.value.sample_id == "v1"

    def test_missing_embedding_file_fails_on_validate_not_load(self, tmp_path):
        manifest_path = make_dataset(tmp_path, n=2)
        (tmp_path / "v0_A.mmeb").unlink()
        manifest = es.load_manifest(manifest_path)  # lazy: load still succeeds
        report = es.validate_sample(manifest.samples[0])
        assert not report.ok
        assert any(i.modality == "A" and i.kind == "io" for i in report.issues)

    def test_unknown_format_version(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps({"format_version": 99, "samples": []}))
        with pytest.raises(es.UnknownFormatVersion):
            es.load_manifest(path)

    def test_malformed_manifest(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text("{nope")
        with pytest.raises(es.MalformedManifest):
            es.load_manifest(path)
        path.write_text(json.dumps({"format_version": 1, "samples": [{"id": "a", "label": 3}]}))
        with pytest.raises(es.MalformedManifest):
            es.load_manifest(path)

    def test_save_round_trip(self, tmp_path):
        manifest = es.load_manifest(make_dataset(tmp_path, n=3))
        out = tmp_path / "copy.json"
        es.save_manifest(manifest, out)
        back = es.load_manifest(out)
        assert back.ids() == manifest.ids()
        assert [s.label for s in back.samples] == [s.label for s in manifest.samples]


class TestValidateSample:
    def test_valid_shapes_pass(self, tmp_path):
        rng = np.random.default_rng(2)
        refs = write_sample_files(tmp_path, "ok", rng, v_frames=57)
        record = es.SampleRecord(
            id="ok", label=1, embedding_refs={m: tmp_path / p for m, p in refs.items()}
        )
        assert es.validate_sample(record).ok

    def test_audio_dim_mismatch(self, tmp_path):
        rng = np.random.default_rng(3)
        refs = {m: tmp_path / p for m, p in write_sample_files(tmp_path, "s", rng).items()}
        es.write_embedding(refs["A"], "A", rng.standard_normal((1, 768)).astype(np.float32))
        report = es.validate_sample(es.SampleRecord(id="s", label=0, embedding_refs=refs))
        [issue] = report.issues
        assert issue.modality == "A" and issue.kind == "shape"
        assert "AudioDimMismatch(expected 1024, got 768)" in issue.message

    def test_too_many_frames(self, tmp_path):
        rng = np.random.default_rng(4)
        refs = {m: tmp_path / p for m, p in write_sample_files(tmp_path, "s", rng).items()}
        es.write_embedding(refs["V"], "V", rng.standard_normal((120, 768)).astype(np.float32))
        report = es.validate_sample(es.SampleRecord(id="s", label=0, embedding_refs=refs))
        [issue] = report.issues
        assert "TooManyFrames(120 > 100)" in issue.message

    def test_non_finite_values(self, tmp_path):
        rng = np.random.default_rng(5)
        refs = {m: tmp_path / p for m, p in write_sample_files(tmp_path, "s", rng).items()}
        bad = rng.standard_normal((1, 768)).astype(np.float32)
        bad[0, 5] = np.nan
        es.write_embedding(refs["T"], "T", bad)
        report = es.validate_sample(es.SampleRecord(id="s", label=0, embedding_refs=refs))
        assert any(i.kind == "value" and i.modality == "T" for i in report.issues)

    def test_accepts_exactly_the_contract_shapes(self, tmp_path):
        # 1x768 for T/O, 1x1024 for A, r<=100 x768 for V -- and nothing else.
        for m, rows, cols, ok in [
            ("T", 1, 768, True),
            ("T", 2, 768, False),
            ("O", 1, 1024, False),
            ("A", 1, 1024, True),
            ("V", 100, 768, True),
            ("V", 101, 768, False),
            ("V", 1, 769, False),
        ]:
            issues = es.validate_embedding(m, np.zeros((rows, cols), dtype=np.float32))
            assert (not issues) == ok, (m, rows, cols)


class TestPadVideo:
    def test_full_length_is_identity(self):
        rng = np.random.default_rng(6)
        frames = rng.standard_normal((100, 768)).astype(np.float32)
        assert np.array_equal(es.pad_video(frames), frames)

    def test_single_row_of_ones(self):
        out = es.pad_video(np.ones((1, 768), dtype=np.float32))
        assert np.array_equal(out[0], np.ones(768, dtype=np.float32))
        assert not out[1:].any()

    def test_matches_reference_padder(self):
        rng = np.random.default_rng(7)
        frames = rng.standard_normal((57, 768)).astype(np.float32)
        out = es.pad_video(frames)
        assert out.shape == (100, 768)
        assert np.array_equal(out, reference_pad(frames))
        assert np.array_equal(out[:57], frames)  # bit-identical prefix
        assert not out[57:].any()

    def test_custom_pad_vector(self):
        pad_vec = np.full(768, 0.5, dtype=np.float32)
        out = es.pad_video(np.zeros((2, 768), dtype=np.float32), pad_vector=pad_vec)
        assert np.array_equal(out[2], pad_vec)
        assert np.array_equal(out[99], pad_vec)

    def test_rejects_bad_row_counts(self):
        with pytest.raises(ValueError):
            es.pad_video(np.zeros((0, 768), dtype=np.float32))
        with pytest.raises(ValueError):
            es.pad_video(np.zeros((101, 768), dtype=np.float32))

    @given(r=st.integers(min_value=1, max_value=100))
    @settings(max_examples=25, deadline=None)
    def test_idempotent(self, r):
        rng = np.random.default_rng(r)
        frames = rng.standard_normal((r, 8)).astype(np.float32)
        once = es.pad_video(frames)
        assert np.array_equal(es.pad_video(once), once)


class TestSplitDataset:
    def test_n100_arithmetic(self):
        manifest = fake_manifest([1] * 40 + [0] * 60)
        plan = es.split_dataset(manifest, seed=7)
        assert len(plan.test_ids) == 15
        for train, val in plan.folds:
            assert len(val) == 17
            assert len(train) == 68

    def test_determinism(self):
        manifest = fake_manifest([1] * 40 + [0] * 60)
        assert es.split_dataset(manifest, seed=3) == es.split_dataset(manifest, seed=3)

    def test_hatemm_scale_counts(self):
        # 1083 samples, 431 positive: 162 test, 921 pool, folds 736/737 train
        # and 184/185 val.
        manifest = fake_manifest([1] * 431 + [0] * 652)
        plan = es.split_dataset(manifest, seed=0)
        assert len(plan.test_ids) == 162
        val_sizes = sorted(len(v) for _, v in plan.folds)
        train_sizes = sorted(len(t) for t, _ in plan.folds)
        assert sum(val_sizes) == 921
        assert set(val_sizes) <= {184, 185}
        assert set(train_sizes) <= {736, 737}

    def test_partition_and_disjointness(self):
        manifest = fake_manifest([1] * 37 + [0] * 63)
        plan = es.split_dataset(manifest, seed=11)
        all_ids = set(manifest.ids())
        test = set(plan.test_ids)
        val_union = set()
        for train, val in plan.folds:
            train, val = set(train), set(val)
            assert not (test & train) and not (test & val)
            assert not (train & val)
            assert test | train | val == all_ids
            assert not (val_union & val)
            val_union |= val
        assert val_union | test == all_ids

    @given(
        n_pos=st.integers(min_value=6, max_value=120),
        n_neg=st.integers(min_value=6, max_value=120),
        seed=st.integers(min_value=0, max_value=2**31),
    )
    @settings(max_examples=40, deadline=None)
    def test_stratification_within_one_sample(self, n_pos, n_neg, seed):
        manifest = fake_manifest([1] * n_pos + [0] * n_neg)
        labels = {s.id: s.label for s in manifest.samples}
        rate = n_pos / (n_pos + n_neg)
        plan = es.split_dataset(manifest, seed=seed)

        def check(ids):
            got = sum(labels[i] for i in ids)
            assert abs(got - rate * len(ids)) <= 1.0 + 1e-9

        check(plan.test_ids)
        sizes = [len(v) for _, v in plan.folds]
        assert max(sizes) - min(sizes) <= 1
        for train, val in plan.folds:
            check(val)
            check(train)

    def test_too_few_samples_rejected(self):
        with pytest.raises(ValueError):
            es.split_dataset(fake_manifest([1, 0, 1, 0]), seed=0)
        with pytest.raises(ValueError):
            es.split_dataset(fake_manifest([0] * 20), seed=0)
