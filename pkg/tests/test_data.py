import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from revanon.data import (LabeledImage, SplitSpec, identity_index, is_excluded, iterate_batches,
                          make_splits, parse_filename, pk_batches, scan_dir)
from revanon.errors import FormatError, InvalidArgument
from revanon.losses import _pk_check
from revanon.upgradation import SupervisionStore


def fake_samples(counts, n_cams=3):
    out = []
    for pid, n in counts.items():
        for i in range(n):
            out.append(LabeledImage(f"/d/{pid:04d}_c{i % n_cams + 1}s1_{i:06d}_00.png",
                                    pid, i % n_cams + 1))
    return out


class TestParse:
    def test_examples(self):
        assert parse_filename("0002_c1s1_000451_03.jpg") == (2, 1)
        pid, cam = parse_filename("-1_c3s2_000000_00.jpg")
        assert (pid, cam) == (-1, 3) and is_excluded(pid)
        assert is_excluded(parse_filename("0000_c2s1_000001_00.jpg")[0])
        assert not is_excluded(2)

    def test_directory_path_ignored(self):
        assert parse_filename("/a/1234_c9/0042_c6s3_000100_01.jpg") == (42, 6)

    @pytest.mark.parametrize("bad", ["garbage.png", "c1_0002.jpg", "0002c1.jpg", ""])
    def test_format_error(self, bad):
        with pytest.raises(FormatError):
            parse_filename(bad)

    def test_scan_drops_distractors(self, tmp_path):
        from PIL import Image

        for name in ("0001_c1s1_0_00.png", "-1_c2s1_0_00.png", "0000_c1s1_0_00.png",
                     "0003_c4s1_0_00.png"):
            Image.new("RGB", (4, 8)).save(tmp_path / name)
        found = scan_dir(tmp_path)
        assert sorted(s.person_id for s in found) == [1, 3]
        assert len(scan_dir(tmp_path, keep_excluded=True)) == 4


class TestSplits:
    def test_ten_images(self):
        split = make_splits(fake_samples({1: 10, 2: 10}), seed=0)
        for pid in (1, 2):
            tr = [s for s in split.train if s.person_id == pid]
            g = [s for s in split.val_gallery if s.person_id == pid]
            q = [s for s in split.val_query if s.person_id == pid]
            assert (len(tr), len(g) + len(q)) == (8, 2)
            assert len(g) >= 1 and len(q) >= 1

    @settings(max_examples=40, deadline=None)
    @given(st.dictionaries(st.integers(1, 500), st.integers(1, 40), min_size=2, max_size=8),
           st.integers(0, 1000))
    def test_partition_properties(self, counts, seed):
        samples = fake_samples(counts)
        split = make_splits(samples, seed)
        parts = split.train + split.val_gallery + split.val_query
        assert sorted(parts, key=lambda s: s.path) == sorted(samples, key=lambda s: s.path)
        assert len(set(parts)) == len(parts)
        for pid, n in counts.items():
            val = sum(s.person_id == pid for s in split.val_gallery + split.val_query)
            q = sum(s.person_id == pid for s in split.val_query)
            if n == 1:
                assert val == 0
                continue
            assert val == math.ceil(n / 5)
            assert q == (math.ceil(val / 5) if val > 1 else 0)

    def test_ratio_on_corpus(self):
        split = make_splits(fake_samples({p: 25 for p in range(1, 9)}), seed=3)
        assert (len(split.train), len(split.val_gallery), len(split.val_query)) == (160, 32, 8)

    def test_query_prefers_cross_camera(self):
        checked = 0
        for seed in range(10):
            split = make_splits(fake_samples({p: 25 for p in range(1, 5)}), seed)
            for q in split.val_query:
                cams = {g.camera_id for g in split.val_gallery if g.person_id == q.person_id}
                if len(cams | {q.camera_id}) < 2:
                    continue  # validation images all from one camera
                assert cams - {q.camera_id}
                checked += 1
        assert checked >= 30

    def test_deterministic_manifest(self, tmp_path):
        samples = fake_samples({p: 12 for p in range(1, 6)})
        a, b = make_splits(samples, 7), make_splits(list(reversed(samples)), 7)
        assert a.to_manifest() == b.to_manifest()
        a.save(tmp_path / "a.json")
        b.save(tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        assert make_splits(samples, 8).to_manifest() != a.to_manifest()

    def test_manifest_round_trip(self, tmp_path):
        split = make_splits(fake_samples({1: 6, 2: 7}), 1)
        split.save(tmp_path / "m.json")
        back = SplitSpec.load(tmp_path / "m.json")
        assert back.to_manifest() == split.to_manifest()
        assert back.train == split.train

    def test_single_camera_flagged(self):
        samples = fake_samples({1: 10}, n_cams=1) + fake_samples({2: 10})
        split = make_splits(samples, 0)
        assert split.report["single_camera_ids"] == [1]
        assert sum(s.person_id == 1 for s in split.val_query) == 1

    def test_single_image_goes_to_train(self, caplog):
        split = make_splits(fake_samples({1: 1, 2: 6}), 0)
        assert split.report["single_image_ids"] == [1]
        assert [s.person_id for s in split.train].count(1) == 1
        assert "single image" in caplog.text

    def test_needs_two_identities(self):
        with pytest.raises(InvalidArgument):
            make_splits(fake_samples({1: 10}), 0)

    def test_identity_index(self):
        idx = identity_index(fake_samples({9: 1, 3: 1, 5: 1}))
        assert idx == {3: 0, 5: 1, 9: 2}


class TestBatches:
    def test_full_scale_batch_size(self):
        labels = np.repeat(np.arange(20), 12)
        batches = pk_batches(labels, P=16, K=4, seed=0)
        assert batches and all(len(b) == 64 for b in batches)
        for b in batches:
            ids, counts = np.unique(labels[b], return_counts=True)
            assert len(ids) == 16 and (counts == 4).all()
            _pk_check(torch.from_numpy(labels[b]))

    def test_short_identity_resampled(self):
        labels = np.array([0, 1, 1, 1, 1, 2, 2, 2, 2])
        batches = pk_batches(labels, P=3, K=4, seed=0)
        assert len(batches) == 1
        b = batches[0]
        assert (labels[b] == 0).sum() == 4 and set(b[labels[b] == 0]) == {0}

    def test_each_chunk_used_once(self):
        labels = np.repeat(np.arange(4), 8)
        batches = pk_batches(labels, P=4, K=4, seed=1)
        flat = np.concatenate(batches)
        assert len(flat) == len(set(flat)) == 32

    def test_seed_behaviour(self):
        labels = np.repeat(np.arange(10), 9)
        a = pk_batches(labels, 4, 3, seed=5)
        b = pk_batches(labels, 4, 3, seed=5)
        c = pk_batches(labels, 4, 3, seed=6)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        assert not all(np.array_equal(x, y) for x, y in zip(a, c))

    def test_too_few_identities(self):
        with pytest.raises(InvalidArgument):
            pk_batches(np.repeat(np.arange(3), 5), P=4, K=2, seed=0)

    def test_iterate_aligned(self):
        n = 24
        raw = torch.arange(n, dtype=torch.float32).view(n, 1, 1, 1).expand(n, 3, 2, 2)
        store = SupervisionStore(raw + 100)
        labels = torch.arange(n) // 4
        for batch in iterate_batches(raw, store, labels, P=3, K=2, seed=0):
            assert torch.equal(batch.supervision, batch.raw + 100)
            assert torch.equal(batch.labels, raw[batch.indices, 0, 0, 0].long() // 4)
            assert len(batch.indices) == batch.P * batch.K == 6
