"""Dataset store round trips and digit source tests."""

import struct

import numpy as np
import pytest

from mist.digits import DigitBank, load_idx_bank, render_digit_bank
from mist.records import Dataset, DatasetWriter, Instance, SceneRecord, write_records


def _record(h=32, w=32, value=0.5):
    image = np.full((h, w, 1), value, dtype=np.float32)
    return SceneRecord(image=image, instances=[Instance(box=(16.0, 16.0, 8.0, 8.0), label=3)], meta={"tag": 1})


class TestStore:
    def test_round_trip(self, tmp_path):
        recs = [_record(value=v) for v in (0.0, 0.25, 1.0)]
        n = write_records(tmp_path, "train", recs, meta={"kind": "test"})
        assert n == 3
        ds = Dataset(tmp_path, "train")
        assert len(ds) == 3
        assert ds.meta == {"kind": "test"}
        for i, v in enumerate((0.0, 0.25, 1.0)):
            rec = ds[i]
            np.testing.assert_array_equal(rec.image, np.full((32, 32, 1), v, dtype=np.float32))
            assert rec.instances[0].label == 3
            assert rec.instances[0].box == (16.0, 16.0, 8.0, 8.0)
            assert rec.meta == {"tag": 1}

    def test_mixed_shapes(self, tmp_path):
        with DatasetWriter(tmp_path, "train") as w:
            w.append(_record(32, 32))
            w.append(_record(60, 240))
        ds = Dataset(tmp_path, "train")
        assert ds[0].image.shape == (32, 32, 1)
        assert ds[1].image.shape == (60, 240, 1)

    def test_validate_rejects_bad_records(self):
        rec = _record()
        rec.image[0, 0, 0] = 1.5
        with pytest.raises(ValueError, match="outside"):
            rec.validate()
        rec2 = _record()
        rec2.instances[0] = Instance(box=(31.0, 16.0, 8.0, 8.0), label=0)
        with pytest.raises(ValueError, match="bounds"):
            rec2.validate()


class TestDigitBank:
    def test_render_shapes_and_determinism(self):
        a = render_digit_bank(per_class=3, seed=9)
        b = render_digit_bank(per_class=3, seed=9)
        assert a.images.shape == (30, 28, 28)
        assert set(a.labels.tolist()) == set(range(10))
        np.testing.assert_array_equal(a.images, b.images)
        c = render_digit_bank(per_class=3, seed=10)
        assert not np.array_equal(a.images, c.images)

    def test_pixel_range_and_ink(self):
        bank = render_digit_bank(per_class=4, seed=1)
        assert bank.images.min() >= 0.0
        assert bank.images.max() <= 1.0
        # every exemplar has visible ink
        assert (bank.images.reshape(40, -1).max(axis=1) > 0.5).all()

    def test_split_disjoint(self):
        bank = render_digit_bank(per_class=6, seed=2)
        train, test = bank.split(test_per_class=2, seed=3)
        assert len(train) == 40 and len(test) == 20
        train_bytes = {img.tobytes() for img in train.images}
        test_bytes = {img.tobytes() for img in test.images}
        assert not train_bytes & test_bytes

    def test_exemplar_variety(self):
        bank = render_digit_bank(per_class=8, seed=4)
        sevens = bank.images[bank.labels == 7]
        assert len({img.tobytes() for img in sevens}) == len(sevens)


def _write_idx(path, arr: np.ndarray):
    with open(path, "wb") as f:
        f.write(struct.pack(">HBB", 0, 0x08, arr.ndim))
        f.write(struct.pack(">" + "I" * arr.ndim, *arr.shape))
        f.write(arr.astype(np.uint8).tobytes())


class TestIdxLoader:
    def test_round_trip(self, tmp_path, rng):
        images = (rng.random((5, 28, 28)) * 255).astype(np.uint8)
        labels = np.array([1, 2, 3, 4, 5], dtype=np.uint8)
        _write_idx(tmp_path / "imgs", images)
        _write_idx(tmp_path / "labels", labels)
        bank = load_idx_bank(tmp_path / "imgs", tmp_path / "labels")
        np.testing.assert_allclose(bank.images, images / 255.0, atol=1e-7)
        np.testing.assert_array_equal(bank.labels, labels)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "bad").write_bytes(b"\x01\x02\x03\x04rest")
        with pytest.raises(ValueError, match="magic"):
            load_idx_bank(tmp_path / "bad", tmp_path / "bad")
