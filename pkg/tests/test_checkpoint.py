import numpy as np
import pytest

from tnjet.checkpoint import CheckpointError, load_model, save_model
from tnjet.mps import MpsModel, build_mps
from tnjet.ttn import TtnModel, build_ttn


class TestRoundTrip:
    def test_mps_bit_exact(self, tmp_path, rng):
        m = build_mps(6, 3, 5, n_classes=4, label_site=2, seed=77)
        m = m.with_arrays([a + rng.normal(size=a.shape) for a in m.arrays()])
        path = tmp_path / "model.mpsc"
        save_model(m, path)
        loaded = load_model(path)
        assert isinstance(loaded, MpsModel)
        assert (loaded.n_sites, loaded.phys_dim, loaded.bond_cap) == (6, 3, 5)
        assert (loaded.n_classes, loaded.label_site, loaded.seed) == (4, 2, 77)
        for a, b in zip(m.arrays(), loaded.arrays()):
            assert np.array_equal(a.view(np.uint64), b.view(np.uint64))

    def test_ttn_bit_exact(self, tmp_path, rng):
        t = build_ttn(8, 3, 4, n_classes=3, seed=5)
        t = t.with_arrays([a * rng.normal() for a in t.arrays()])
        path = tmp_path / "model.ttnc"
        save_model(t, path)
        loaded = load_model(path)
        assert isinstance(loaded, TtnModel)
        assert (loaded.n_leaves, loaded.phys_dim, loaded.chi) == (8, 3, 4)
        assert (loaded.n_classes, loaded.seed) == (3, 5)
        for a, b in zip(t.arrays(), loaded.arrays()):
            assert np.array_equal(a.view(np.uint64), b.view(np.uint64))

    def test_save_load_save_is_identical(self, tmp_path):
        m = build_mps(4, 2, 3, seed=1)
        p1, p2 = tmp_path / "a.mpsc", tmp_path / "b.mpsc"
        save_model(m, p1)
        save_model(load_model(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestErrors:
    def test_unknown_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"WHAT" + b"\x00" * 64)
        with pytest.raises(CheckpointError, match="magic"):
            load_model(path)

    def test_truncated_payload(self, tmp_path):
        m = build_mps(4, 2, 3, seed=2)
        path = tmp_path / "model.mpsc"
        save_model(m, path)
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(CheckpointError, match="truncated"):
            load_model(path)

    def test_trailing_bytes(self, tmp_path):
        m = build_mps(4, 2, 3, seed=3)
        path = tmp_path / "model.mpsc"
        save_model(m, path)
        path.write_bytes(path.read_bytes() + b"\x00" * 8)
        with pytest.raises(CheckpointError, match="trailing"):
            load_model(path)

    def test_unsupported_type(self, tmp_path):
        with pytest.raises(TypeError):
            save_model(object(), tmp_path / "x.bin")
