import numpy as np
import pytest

from sadq.checkpoint import (
    FORMAT_VERSION,
    CorruptChecksum,
    VersionMismatch,
    load_checkpoint,
    save_checkpoint,
)


def sample_payload():
    rng = np.random.default_rng(0)
    arrays = {
        "net/w0": rng.normal(size=(8, 4)).astype(np.float32),
        "net/b0": rng.normal(size=4),
        "buffer/a": rng.integers(0, 5, size=16),
        "buffer/done": rng.random(16) < 0.5,
    }
    meta = {
        "seed": 3,
        "counters": {"env_steps": 123, "grad_steps": 7},
        "rng_state": {"state": 2 ** 100 + 17, "inc": 5},
        "obs": np.array([0.25, -1.5, np.inf]),
        "losses": [0.5, float("nan")],
    }
    return arrays, meta


class TestRoundtrip:
    def test_arrays_bit_equal(self, tmp_path):
        arrays, meta = sample_payload()
        path = str(tmp_path / "run.ckpt")
        save_checkpoint(path, arrays, meta)
        back, meta2 = load_checkpoint(path)
        assert set(back) == set(arrays)
        for name in arrays:
            assert back[name].dtype == arrays[name].dtype
            np.testing.assert_array_equal(back[name], arrays[name])

    def test_meta_roundtrip(self, tmp_path):
        arrays, meta = sample_payload()
        path = str(tmp_path / "run.ckpt")
        save_checkpoint(path, arrays, meta)
        _, meta2 = load_checkpoint(path)
        assert meta2["seed"] == 3
        assert meta2["counters"] == {"env_steps": 123, "grad_steps": 7}
        # big integers (PCG64-style state) survive exactly
        assert meta2["rng_state"]["state"] == 2 ** 100 + 17
        np.testing.assert_array_equal(meta2["obs"], meta["obs"])
        assert meta2["losses"][0] == 0.5 and np.isnan(meta2["losses"][1])

    def test_save_is_atomic(self, tmp_path):
        arrays, meta = sample_payload()
        path = str(tmp_path / "run.ckpt")
        save_checkpoint(path, arrays, meta)
        before = open(path, "rb").read()
        save_checkpoint(path, arrays, meta)
        assert open(path, "rb").read() == before
        assert not (tmp_path / "run.ckpt.tmp").exists()


class TestCorruption:
    def test_truncated_rejected(self, tmp_path):
        arrays, meta = sample_payload()
        path = str(tmp_path / "run.ckpt")
        save_checkpoint(path, arrays, meta)
        raw = open(path, "rb").read()
        for cut in (10, len(raw) // 2, len(raw) - 1):
            open(path, "wb").write(raw[:cut])
            with pytest.raises(CorruptChecksum):
                load_checkpoint(path)

    def test_bitflip_rejected(self, tmp_path):
        arrays, meta = sample_payload()
        path = str(tmp_path / "run.ckpt")
        save_checkpoint(path, arrays, meta)
        raw = bytearray(open(path, "rb").read())
        raw[len(raw) // 2] ^= 0x40
        open(path, "wb").write(bytes(raw))
        with pytest.raises(CorruptChecksum):
            load_checkpoint(path)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"x" * 100)
        with pytest.raises(CorruptChecksum):
            load_checkpoint(str(path))

    def test_version_mismatch(self, tmp_path):
        import json
        import hashlib
        import struct
        from sadq.checkpoint import MAGIC

        header = json.dumps({"version": FORMAT_VERSION + 1, "arrays": [],
                             "meta": {}}).encode()
        body = MAGIC + struct.pack("<I", len(header)) + header
        path = str(tmp_path / "future.ckpt")
        with open(path, "wb") as fh:
            fh.write(body + hashlib.sha256(body).digest())
        with pytest.raises(VersionMismatch):
            load_checkpoint(path)
