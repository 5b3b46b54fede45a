import numpy as np
import pytest

from diffinv.fileio import (
    MAGIC,
    load_tensor,
    load_tensor_text,
    parse_kv_file,
    save_tensor,
    save_tensor_binary,
    save_tensor_text,
)


class TestTextTensors:
    def test_round_trip_is_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        arr = rng.standard_normal((3, 4, 5))
        path = tmp_path / "t.txt"
        save_tensor(path, arr)
        loaded = load_tensor(path)
        assert loaded.shape == arr.shape
        np.testing.assert_array_equal(loaded, arr)  # %.17g round-trips float64

    def test_one_dimensional(self, tmp_path):
        arr = np.array([1.5, -2.25, 3e-300])
        path = tmp_path / "v.txt"
        save_tensor_text(path, arr)
        np.testing.assert_array_equal(load_tensor_text(path), arr)

    def test_header_format(self, tmp_path):
        path = tmp_path / "t.txt"
        save_tensor(path, np.zeros((2, 3)))
        first = path.read_text().splitlines()[0]
        assert first == "shape: 2 3"

    def test_rejects_missing_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1.0 2.0\n")
        with pytest.raises(ValueError, match="shape"):
            load_tensor(path)

    def test_rejects_wrong_count(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("shape: 2 2\n1.0 2.0 3.0\n")
        with pytest.raises(ValueError, match="expected 4 values"):
            load_tensor(path)

    def test_rejects_non_numeric(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("shape: 2\n1.0 oops\n")
        with pytest.raises(ValueError, match="non-numeric"):
            load_tensor(path)


class TestBinaryTensors:
    def test_round_trip_float32(self, tmp_path):
        rng = np.random.default_rng(1)
        arr = rng.standard_normal((4, 4))
        path = tmp_path / "t.bin"
        save_tensor(path, arr)
        loaded = load_tensor(path)
        assert loaded.dtype == np.float64
        np.testing.assert_array_equal(loaded, arr.astype(np.float32).astype(np.float64))

    def test_magic_sniffing(self, tmp_path):
        path = tmp_path / "nosuffix"
        save_tensor_binary(path, np.ones(3))
        assert path.read_bytes()[:8] == MAGIC
        np.testing.assert_array_equal(load_tensor(path), np.ones(3))

    def test_rejects_truncated(self, tmp_path):
        path = tmp_path / "t.bin"
        save_tensor_binary(path, np.ones((2, 2)))
        blob = path.read_bytes()
        path.write_bytes(blob[:-4])
        with pytest.raises(ValueError, match="expected 4 float32"):
            load_tensor(path)


class TestKvFiles:
    def test_parse_with_comments(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text(
            "# full line comment\n"
            "seed = 7\n"
            "omega-e = 5.5  # trailing comment\n"
            "\n"
            "Method = anderson\n"
        )
        out = parse_kv_file(path)
        assert out == {"seed": "7", "omega_e": "5.5", "method": "anderson"}

    def test_rejects_malformed_lines(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("just some words\n")
        with pytest.raises(ValueError, match="key = value"):
            parse_kv_file(path)
        path.write_text("key =\n")
        with pytest.raises(ValueError, match="empty"):
            parse_kv_file(path)
