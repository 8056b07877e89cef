import json
import math

import numpy as np
import pytest

from etdkit import io


def test_field_round_trip_with_sidecar(tmp_path):
    a = np.arange(12, dtype=float).reshape(3, 4) / 7
    io.write_field(tmp_path / "f.bin", a, time=1.5)
    back, meta = io.read_field(tmp_path / "f.bin")
    assert np.array_equal(back, a)
    assert meta == {"dtype": "float64", "byte_order": "little", "shape": [3, 4], "time": 1.5}
    assert (tmp_path / "f.bin").stat().st_size == 12 * 8


def test_pgm_scaling(tmp_path):
    f = np.array([[0.0, 0.5], [1.0, 2.0]])
    lo, hi = io.write_pgm(tmp_path / "im.pgm", f)
    assert (lo, hi) == (0.0, 2.0)
    img = io.read_pgm(tmp_path / "im.pgm")
    assert img.tolist() == [[0, 64], [128, 255]]
    assert (tmp_path / "im.pgm").read_bytes().startswith(b"P5\n2 2\n255\n")


def test_constant_field_image_is_black(tmp_path):
    io.write_pgm(tmp_path / "c.pgm", np.full((2, 3), 4.0))
    assert np.all(io.read_pgm(tmp_path / "c.pgm") == 0)


def test_one_dimensional_field_becomes_single_row(tmp_path):
    io.write_pgm(tmp_path / "row.pgm", np.linspace(0, 1, 5))
    assert io.read_pgm(tmp_path / "row.pgm").shape == (1, 5)


def test_field_with_image_records_scale(tmp_path):
    io.write_field_with_image(tmp_path / "r", np.array([[1.0, 3.0]]), parameter="r")
    _, meta = io.read_field(tmp_path / "r.bin")
    assert meta["image_min"] == 1.0 and meta["image_max"] == 3.0 and meta["parameter"] == "r"


def test_csv_is_exact_and_crlf(tmp_path):
    x = 0.1 + 0.2
    io.write_csv(tmp_path / "t.csv", ["a", "b"], [["s", x], ["t", float("nan")]])
    raw = (tmp_path / "t.csv").read_bytes()
    assert raw.count(b"\r\n") == 3
    header, rows = io.read_csv(tmp_path / "t.csv")
    assert header == ["a", "b"] and float(rows[0][1]) == x and rows[1][1] == "nan"


def test_json_replaces_non_finite(tmp_path):
    io.write_json(tmp_path / "o.json", {"b": np.float64(math.inf), "a": np.arange(2), "c": np.bool_(True)})
    text = (tmp_path / "o.json").read_text()
    assert json.loads(text) == {"a": [0, 1], "b": None, "c": True}
    assert text.index('"a"') < text.index('"b"')


def test_pgm_rejects_other_formats(tmp_path):
    (tmp_path / "x.pgm").write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(ValueError):
        io.read_pgm(tmp_path / "x.pgm")
