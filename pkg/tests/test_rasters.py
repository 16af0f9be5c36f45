import numpy as np
import pytest

from platesynth.errors import ManifestError
from platesynth.rasters import (read_mask_png, read_pfm, read_png, write_id_png, write_mask_png, write_pfm,
                                write_rgb_png)


def test_pfm_round_trip_with_inf(tmp_path):
    depth = np.random.default_rng(0).uniform(0.1, 2.0, (7, 5)).astype(np.float32)
    depth[0, 0] = np.inf
    write_pfm(tmp_path / "d.pfm", depth)
    back = read_pfm(tmp_path / "d.pfm")
    assert back.dtype == np.float32 and back.tobytes() == depth.tobytes()


def test_pfm_layout(tmp_path):
    depth = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], np.float32)
    write_pfm(tmp_path / "d.pfm", depth)
    raw = (tmp_path / "d.pfm").read_bytes()
    assert raw.startswith(b"Pf\n2 3\n-1.0\n")
    # bottom row first, little-endian
    body = np.frombuffer(raw[len(b"Pf\n2 3\n-1.0\n"):], "<f4")
    assert body.tolist() == [5.0, 6.0, 3.0, 4.0, 1.0, 2.0]


def test_pfm_truncated(tmp_path):
    write_pfm(tmp_path / "d.pfm", np.ones((4, 4), np.float32))
    data = (tmp_path / "d.pfm").read_bytes()
    (tmp_path / "d.pfm").write_bytes(data[:-3])
    with pytest.raises(ManifestError):
        read_pfm(tmp_path / "d.pfm")
    (tmp_path / "x.pfm").write_bytes(b"P6\n1 1\n255\n\0\0\0")
    with pytest.raises(ManifestError):
        read_pfm(tmp_path / "x.pfm")


def test_id_png_is_16_bit(tmp_path):
    ids = np.array([[0, 1, 300], [65535, 7, 0]])
    write_id_png(tmp_path / "i.png", ids)
    back = read_png(tmp_path / "i.png")
    assert back.tolist() == ids.tolist()
    with pytest.raises(ValueError):
        write_id_png(tmp_path / "bad.png", np.array([[70000]]))


def test_rgb_and_mask(tmp_path):
    rgb = np.random.default_rng(1).integers(0, 256, (6, 4, 3), dtype=np.uint8)
    write_rgb_png(tmp_path / "c.png", rgb)
    assert np.array_equal(read_png(tmp_path / "c.png"), rgb)
    mask = np.random.default_rng(2).random((6, 4)) < 0.5
    write_mask_png(tmp_path / "m.png", mask)
    assert np.array_equal(read_mask_png(tmp_path / "m.png"), mask)
    assert set(np.unique(read_png(tmp_path / "m.png")).tolist()) <= {0, 255}
