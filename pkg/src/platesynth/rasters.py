"""PNG and PFM writers/readers for the emitted modalities."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ManifestError


def write_rgb_png(path: str | Path, rgb: np.ndarray) -> None:
    arr = np.ascontiguousarray(rgb, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) RGB, got {arr.shape}")
    Image.fromarray(arr).save(path, format="PNG")


def write_id_png(path: str | Path, ids: np.ndarray) -> None:
    """16-bit greyscale label image."""
    arr = np.asarray(ids)
    if arr.ndim != 2 or arr.min(initial=0) < 0 or arr.max(initial=0) > 0xFFFF:
        raise ValueError("id image must be 2D with values in [0, 65535]")
    Image.fromarray(np.ascontiguousarray(arr, dtype=np.uint16)).save(path, format="PNG")


def write_mask_png(path: str | Path, mask: np.ndarray) -> None:
    """Binary mask as 8-bit greyscale: 255 inside, 0 outside."""
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")


def read_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im)


def read_mask_png(path: str | Path) -> np.ndarray:
    return read_png(path) > 127


def write_pfm(path: str | Path, depth: np.ndarray) -> None:
    """Single-channel little-endian PFM (scale -1); rows stored bottom-up."""
    arr = np.asarray(depth, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D depth map, got {arr.shape}")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(arr[::-1], dtype="<f4").tobytes())


_PFM_HEADER = re.compile(rb"^(Pf|PF)\s+(\d+)\s+(\d+)\s+(\S+)\s")


def read_pfm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = _PFM_HEADER.match(data)
    if m is None:
        raise ManifestError(f"{path}: not a PFM file")
    channels = 3 if m.group(1) == b"PF" else 1
    w, h = int(m.group(2)), int(m.group(3))
    scale = float(m.group(4))
    dtype = "<f4" if scale < 0 else ">f4"
    body = data[m.end():]
    expected = w * h * channels * 4
    if len(body) != expected:
        raise ManifestError(f"{path}: expected {expected} data bytes, found {len(body)}")
    arr = np.frombuffer(body, dtype=dtype).reshape(h, w, channels) if channels == 3 else \
        np.frombuffer(body, dtype=dtype).reshape(h, w)
    return arr[::-1].astype(np.float32)
