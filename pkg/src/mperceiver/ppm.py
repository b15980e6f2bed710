"""Binary PPM (P6, 8-bit) image files.

Images travel through the system as float arrays of shape [3, H, W] with
values in [0, 1]; files hold the usual row-major RGB bytes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


class PpmError(ValueError):
    pass


def write_ppm(path: str | Path, img: np.ndarray) -> None:
    if img.ndim != 3 or img.shape[0] != 3:
        raise PpmError(f"expected [3,H,W] image, got {img.shape}")
    h, w = img.shape[1], img.shape[2]
    pixels = np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + pixels.transpose(1, 2, 0).tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    off = 0

    def token() -> bytes:
        nonlocal off
        while off < len(blob) and blob[off:off + 1].isspace():
            off += 1
        if off < len(blob) and blob[off:off + 1] == b"#":  # comment to end of line
            while off < len(blob) and blob[off:off + 1] != b"\n":
                off += 1
            return token()
        start = off
        while off < len(blob) and not blob[off:off + 1].isspace():
            off += 1
        if start == off:
            raise PpmError(f"{path}: truncated header at byte {start}")
        return blob[start:off]

    magic = token()
    if magic != b"P6":
        raise PpmError(f"{path}: bad magic {magic!r} at byte 0")
    try:
        w, h, maxval = int(token()), int(token()), int(token())
    except ValueError as e:
        raise PpmError(f"{path}: malformed header near byte {off}: {e}") from e
    if maxval != 255:
        raise PpmError(f"{path}: unsupported maxval {maxval} at byte {off}")
    off += 1  # single whitespace byte after maxval
    need = w * h * 3
    if len(blob) - off < need:
        raise PpmError(f"{path}: truncated pixel data at byte {len(blob)} (need {need + off})")
    pixels = np.frombuffer(blob, dtype=np.uint8, count=need, offset=off)
    img = pixels.reshape(h, w, 3).transpose(2, 0, 1).astype(np.float32) / 255.0
    return img
