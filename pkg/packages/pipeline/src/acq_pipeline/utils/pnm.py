"""
Plain-text PNM (P2 grayscale / P3 color), maxval 255.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np


def to_uint8(values: np.ndarray, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Map [lo, hi] → [0, 255] with round-half-up, clipping outside."""
    scaled = (np.asarray(values, dtype=np.float64) - lo) / (hi - lo)
    return np.clip(np.floor(scaled * 255.0 + 0.5), 0, 255).astype(np.uint8)


def _write(path: Path, magic: str, pixels: np.ndarray, width: int, height: int) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = pixels.reshape(height, -1)
    lines = [magic, f"{width} {height}", "255"]
    lines += [" ".join(str(int(v)) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def write_pgm(path: str | Path, pixels: np.ndarray) -> Path:
    """pixels: H×W uint8."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise ValueError(f"write_pgm: expected H×W pixels, got {pixels.shape}")
    h, w = pixels.shape
    _write(Path(path), "P2", pixels.astype(np.uint8), w, h)
    return Path(path)


def write_ppm(path: str | Path, pixels: np.ndarray) -> Path:
    """pixels: H×W×3 uint8."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"write_ppm: expected H×W×3 pixels, got {pixels.shape}")
    h, w, _ = pixels.shape
    _write(Path(path), "P3", pixels.astype(np.uint8), w, h)
    return Path(path)


def read_pnm(path: str | Path) -> np.ndarray:
    """Read P2 → H×W or P3 → H×W×3 uint8 (comments are skipped)."""
    tokens = []
    for line in Path(path).read_text(encoding="ascii").splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if not tokens or tokens[0] not in ("P2", "P3"):
        raise ValueError(f"{path}: not a plain PGM/PPM file")
    magic = tokens[0]
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    depth = 3 if magic == "P3" else 1
    values = np.array([int(t) for t in tokens[4:]], dtype=np.int64)
    if values.size != w * h * depth:
        raise ValueError(f"{path}: expected {w * h * depth} samples, found {values.size}")
    shape = (h, w, 3) if depth == 3 else (h, w)
    return values.reshape(shape).astype(np.uint8)


def image_to_ppm(path: str | Path, image: np.ndarray) -> Path:
    """C×H×W image in [−1, 1] → PPM (grayscale images are replicated)."""
    image = np.asarray(image)
    if image.ndim != 3:
        raise ValueError(f"image_to_ppm: expected C×H×W, got {image.shape}")
    if image.shape[0] == 1:
        image = np.repeat(image, 3, axis=0)
    return write_ppm(path, to_uint8(image.transpose(1, 2, 0), -1.0, 1.0))
