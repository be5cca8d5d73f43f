"""Grayscale PGM dumps of windows, spectrograms and piano rolls."""

import numpy as np


def write_pgm(path, image):
    """Write a 2-D array scaled to [0, 1] as a binary 8-bit PGM (row 0 at the top)."""
    img = np.asarray(image, dtype=np.float64)
    peak = img.max() if img.size else 0.0
    if peak > 0:
        img = img / peak
    data = np.clip(np.round(img * 255), 0, 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"P5":
            raise ValueError("not a binary PGM")
        w, h = map(int, fh.readline().split())
        fh.readline()
        return np.frombuffer(fh.read(w * h), dtype=np.uint8).reshape(h, w)


def time_frequency_image(matrix):
    """(frames, rows) -> image with time on the x axis and low rows at the bottom."""
    return np.asarray(matrix).T[::-1]
