"""Serialization: PGM bitmaps for sets, CSV + JSON header for functions."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import DomainError
from .grid import GranularFunction, GridSet, Lattice


def write_pgm(s: GridSet, path) -> Path:
    """Binary P5 PGM, one byte per cell, 255 = in set.

    Image rows run top to bottom, so row r holds lattice column j = n-1-r.
    """
    path = Path(path)
    img = np.where(s.mask, 255, 0).astype(np.uint8).T[::-1]
    n = s.lattice.n
    with open(path, "wb") as fh:
        fh.write(f"P5\n{n} {n}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())
    return path


def _pgm_tokens(data: bytes, count: int):
    tokens, pos = [], 0
    while len(tokens) < count:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path, delta: float, origin=(0.0, 0.0)) -> GridSet:
    data = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _pgm_tokens(data, 4)
    if magic != b"P5":
        raise DomainError("only binary P5 PGM is supported")
    w, h = int(w), int(h)
    if w != h or int(maxval) > 255:
        raise DomainError("expected a square 8-bit PGM")
    img = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos).reshape(h, w)
    mask = img[::-1].T >= 128
    return GridSet(mask, Lattice(w, delta, origin))


def write_function_csv(f: GranularFunction, path) -> tuple[Path, Path]:
    """Writes ``path`` (rows x,y,value at cell centers, nonzero cells only) and a
    sidecar ``.json`` header {L, delta, d, origin}."""
    path = Path(path)
    lat = f.lattice
    header = {"L": lat.L, "delta": lat.delta, "d": 2, "origin": list(lat.origin)}
    hpath = path.with_suffix(".json")
    hpath.write_text(json.dumps(header, indent=2) + "\n")
    X, Y = lat.centers()
    nz = np.nonzero(f.values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "value"])
        for x, y, v in zip(X[nz], Y[nz], f.values[nz]):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])
    return path, hpath


def read_function_csv(path) -> GranularFunction:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    if header.get("d", 2) != 2:
        raise DomainError("only d = 2 is supported")
    delta = float(header["delta"])
    n = int(round(float(header["L"]) / delta))
    lat = Lattice(n, delta, tuple(header.get("origin", (0.0, 0.0))))
    vals = lat.zeros()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            i = int(np.floor((float(row["x"]) - lat.origin[0]) / delta))
            j = int(np.floor((float(row["y"]) - lat.origin[1]) / delta))
            vals[i, j] = float(row["value"])
    return GranularFunction(vals, lat)
