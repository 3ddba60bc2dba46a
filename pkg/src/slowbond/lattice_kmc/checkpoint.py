"""Run-length-encoded occupation snapshots.

One snapshot per line: ``macro_time first_value run1 run2 ...`` where the runs
alternate between the first value and its complement.
"""

from __future__ import annotations

import numpy as np


def rle_encode(bits: np.ndarray) -> tuple[int, np.ndarray]:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size == 0:
        return 0, np.zeros(0, dtype=np.int64)
    change = np.flatnonzero(np.diff(bits)) + 1
    edges = np.concatenate([[0], change, [bits.size]])
    return int(bits[0]), np.diff(edges)


def rle_decode(first: int, runs) -> np.ndarray:
    runs = np.asarray(runs, dtype=np.int64)
    values = (np.arange(runs.size) + first) % 2
    return np.repeat(values, runs).astype(np.uint8)


def write_snapshot(fh, macro_time: float, bits: np.ndarray) -> None:
    first, runs = rle_encode(bits)
    fh.write(f"{macro_time!r} {first} " + " ".join(map(str, runs)) + "\n")


def read_snapshots(path):
    out = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            out.append((float(parts[0]), rle_decode(int(parts[1]), [int(p) for p in parts[2:]])))
    return out
