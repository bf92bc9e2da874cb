"""Columnar binary persistence of posterior draws.

Layout (all integers and floats little-endian):

    bytes 0-4   magic b"TSLH1"
    byte  5     format version (1)
    uint32      number of columns
    uint64      number of rows
    per column: uint16 name length + UTF-8 name bytes
    per column: rows x float64 values (column-contiguous)

Scalar draw keys become one column each; the stage-2 loading matrix H is
stored as one column per exogenous variable, named ``H[<column>]``.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"TSLH1"
VERSION = 1


def columns_from_chain(chain) -> dict:
    cols = {}
    for key, values in chain.draws.items():
        if key == "H":
            for j, name in enumerate(chain.x_columns):
                cols[f"H[{name}]"] = np.asarray(values[:, j], dtype="<f8")
        else:
            cols[key] = np.asarray(values, dtype="<f8")
    cols["chain"] = np.full(chain.n_retained, float(chain.chain_id), dtype="<f8")
    return cols


def write_draws(path, chains) -> None:
    """Persist the retained draws of every chain, stacked row-wise."""
    per_chain = [columns_from_chain(c) for c in chains]
    names = list(per_chain[0].keys())
    stacked = {
        name: np.concatenate([pc[name] for pc in per_chain]) for name in names
    }
    n_rows = len(next(iter(stacked.values())))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", VERSION))
        fh.write(struct.pack("<I", len(names)))
        fh.write(struct.pack("<Q", n_rows))
        for name in names:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
        for name in names:
            fh.write(stacked[name].astype("<f8").tobytes())


def read_draws(path) -> dict:
    """Load a draws file back into {column name: float64 array}."""
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != MAGIC:
            raise ValueError(f"not a TSLH draws file (magic {magic!r})")
        version = struct.unpack("<B", fh.read(1))[0]
        if version != VERSION:
            raise ValueError(f"unsupported draws format version {version}")
        n_cols = struct.unpack("<I", fh.read(4))[0]
        n_rows = struct.unpack("<Q", fh.read(8))[0]
        names = []
        for _ in range(n_cols):
            ln = struct.unpack("<H", fh.read(2))[0]
            names.append(fh.read(ln).decode("utf-8"))
        out = {}
        for name in names:
            raw = fh.read(8 * n_rows)
            out[name] = np.frombuffer(raw, dtype="<f8").copy()
    return out
