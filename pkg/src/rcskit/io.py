"""Probability-table and sample files.

Text table: ``ptable v1 n=<n>`` then ``M`` decimal floats in index order.
Binary table: ``PTB1``, little-endian u32 ``n``, then ``M`` little-endian f64.
Sample: ``sample v1 n=<n>`` then one 0/1 string per line, most significant
qubit first, in sampling order.  Headerless 0/1 files are read by
:func:`read_plain_bitstrings`.
"""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

from .bitspace import ProbabilityTable, SampleRecord, check_dense

_PT_HEADER = re.compile(r"^ptable v1 n=(\d+)\s*$")
_SAMPLE_HEADER = re.compile(r"^sample v1 n=(\d+)\s*$")
PTB_MAGIC = b"PTB1"


class FormatError(ValueError):
    pass


def write_ptable(path, table: ProbabilityTable, binary: bool = False) -> None:
    path = Path(path)
    if binary:
        with path.open("wb") as f:
            f.write(PTB_MAGIC + struct.pack("<I", table.n))
            f.write(table.probs.astype("<f8").tobytes())
        return
    with path.open("w") as f:
        f.write(f"ptable v1 n={table.n}\n")
        f.write("\n".join(repr(float(p)) for p in table.probs))
        f.write("\n")


def read_ptable(path) -> ProbabilityTable:
    """Read a text or binary table; the format is detected from the first bytes."""
    path = Path(path)
    with path.open("rb") as f:
        head = f.read(4)
        if head == PTB_MAGIC:
            raw = f.read(4)
            if len(raw) != 4:
                raise FormatError(f"{path}: truncated PTB1 header")
            n = struct.unpack("<I", raw)[0]
            check_dense(n)
            data = np.frombuffer(f.read(), dtype="<f8")
            if data.size != 1 << n:
                raise FormatError(f"{path}: expected {1 << n} entries, found {data.size}")
            return ProbabilityTable(n, data.astype(float))
    with path.open() as f:
        first = f.readline()
        m = _PT_HEADER.match(first)
        if not m:
            raise FormatError(f"{path}: missing 'ptable v1 n=<n>' header")
        n = int(m.group(1))
        check_dense(n)
        try:
            data = np.loadtxt(f, dtype=float, ndmin=1)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None
    if data.size != 1 << n:
        raise FormatError(f"{path}: expected {1 << n} entries, found {data.size}")
    return ProbabilityTable(n, data)


def _format_draws(draws: np.ndarray, n: int) -> list[str]:
    bits = ((draws[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(np.uint8) + ord("0")
    return [row.tobytes().decode() for row in bits]


def write_samples(path, sample: SampleRecord) -> None:
    with Path(path).open("w") as f:
        f.write(f"sample v1 n={sample.n}\n")
        f.write("\n".join(_format_draws(sample.draws, sample.n)))
        f.write("\n")


def _parse_lines(lines: list[str], n: int | None, where: str) -> SampleRecord:
    rows = [ln.strip() for ln in lines if ln.strip()]
    if not rows:
        raise FormatError(f"{where}: no bitstrings")
    n = len(rows[0]) if n is None else n
    if n > 62:
        raise FormatError(f"{where}: bitstrings longer than 62 are not supported")
    for i, r in enumerate(rows):
        if len(r) != n or r.strip("01"):
            raise FormatError(f"{where}: line {i + 1} is not a {n}-bit 0/1 string")
    arr = np.frombuffer("".join(rows).encode(), dtype=np.uint8).reshape(len(rows), n) - ord("0")
    draws = arr.astype(np.int64) @ (np.int64(1) << np.arange(n - 1, -1, -1, dtype=np.int64))
    return SampleRecord(n, draws, {"source": where})


def read_samples(path) -> SampleRecord:
    path = Path(path)
    with path.open() as f:
        first = f.readline()
        m = _SAMPLE_HEADER.match(first)
        if not m:
            raise FormatError(f"{path}: missing 'sample v1 n=<n>' header")
        return _parse_lines(f.readlines(), int(m.group(1)), str(path))


def read_plain_bitstrings(path) -> SampleRecord:
    """Headerless adapter: one 0/1 string per line, most significant qubit first."""
    path = Path(path)
    with path.open() as f:
        return _parse_lines(f.readlines(), None, str(path))


def read_any_samples(path) -> SampleRecord:
    with Path(path).open() as f:
        first = f.readline()
    return read_samples(path) if first.startswith("sample v1") else read_plain_bitstrings(path)
