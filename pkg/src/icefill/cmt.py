"""Complex Matrix Text (CMT) file format.

Line 1 holds ``rows cols``; each following line holds one matrix row of
whitespace-separated entries written as ``RE{+|-}IMj`` (for example
``1.5-0.25j``).  Values are written with enough digits to round-trip
bit-identically.
"""

from __future__ import annotations

import os

import numpy as np

from .linalg import as_matrix


def format_entry(z: complex) -> str:
    return f"{z.real:.17g}{z.imag:+.17g}j"


def dumps(m) -> str:
    a = as_matrix(m)
    rows, cols = a.shape
    lines = [f"{rows} {cols}"]
    for r in range(rows):
        lines.append(" ".join(format_entry(a[r, c]) for c in range(cols)))
    return "\n".join(lines) + "\n"


def loads(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty CMT content")
    head = lines[0].split()
    if len(head) != 2:
        raise ValueError(f"malformed CMT header: {lines[0]!r}")
    try:
        rows, cols = int(head[0]), int(head[1])
    except ValueError as exc:
        raise ValueError(f"malformed CMT header: {lines[0]!r}") from exc
    if rows <= 0 or cols <= 0:
        raise ValueError("CMT dimensions must be positive")
    if len(lines) - 1 != rows:
        raise ValueError(f"expected {rows} data lines, found {len(lines) - 1}")
    out = np.empty((rows, cols), dtype=complex)
    for r, line in enumerate(lines[1:]):
        toks = line.split()
        if len(toks) != cols:
            raise ValueError(f"line {r + 2}: expected {cols} entries, found {len(toks)}")
        try:
            out[r] = [complex(t) for t in toks]
        except ValueError as exc:
            raise ValueError(f"line {r + 2}: bad complex literal") from exc
    if not np.all(np.isfinite(out)):
        raise ValueError("CMT content contains non-finite entries")
    return out


def save(path, m) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        fh.write(dumps(m))
    os.replace(tmp, path)


def load(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        return loads(fh.read())
