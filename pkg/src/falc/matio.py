"""Matrix file formats.

Two on-disk formats are supported:

* CSV: one matrix row per line, '.' decimal reals, 17 significant digits.
* FMAT1: binary; magic bytes ``FMAT1\\0``, little-endian u64 rows, u64 cols,
  then rows*cols float64 entries in column-major order.

Readers reject NaN/Inf so non-finite values never enter solver paths.
"""

import struct

import numpy as np

MAGIC = b"FMAT1\x00"


def _validated(a, source):
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{source}: matrix contains NaN or Inf")
    return a


def write_matrix_csv(path, a):
    a = _validated(a, str(path))
    with open(path, "w") as fh:
        for row in np.atleast_2d(a):
            fh.write(",".join(format(x, ".17g") for x in row))
            fh.write("\n")


def read_matrix_csv(path):
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: unparsable real") from exc
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ValueError(f"{path}:{lineno}: ragged row")
            rows.append(row)
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    return _validated(np.array(rows), str(path))


def write_matrix_fmat(path, a):
    a = _validated(a, str(path))
    a = np.atleast_2d(a)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<QQ", a.shape[0], a.shape[1]))
        fh.write(np.asfortranarray(a).tobytes(order="F"))


def read_matrix_fmat(path):
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
        if head != MAGIC:
            raise ValueError(f"{path}: bad magic, not an FMAT1 file")
        rows, cols = struct.unpack("<QQ", fh.read(16))
        payload = fh.read()
    expected = rows * cols * 8
    if len(payload) != expected:
        raise ValueError(f"{path}: truncated payload ({len(payload)} != {expected})")
    data = np.frombuffer(payload, dtype="<f8")
    return _validated(data.reshape((rows, cols), order="F").copy(), str(path))
