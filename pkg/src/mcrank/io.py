"""
Readers and writers: matrices (CSV, MatrixMarket, PGM), convergence traces
(JSON, CSV), factor files, singular triplets and sampling weights.

Every writer goes through a temporary file in the destination directory that
is renamed into place, so a failed write never leaves a partial file.

Factor file layout (little-endian)::

    offset  size  field
    0       4     magic b"MCRF"
    4       2     format version (1)
    6       2     flags; bit 0 set = factors of A.T (row sampling)
    8       8     m   rows of X
    16      8     n   rows of Y
    24      8     k   number of factor pairs
    32      8     iteration counter
    40      4     CRC-32 of the payload
    44      4     reserved, zero
    48      ...   payload: x_1..x_k (m doubles each), y_1..y_k (n doubles
                  each), lambda_1..lambda_k

so the file is exactly ``48 + 8*k*(m + n) + 8*k`` bytes.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

from .engine import ApproxState, ConvergenceTrace, IterationRecord

__all__ = [
    "FormatError",
    "read_matrix_csv",
    "write_matrix_csv",
    "read_matrix_market",
    "write_matrix_market",
    "read_pgm",
    "write_pgm",
    "read_matrix",
    "write_trace",
    "read_trace",
    "trace_to_json",
    "write_factors",
    "read_factors",
    "write_triplets",
    "read_triplets",
    "write_weights_csv",
    "read_weights_csv",
    "FACTOR_MAGIC",
    "FACTOR_VERSION",
    "FACTOR_HEADER",
    "TRACE_FIELDS",
]

FACTOR_MAGIC = b"MCRF"
FACTOR_VERSION = 1
FACTOR_HEADER = struct.Struct("<4sHHQQQQI4x")


class FormatError(ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def _atomic_write(path, data):
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _parse_float(tok: str, line: int, what: str = "value") -> float:
    try:
        v = float(tok)
    except ValueError:
        raise FormatError(f"non-numeric {what} {tok!r}", line) from None
    if not math.isfinite(v):
        raise FormatError(f"non-finite {what} {tok!r}", line)
    return v


# -- CSV -------------------------------------------------------------------

def read_matrix_csv(path) -> np.ndarray:
    """Rectangular numeric CSV, one matrix row per line. Blank lines are skipped."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, fields in enumerate(csv.reader(fh), start=1):
            if not fields or all(not f.strip() for f in fields):
                continue
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise FormatError(f"ragged row: {len(fields)} fields, expected {width}", lineno)
            rows.append([_parse_float(f.strip(), lineno) for f in fields])
    if not rows:
        raise FormatError("empty matrix file")
    return np.array(rows, dtype=np.float64)


def write_matrix_csv(A, path):
    A = np.asarray(A, dtype=np.float64)
    text = "".join(",".join(_fmt(x) for x in row) + "\n" for row in A)
    _atomic_write(path, text)


# -- MatrixMarket ----------------------------------------------------------

def read_matrix_market(path) -> np.ndarray:
    """Real (or integer) general MatrixMarket file, array or coordinate.

    Symmetric, skew-symmetric, Hermitian, complex and pattern files are
    rejected.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError("empty MatrixMarket file")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "%%MatrixMarket" or head[1].lower() != "matrix":
        raise FormatError("bad MatrixMarket header", 1)
    layout, fieldtype, symmetry = (h.lower() for h in head[2:])
    if layout not in ("array", "coordinate"):
        raise FormatError(f"unknown layout {layout!r}", 1)
    if fieldtype not in ("real", "double", "integer"):
        raise FormatError(f"unsupported field {fieldtype!r}", 1)
    if symmetry != "general":
        raise FormatError(f"unsupported symmetry {symmetry!r}", 1)

    body = [(i, ln) for i, ln in enumerate(lines[1:], start=2)
            if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise FormatError("missing size line")
    size_line, size = body[0][0], body[0][1].split()
    try:
        dims = [int(s) for s in size]
    except ValueError:
        raise FormatError("non-integer size line", size_line) from None
    entries = body[1:]

    if layout == "array":
        if len(dims) != 2 or min(dims) < 1:
            raise FormatError("array size line needs positive 'rows cols'", size_line)
        m, n = dims
        if len(entries) != m * n:
            raise FormatError(f"expected {m * n} entries, found {len(entries)}")
        vals = [_parse_float(ln.strip(), i) for i, ln in entries]
        return np.array(vals, dtype=np.float64).reshape((n, m)).T.copy()

    if len(dims) != 3 or min(dims[:2]) < 1 or dims[2] < 0:
        raise FormatError("coordinate size line needs 'rows cols nnz'", size_line)
    m, n, nnz = dims
    if len(entries) != nnz:
        raise FormatError(f"expected {nnz} entries, found {len(entries)}")
    A = np.zeros((m, n))
    filled = set()
    for lineno, ln in entries:
        parts = ln.split()
        if len(parts) != 3:
            raise FormatError("coordinate entry needs 'row col value'", lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise FormatError("non-integer coordinate index", lineno) from None
        if not (1 <= i <= m and 1 <= j <= n):
            raise FormatError(f"index ({i}, {j}) out of bounds for {m}x{n}", lineno)
        if (i, j) in filled:
            raise FormatError(f"duplicate entry ({i}, {j})", lineno)
        filled.add((i, j))
        A[i - 1, j - 1] = _parse_float(parts[2], lineno)
    return A


def write_matrix_market(A, path, layout: str = "array"):
    A = np.asarray(A, dtype=np.float64)
    m, n = A.shape
    out = [f"%%MatrixMarket matrix {layout} real general"]
    if layout == "array":
        out.append(f"{m} {n}")
        out.extend(_fmt(x) for x in A.T.ravel())
    elif layout == "coordinate":
        nz = np.argwhere(A.T != 0)[:, ::-1]  # column-major order
        out.append(f"{m} {n} {len(nz)}")
        out.extend(f"{i + 1} {j + 1} {_fmt(A[i, j])}" for i, j in nz)
    else:
        raise ValueError(f"layout must be 'array' or 'coordinate', got {layout!r}")
    _atomic_write(path, "\n".join(out) + "\n")


# -- PGM -------------------------------------------------------------------

def _pgm_header(data: bytes):
    """Return (magic, width, height, maxval, payload_offset)."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise FormatError("truncated PGM header")
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"bad PGM magic {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError("non-integer PGM header field") from None
    if width < 1 or height < 1:
        raise FormatError(f"bad PGM size {width}x{height}")
    if not 1 <= maxval <= 255:
        raise FormatError(f"PGM maxval {maxval} unsupported (only 8-bit images)")
    return magic, width, height, maxval, pos


def read_pgm(path) -> np.ndarray:
    """Grayscale P2 or P5 image as a ``height x width`` float matrix."""
    data = Path(path).read_bytes()
    magic, width, height, maxval, pos = _pgm_header(data)
    count = width * height
    if magic == b"P5":
        payload = data[pos + 1:pos + 1 + count]
        if len(payload) < count:
            raise FormatError(f"truncated P5 payload: {len(payload)} of {count} bytes")
        px = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    else:
        toks = data[pos:].split()
        if len(toks) < count:
            raise FormatError(f"truncated P2 payload: {len(toks)} of {count} values")
        try:
            px = np.array([int(t) for t in toks[:count]], dtype=np.float64)
        except ValueError:
            raise FormatError("non-integer P2 pixel") from None
    if px.size and (px.min() < 0 or px.max() > maxval):
        raise FormatError(f"pixel outside [0, {maxval}]")
    return px.reshape(height, width)


def write_pgm(img, path, binary: bool = True, maxval: int = 255):
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("PGM images are 2-D")
    px = np.rint(img).astype(np.int64)
    if px.min() < 0 or px.max() > maxval or maxval > 255:
        raise ValueError(f"pixels must lie in [0, {maxval}] with maxval <= 255")
    h, w = px.shape
    if binary:
        data = f"P5\n{w} {h}\n{maxval}\n".encode() + px.astype(np.uint8).tobytes()
    else:
        body = "\n".join(" ".join(str(v) for v in row) for row in px)
        data = f"P2\n{w} {h}\n{maxval}\n{body}\n".encode()
    _atomic_write(path, data)


def read_matrix(path, fmt: str) -> np.ndarray:
    """Dispatch on ``fmt`` in {"csv", "mm", "pgm"}."""
    readers = {"csv": read_matrix_csv, "mm": read_matrix_market, "pgm": read_pgm}
    if fmt not in readers:
        raise ValueError(f"unknown matrix format {fmt!r}")
    return readers[fmt](path)


# -- traces ----------------------------------------------------------------

#: Per-iteration columns of the CSV trace, in order.
TRACE_FIELDS = (
    "t",
    "samples_total",
    "relative_error",
    "norm_b_sq",
    "residual_sq",
    "improvement_ratio",
    "ratio_to_initial",
    "basis_size",
    "n_sampled",
    "indices",
    "flops_mgs",
    "flops_product",
    "flops_gram",
    "flops_eigen",
    "flops_rotate",
)


def _record_dict(r: IterationRecord, include_timing: bool) -> dict:
    d = {
        "t": r.t,
        "samples_total": r.samples_total,
        "relative_error": r.relative_error,
        "norm_b_sq": r.norm_b_sq,
        "residual_sq": r.residual_sq,
        "improvement_ratio": r.improvement_ratio,
        "ratio_to_initial": r.ratio_to_initial,
        "basis_size": r.basis_size,
        "indices": list(r.indices),
        "flops": {key: int(v) for key, v in sorted(r.flops.items())},
    }
    if include_timing:
        d["wall_time"] = r.wall_time
    return d


def trace_to_json(trace: ConvergenceTrace, include_timing: bool = False) -> str:
    doc = {
        "format": "mcrank-trace",
        "version": 1,
        "config": trace.config,
        "a_norm_sq": trace.a_norm_sq,
        "optimum_relative_error": trace.optimum_relative_error,
        "stop_iteration": trace.stop_iteration,
        "stop_reason": trace.stop_reason,
        "records": [_record_dict(r, include_timing) for r in trace.records],
    }
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def write_trace(trace: ConvergenceTrace, path, fmt: str = "json", include_timing: bool = False):
    """Write a trace as JSON (full document) or CSV (one row per iteration).

    Wall-clock times are left out unless `include_timing` is set, so two runs
    with the same inputs produce byte-identical files.
    """
    if fmt == "json":
        _atomic_write(path, trace_to_json(trace, include_timing))
        return
    if fmt != "csv":
        raise ValueError(f"trace format must be 'json' or 'csv', got {fmt!r}")
    fields = TRACE_FIELDS + (("wall_time",) if include_timing else ())
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in trace.records:
        row = {
            "t": r.t,
            "samples_total": r.samples_total,
            "relative_error": _fmt(r.relative_error),
            "norm_b_sq": _fmt(r.norm_b_sq),
            "residual_sq": _fmt(r.residual_sq),
            "improvement_ratio": _fmt(r.improvement_ratio),
            "ratio_to_initial": _fmt(r.ratio_to_initial),
            "basis_size": r.basis_size,
            "n_sampled": len(r.indices),
            "indices": " ".join(str(i) for i in r.indices),
            "wall_time": _fmt(r.wall_time),
        }
        for key in ("mgs", "product", "gram", "eigen", "rotate"):
            row[f"flops_{key}"] = int(r.flops.get(key, 0))
        w.writerow([row[f] for f in fields])
    _atomic_write(path, buf.getvalue())


def read_trace(path) -> ConvergenceTrace:
    """Read a JSON trace written by :func:`write_trace`."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "mcrank-trace":
        raise FormatError("not a trace file")
    if doc.get("version") != 1:
        raise FormatError(f"unsupported trace version {doc.get('version')!r}")
    records = [
        IterationRecord(
            t=r["t"],
            norm_b_sq=r["norm_b_sq"],
            residual_sq=r["residual_sq"],
            relative_error=r["relative_error"],
            improvement_ratio=r["improvement_ratio"],
            ratio_to_initial=r["ratio_to_initial"],
            basis_size=r["basis_size"],
            samples_total=r["samples_total"],
            indices=tuple(r["indices"]),
            wall_time=r.get("wall_time", 0.0),
            flops=dict(r["flops"]),
        )
        for r in doc["records"]
    ]
    return ConvergenceTrace(
        config=doc["config"],
        a_norm_sq=doc["a_norm_sq"],
        records=records,
        optimum_relative_error=doc["optimum_relative_error"],
        stop_iteration=doc["stop_iteration"],
        stop_reason=doc["stop_reason"],
    )


# -- factors ---------------------------------------------------------------

def write_factors(state: ApproxState, path):
    m, k = state.X.shape
    n = state.Y.shape[0]
    payload = (
        np.ascontiguousarray(state.X.T, dtype="<f8").tobytes()
        + np.ascontiguousarray(state.Y.T, dtype="<f8").tobytes()
        + np.ascontiguousarray(state.lambdas, dtype="<f8").tobytes()
    )
    flags = 1 if state.orientation == "rows" else 0
    header = FACTOR_HEADER.pack(FACTOR_MAGIC, FACTOR_VERSION, flags, m, n, k,
                                state.iteration, zlib.crc32(payload))
    _atomic_write(path, header + payload)


def read_factors(path) -> ApproxState:
    """Inverse of :func:`write_factors`. The set of columns already read is
    not stored, so it comes back empty."""
    data = Path(path).read_bytes()
    if len(data) < FACTOR_HEADER.size:
        raise FormatError("factor file shorter than its header")
    magic, version, flags, m, n, k, iteration, crc = FACTOR_HEADER.unpack_from(data)
    if magic != FACTOR_MAGIC:
        raise FormatError(f"bad factor file magic {magic!r}")
    if version != FACTOR_VERSION:
        raise FormatError(f"factor file version {version} unsupported (expected {FACTOR_VERSION})")
    payload = data[FACTOR_HEADER.size:]
    if len(payload) != 8 * k * (m + n + 1):
        raise FormatError(f"payload is {len(payload)} bytes, header implies {8 * k * (m + n + 1)}")
    if zlib.crc32(payload) != crc:
        raise FormatError("factor file checksum mismatch")
    vals = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise FormatError(f"non-finite value at payload offset {8 * bad}")
    X = vals[: m * k].reshape(k, m).T.copy()
    Y = vals[m * k: m * k + n * k].reshape(k, n).T.copy()
    lam = vals[m * k + n * k:].copy()
    return ApproxState(X, Y, lam, iteration, frozenset(), "rows" if flags & 1 else "columns")


# -- triplets and weights --------------------------------------------------

def write_triplets(path, sigma, u, v, degenerate=None):
    """JSON with ``sigma`` and the vectors as lists of columns."""
    u, v = np.asarray(u), np.asarray(v)
    doc = {
        "rank": int(len(sigma)),
        "m": int(u.shape[0]),
        "n": int(v.shape[0]),
        "sigma": [float(s) for s in sigma],
        "u": [[float(x) for x in col] for col in u.T],
        "v": [[float(x) for x in col] for col in v.T],
    }
    if degenerate is not None:
        doc["degenerate"] = [bool(d) for d in degenerate]
    _atomic_write(path, json.dumps(doc, allow_nan=False) + "\n")


def read_triplets(path):
    with open(path) as fh:
        doc = json.load(fh)
    r, m, n = doc["rank"], doc["m"], doc["n"]
    sigma = np.array(doc["sigma"], dtype=np.float64)
    u = np.array(doc["u"], dtype=np.float64).reshape(r, m).T
    v = np.array(doc["v"], dtype=np.float64).reshape(r, n).T
    return sigma, u, v


def write_weights_csv(w, path):
    text = "index,weight\n" + "".join(f"{i},{_fmt(x)}\n" for i, x in enumerate(w))
    _atomic_write(path, text)


def read_weights_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["index", "weight"]:
        raise FormatError("weights file needs an 'index,weight' header", 1)
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise FormatError("expected 'index,weight'", lineno)
        if row[0] != str(len(out)):
            raise FormatError(f"index {row[0]!r} out of sequence", lineno)
        w = _parse_float(row[1], lineno, "weight")
        if w < 0:
            raise FormatError(f"negative weight {w!r}", lineno)
        out.append(w)
    return np.array(out, dtype=np.float64)
