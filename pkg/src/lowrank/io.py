"""Text formats: dense matrices, observation triplets, sensing operators, traces.

Dense matrix::

    rows cols
    a11 a12 ...
    ...

Observations (0-based, sorted by (i, j))::

    m n
    i j value

Sensing operator: a ``m n d`` header followed by ``d`` dense matrix blocks.
Floats are written with 17 significant digits so they round-trip exactly.
"""

import csv
import io
import os
import tempfile

import numpy as np

from .errors import ShapeMismatch
from .linalg import as_matrix
from .operators import ObservationSet, SensingOperator
from .sensing import ConvergenceTrace, TraceRecord

TRACE_HEADER = ["iter", "residual", "dist_u", "dist_v", "elapsed_ms"]


def fmt(x):
    return format(float(x), ".17g")


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _matrix_lines(A):
    lines = [f"{A.shape[0]} {A.shape[1]}"]
    lines.extend(" ".join(fmt(x) for x in row) for row in A)
    return lines


def dumps_matrix(A):
    return "\n".join(_matrix_lines(as_matrix(A))) + "\n"


def _parse_matrix(lines, start=0):
    rows, cols = (int(t) for t in lines[start].split())
    body = lines[start + 1 : start + 1 + rows]
    if len(body) != rows:
        raise ShapeMismatch(f"expected {rows} rows, found {len(body)}")
    data = np.array([[float(t) for t in line.split()] for line in body], dtype=np.float64).reshape(rows, -1)
    if data.shape != (rows, cols):
        raise ShapeMismatch(f"expected {rows}x{cols} entries, found {data.shape}")
    return as_matrix(data), start + 1 + rows


def _content_lines(text):
    return [line for line in text.splitlines() if line.strip()]


def loads_matrix(text):
    return _parse_matrix(_content_lines(text))[0]


def write_matrix(path, A):
    atomic_write(path, dumps_matrix(A))


def read_matrix(path):
    with open(path) as fh:
        return loads_matrix(fh.read())


def dumps_observations(obs):
    lines = [f"{obs.m} {obs.n}"]
    lines.extend(f"{i} {j} {fmt(v)}" for i, j, v in zip(obs.rows, obs.cols, obs.values))
    return "\n".join(lines) + "\n"


def loads_observations(text):
    lines = _content_lines(text)
    m, n = (int(t) for t in lines[0].split())
    rows, cols, values = [], [], []
    for line in lines[1:]:
        i, j, v = line.split()
        rows.append(int(i))
        cols.append(int(j))
        values.append(float(v))
    return ObservationSet(m, n, np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), np.array(values))


def write_observations(path, obs):
    atomic_write(path, dumps_observations(obs))


def read_observations(path):
    with open(path) as fh:
        return loads_observations(fh.read())


def dumps_operator(op):
    lines = [f"{op.m} {op.n} {op.d}"]
    for A in op.mats:
        lines.extend(_matrix_lines(A))
    return "\n".join(lines) + "\n"


def loads_operator(text):
    lines = _content_lines(text)
    m, n, d = (int(t) for t in lines[0].split())
    mats, pos = [], 1
    for _ in range(d):
        A, pos = _parse_matrix(lines, pos)
        if A.shape != (m, n):
            raise ShapeMismatch(f"operator block has shape {A.shape}, header says {(m, n)}")
        mats.append(A)
    return SensingOperator(np.stack(mats))


def write_operator(path, op):
    atomic_write(path, dumps_operator(op))


def read_operator(path):
    with open(path) as fh:
        return loads_operator(fh.read())


def _cell(x):
    return "" if x is None else fmt(x)


def dumps_trace(trace):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for r in trace.records:
        writer.writerow([r.iter, fmt(r.residual), _cell(r.dist_u), _cell(r.dist_v), fmt(r.elapsed_ms)])
    return buf.getvalue()


def loads_trace(text):
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != TRACE_HEADER:
        raise ValueError(f"unexpected trace header {header}")
    trace = ConvergenceTrace()
    for row in reader:
        if not row:
            continue
        it, res, du, dv, ms = row
        trace.records.append(
            TraceRecord(int(it), float(res), float(du) if du else None, float(dv) if dv else None, float(ms))
        )
    return trace


def write_trace(path, trace):
    atomic_write(path, dumps_trace(trace))


def read_trace(path):
    with open(path, newline="") as fh:
        return loads_trace(fh.read())
