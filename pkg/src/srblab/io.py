"""CSV output with a '#'-prefixed provenance block."""
import csv
from pathlib import Path

import numpy as np


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows, header_lines=(), int_cols=0):
    """Write one header line of column names after the comment block.

    ``rows`` is a 2-d array or an iterable of sequences. The first
    ``int_cols`` columns of an array are written as integers.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        if isinstance(rows, np.ndarray):
            for r in rows:
                w.writerow([str(int(v)) if j < int_cols else repr(float(v)) for j, v in enumerate(r)])
        else:
            for r in rows:
                w.writerow([_fmt(v) for v in r])
    return path


def write_record(path, record, header_lines=()):
    """Flat key,value file."""
    return write_csv(path, ["key", "value"], [(k, v) for k, v in record.items()], header_lines)


def read_header(path):
    """The '#' comment lines of a CSV written by :func:`write_csv`."""
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            out.append(line[1:].strip())
    return out


def header_digest(path):
    for line in read_header(path):
        if line.startswith("config_digest="):
            return line.split("=", 1)[1]
    return None
