"""Report emission: deterministic CSV files and a resolved-config log.

All CSVs use '.' decimals, LF line endings, and a header row; float
formatting is shortest round-trip, so identical runs produce
byte-identical files.
"""

import json
import os

import numpy as np


def fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(x) for x in row) + "\n")


def write_matrix_csv(path, matrix, col_prefix="c"):
    header = [f"{col_prefix}{j}" for j in range(matrix.shape[1])]
    write_csv(path, header, matrix.tolist())


def write_run_log(path, config):
    """Echo the fully resolved config; re-parsing it reproduces the run."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")
