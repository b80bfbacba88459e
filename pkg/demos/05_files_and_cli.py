"""
Files and the command line
==========================

Write a matrix, run the ``mcrank`` command on it, and read back the trace,
the factor file and the singular triplets it produced.
"""

import tempfile
from pathlib import Path

import numpy as np

from mcrank import io as mio
from mcrank import reconstruct, svd_oracle
from mcrank.cli import main

work = Path(tempfile.mkdtemp())
A = np.random.default_rng(12).standard_normal((120, 40)) @ np.diag(np.logspace(1, -1, 40))

# MatrixMarket array files are column-major; CSV is one row per line.
mio.write_matrix_market(A, work / "a.mtx")
mio.write_matrix_csv(A, work / "a.csv")
assert (mio.read_matrix_market(work / "a.mtx") == mio.read_matrix_csv(work / "a.csv")).all()

# Same as: mcrank approximate --input a.mtx --format mm --k 8 ...
code = main([
    "approximate", "--input", str(work / "a.mtx"), "--format", "mm",
    "--k", "8", "--l", "8", "--seed", "3",
    "--trace", str(work / "trace.csv"), "--trace-format", "csv",
    "--factors-out", str(work / "b.mcrf"), "--triplets-out", str(work / "est.json"),
])
print("exit code", code)

# The CSV trace has one row per iteration: enough to plot error against the
# number of columns read.
print((work / "trace.csv").read_text().splitlines()[0])

# The factor file stores x_1..x_k and y_1..y_k: k (m + n) numbers, not m n.
state = mio.read_factors(work / "b.mcrf")
size = (work / "b.mcrf").stat().st_size
print(f"factor file {size} bytes for a {A.shape} matrix ({A.nbytes} bytes dense)")
print("max |A - B| entry:", np.abs(A - reconstruct(state)).max())

sigma, u, v = mio.read_triplets(work / "est.json")
print("estimated sigma:", np.round(sigma, 4))
print("exact sigma:    ", np.round(svd_oracle(A).singular_values[:8], 4))

# The exact oracle is also on the command line, with exit code 5 above its cap.
print("svd exit code with --max-dim 10:",
      main(["svd", "--input", str(work / "a.csv"), "--format", "csv", "--max-dim", "10"]))
