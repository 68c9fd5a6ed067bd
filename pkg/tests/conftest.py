import os

# Pin BLAS threading before numpy loads anywhere in the test process, so
# reductions use one deterministic summation order on every machine.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")
