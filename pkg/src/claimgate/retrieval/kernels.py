"""Kernel selection: compiled extension when available, pure Python otherwise.

Both kernels implement the same `accumulate_term` contract; equivalence is
tested, and benchmarks/bench_bm25.py compares their throughput.
"""

try:
    from ._score_cy import KERNEL_NAME, accumulate_term
except ImportError:  # extension not built
    from ._score_py import KERNEL_NAME, accumulate_term

__all__ = ["accumulate_term", "KERNEL_NAME"]
