# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython BM25 accumulation kernel. Same contract as _score_py."""


def accumulate_term(double[::1] scores, int[::1] postings_idx, double[::1] postings_tf,
                    double idf, int[::1] doc_len, double avg_len, double k1, double b):
    cdef Py_ssize_t j, p
    cdef double tf, norm
    cdef double one_minus_b = 1.0 - b
    for j in range(postings_idx.shape[0]):
        p = postings_idx[j]
        tf = postings_tf[j]
        norm = k1 * (one_minus_b + b * doc_len[p] / avg_len)
        scores[p] += idf * tf * (k1 + 1.0) / (tf + norm)


KERNEL_NAME = "cython"
