"""Pure-Python BM25 accumulation kernel (fallback for the Cython extension)."""


def accumulate_term(scores, postings_idx, postings_tf, idf, doc_len, avg_len, k1, b):
    """scores[p] += idf * tf*(k1+1) / (tf + k1*(1 - b + b*len/avg)) for each
    posting of one term. Mutates `scores` in place."""
    one_minus_b = 1.0 - b
    for j in range(len(postings_idx)):
        p = postings_idx[j]
        tf = postings_tf[j]
        norm = k1 * (one_minus_b + b * doc_len[p] / avg_len)
        scores[p] += idf * tf * (k1 + 1.0) / (tf + norm)


KERNEL_NAME = "python"
