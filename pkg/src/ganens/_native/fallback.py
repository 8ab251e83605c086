"""Pure-numpy versions of the compiled kernels, bit-for-bit compatible."""
import numpy as np


def knn_rows(queries, generated, out, lo, hi, chunk=256):
    k = out.shape[1]
    for start in range(lo, hi, chunk):
        stop = min(start + chunk, hi)
        acc = np.zeros((stop - start, generated.shape[0]))
        for c in range(queries.shape[1]):
            diff = queries[start:stop, c, None] - generated[None, :, c]
            acc += diff * diff
        if k < acc.shape[1]:
            acc = np.partition(acc, k - 1, axis=1)[:, :k]
        acc.sort(axis=1)
        out[start:stop] = np.sqrt(acc)


def signrank_tail_count(ranks2, observed2):
    ranks2 = np.asarray(ranks2, dtype=np.int64)
    total = int(ranks2.sum())
    sums = np.zeros(1, dtype=np.int64)
    for r in ranks2:
        sums = np.concatenate([sums, sums + r])
    return int(np.count_nonzero(np.abs(2 * sums - total) >= abs(2 * int(observed2) - total)))
