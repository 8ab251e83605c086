"""Nearest-neighbour retrieval evaluation of generated point sets.

For every test point we record the distances to its k nearest generated
points, summarize them as the relative increase over a train-set baseline and
compare methods pairwise with a Wilcoxon signed-rank test on the 1-NN column.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._native import get_kernels
from .errors import ShapeError
from .synthdata import PointSet

EXACT_MAX_N = 20


@dataclass(frozen=True)
class DistanceMatrix:
    d: np.ndarray  # [n_test, k], row-sorted
    label: str = ""

    @property
    def n_test(self) -> int:
        return self.d.shape[0]

    @property
    def k(self) -> int:
        return self.d.shape[1]

    def column_means(self) -> np.ndarray:
        return self.d.mean(axis=0)


@dataclass(frozen=True)
class WilcoxonResult:
    n_effective: int
    w_plus: float
    p_value: float
    code: int
    alpha: float
    exact: bool


@dataclass(frozen=True)
class ComparisonMatrix:
    labels: tuple[str, ...]
    codes: np.ndarray  # [m, m] of +1/0/-1
    tallies: Optional[np.ndarray] = None  # [m, m, 3]: counts of +1, 0, -1

    def tally_string(self, a: int, b: int) -> str:
        t = self.tallies[a, b]
        return f"{t[0]}/{t[1]}/{t[2]}"


def _as_points(x) -> np.ndarray:
    return np.ascontiguousarray(x.points if isinstance(x, PointSet) else x, dtype=np.float64)


def knn_distances(queries, generated, k: int, label: str = "", jobs: int = 1,
                  backend: Optional[str] = None) -> DistanceMatrix:
    """Exact brute-force Euclidean k-NN distances, one sorted row per query."""
    q, g = _as_points(queries), _as_points(generated)
    if q.ndim != 2 or g.ndim != 2 or q.shape[1] != g.shape[1]:
        raise ShapeError(f"queries {q.shape} and generated {g.shape} live in different spaces")
    if k < 1 or k > g.shape[0]:
        raise ValueError(f"k={k} must lie in [1, {g.shape[0]}]")
    kern = get_kernels(backend)
    out = np.empty((q.shape[0], k))
    if jobs <= 1 or q.shape[0] < 2 * jobs:
        kern.knn_rows(q, g, out, 0, q.shape[0])
    else:
        bounds = np.linspace(0, q.shape[0], jobs + 1).astype(int)
        with ThreadPoolExecutor(jobs) as pool:
            list(pool.map(lambda lh: kern.knn_rows(q, g, out, lh[0], lh[1]), zip(bounds[:-1], bounds[1:])))
    return DistanceMatrix(out, label)


def dhat(method: DistanceMatrix, baseline: DistanceMatrix, j: int = 1) -> float:
    """Relative increase of the mean j-th neighbour distance over the baseline (j is 1-based)."""
    if method.n_test != baseline.n_test:
        raise ShapeError("method and baseline were evaluated on different test sets")
    if not 1 <= j <= min(method.k, baseline.k):
        raise ValueError(f"j={j} outside the available neighbour columns")
    base = baseline.d[:, j - 1].mean()
    if base == 0:
        raise ZeroDivisionError("baseline mean distance is zero")
    return float((method.d[:, j - 1].mean() - base) / base)


def dhat_curve(method: DistanceMatrix, baseline: DistanceMatrix) -> np.ndarray:
    k = min(method.k, baseline.k)
    return np.array([dhat(method, baseline, j) for j in range(1, k + 1)])


def signed_ranks(diffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Doubled mid-ranks of |diffs| (integers) and the sign of each diff."""
    absd = np.abs(diffs)
    order = np.argsort(absd, kind="stable")
    ranks2 = np.empty(len(diffs), dtype=np.int64)
    sorted_abs = absd[order]
    i = 0
    n = len(diffs)
    while i < n:
        j = i
        while j + 1 < n and sorted_abs[j + 1] == sorted_abs[i]:
            j += 1
        # 1-based positions i+1..j+1, mid-rank (i+j+2)/2, doubled
        ranks2[order[i:j + 1]] = i + j + 2
        i = j + 1
    return ranks2, np.sign(diffs)


def signrank_exact_p(ranks2: np.ndarray, observed2: int, backend: Optional[str] = None) -> float:
    n = len(ranks2)
    count = get_kernels(backend).signrank_tail_count(np.ascontiguousarray(ranks2, dtype=np.int64),
                                                     int(observed2))
    return min(1.0, count / 2.0 ** n)


def signrank_normal_p(ranks2: np.ndarray, observed2: int) -> float:
    n = len(ranks2)
    mu = n * (n + 1) / 4.0
    _, counts = np.unique(ranks2, return_counts=True)
    tie_term = float(((counts.astype(np.float64) ** 3) - counts).sum()) / 48.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    if var <= 0:
        return 1.0
    dev = max(abs(observed2 / 2.0 - mu) - 0.5, 0.0)
    return min(1.0, math.erfc(dev / math.sqrt(var) / math.sqrt(2.0)))


def wilcoxon_signed_rank(a, b, alpha: float = 0.05, exact_max: int = EXACT_MAX_N,
                         backend: Optional[str] = None) -> WilcoxonResult:
    """Two-sided paired test on ``a - b``.

    code is +1 when the difference is significant and ``a`` tends to be the
    smaller (better) one, -1 when ``b`` is, 0 otherwise.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"paired samples differ in length: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("need at least one pair")
    diffs = a - b
    diffs = diffs[diffs != 0]
    n = diffs.size
    if n == 0:
        return WilcoxonResult(0, 0.0, 1.0, 0, alpha, True)
    ranks2, signs = signed_ranks(diffs)
    observed2 = int(ranks2[signs > 0].sum())
    exact = n <= exact_max
    p = signrank_exact_p(ranks2, observed2, backend) if exact else signrank_normal_p(ranks2, observed2)
    total2 = int(ranks2.sum())
    code = 0
    if p < alpha:
        code = 1 if 2 * observed2 < total2 else -1
    return WilcoxonResult(n, observed2 / 2.0, p, code, alpha, exact)


def comparison_matrix(matrices: Sequence[DistanceMatrix] = (), alpha: float = 0.05,
                      repetitions: Optional[Sequence[Sequence[DistanceMatrix]]] = None,
                      labels: Optional[Sequence[str]] = None) -> ComparisonMatrix:
    """Pairwise Wilcoxon codes on the 1-NN distances.

    With ``repetitions`` (one list of matrices per run, same method order) the
    result also carries per-cell tallies; ``codes`` then hold the first run.
    """
    runs = [list(r) for r in repetitions] if repetitions is not None else [list(matrices)]
    if not runs or len(runs[0]) < 1:
        raise ValueError("no methods to compare")
    m = len(runs[0])
    if labels is None:
        labels = [dm.label for dm in runs[0]]
    labels = tuple(labels)
    if len(labels) != m:
        raise ValueError("one label per method required")
    tallies = np.zeros((m, m, 3), dtype=np.int64)
    first = None
    for run in runs:
        if len(run) != m:
            raise ShapeError("every repetition must cover the same methods")
        n_test = {dm.n_test for dm in run}
        if len(n_test) != 1:
            raise ShapeError(f"inconsistent test-set sizes {sorted(n_test)}")
        codes = np.zeros((m, m), dtype=np.int64)
        for i in range(m):
            for j in range(i + 1, m):
                c = wilcoxon_signed_rank(run[i].d[:, 0], run[j].d[:, 0], alpha).code
                codes[i, j], codes[j, i] = c, -c
        for i in range(m):
            for j in range(m):
                tallies[i, j, 1 - codes[i, j]] += 1
        if first is None:
            first = codes
    return ComparisonMatrix(labels, first, tallies if repetitions is not None else None)


def write_distance_matrix_csv(path, dm: DistanceMatrix) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"d{j}" for j in range(1, dm.k + 1)])
        for row in dm.d:
            w.writerow([repr(float(v)) for v in row])


def read_distance_matrix_csv(path, label: str = "") -> DistanceMatrix:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return DistanceMatrix(np.array([[float(v) for v in r] for r in rows[1:] if r]), label)


def write_comparison_csv(path, cm: ComparisonMatrix, tallies: bool = False) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method"] + list(cm.labels))
        for i, lab in enumerate(cm.labels):
            if tallies:
                cells = [cm.tally_string(i, j) for j in range(len(cm.labels))]
            else:
                cells = [str(int(c)) for c in cm.codes[i]]
            w.writerow([lab] + cells)


def write_dhat_csv(path, curves: dict) -> None:
    """``curves`` maps method label -> sequence of d-hat values for j = 1, 2, ..."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "j", "dhat"])
        for label, curve in curves.items():
            for j, v in enumerate(curve, start=1):
                w.writerow([label, j, repr(float(v))])
