"""Standard, self and cascade ensembles of generators, and sampling from them."""
from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import ShapeError
from .gan import GanModel, SnapshotStore, TrainConfig, discriminator_score, sample_generator, train_gan
from .numerics import MlpParams
from .synthdata import PointSet

log = logging.getLogger(__name__)

KINDS = ("standard", "self", "cascade")
POLICIES = ("equal_split", "uniform_random", "stage_shares")


@dataclass(frozen=True)
class Member:
    generator: MlpParams
    noise_dim: int
    init_seed: int
    epoch: int
    stage: int = 0


@dataclass(frozen=True)
class EnsembleModel:
    kind: str
    members: tuple[Member, ...]
    stage_shares: Optional[tuple[float, ...]] = None
    gate_thresholds: Optional[tuple[float, ...]] = None
    seeds: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if self.kind not in KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if not self.members:
            raise ValueError("ensemble needs at least one member")
        dims = {(m.noise_dim, m.generator.n_in, m.generator.n_out) for m in self.members}
        if len(dims) != 1 or any(m.noise_dim != m.generator.n_in for m in self.members):
            raise ShapeError("members disagree on noise or data dimension")
        if self.kind == "standard":
            seeds = [m.init_seed for m in self.members]
            if len(set(seeds)) != len(seeds):
                raise ValueError("standard ensemble members need distinct init seeds")
        elif self.kind == "self":
            if len({m.init_seed for m in self.members}) != 1:
                raise ValueError("self-ensemble members must share one init seed")
            epochs = [m.epoch for m in self.members]
            if any(b <= a for a, b in zip(epochs, epochs[1:])):
                raise ValueError("self-ensemble epochs must be strictly increasing")
        if self.stage_shares is not None:
            shares = tuple(float(s) for s in self.stage_shares)
            object.__setattr__(self, "stage_shares", shares)
            if len(shares) != len(self.members) or any(s < 0 for s in shares):
                raise ValueError("need one non-negative share per stage")
            if abs(sum(shares) - 1.0) > 1e-12:
                raise ValueError(f"stage shares sum to {sum(shares)!r}")
        elif self.kind == "cascade":
            raise ValueError("cascade ensembles need stage shares")
        if self.gate_thresholds is not None:
            object.__setattr__(self, "gate_thresholds", tuple(float(t) for t in self.gate_thresholds))

    @property
    def data_dim(self) -> int:
        return self.members[0].generator.n_out

    @property
    def noise_dim(self) -> int:
        return self.members[0].noise_dim

    def __len__(self):
        return len(self.members)


class GateDecision(NamedTuple):
    score: float
    threshold: float
    passed: int


def _train_member(args):
    data, cfg = args
    return train_gan(data, cfg)


def train_standard_ensemble(data, m: int, cfg: TrainConfig, seeds: Sequence[int],
                            jobs: int = 1) -> EnsembleModel:
    """Train ``m`` GANs from scratch, one per seed, each on all of ``data``."""
    seeds = [int(s) for s in seeds]
    if m < 2:
        raise ValueError("a standard ensemble needs m >= 2")
    if len(seeds) != m:
        raise ValueError(f"need exactly {m} seeds, got {len(seeds)}")
    if len(set(seeds)) != m:
        raise ValueError(f"duplicate seeds in {seeds}")
    tasks = [(data, replace(cfg, seed=s)) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(min(jobs, m)) as pool:
            models = list(pool.map(_train_member, tasks))
    else:
        models = [_train_member(t) for t in tasks]
    members = tuple(Member(g.generator, g.noise_dim, g.init_seed, g.epochs_trained) for g in models)
    return EnsembleModel("standard", members, seeds=tuple(seeds))


def train_self_ensemble(data, m: int, cfg: TrainConfig) -> EnsembleModel:
    """One training run; ``m`` generator snapshots drawn without replacement from the window."""
    if cfg.snapshot_window is None:
        raise ValueError("self-ensembles need cfg.snapshot_window")
    lo, hi = cfg.snapshot_window
    if m < 1 or hi - lo + 1 < m:
        raise ValueError(f"window {cfg.snapshot_window} holds fewer than {m} epochs")
    store = SnapshotStore()
    model = train_gan(data, cfg, store)
    pick_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
    epochs = sorted(int(e) for e in pick_rng.choice(store.epochs(), size=m, replace=False))
    members = tuple(Member(store.generators[e], model.noise_dim, model.init_seed, e) for e in epochs)
    return EnsembleModel("self", members, seeds=(cfg.seed,))


def gate_threshold(scores, r: float) -> float:
    """Threshold t such that the fraction of scores strictly above t is as close to ``r``
    as possible without exceeding it."""
    s = np.sort(np.asarray(scores, dtype=np.float64).ravel())
    n = s.size
    if n == 0:
        raise ValueError("scores must be non-empty")
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"ratio {r} outside [0, 1]")
    c = int(math.floor(r * n))
    while c + 1 <= n and (c + 1) / n <= r:
        c += 1
    while c > 0 and c / n > r:
        c -= 1
    if c == 0:
        return float(s[-1])
    if c == n:
        return float(np.nextafter(s[0], -np.inf))
    return float(s[n - c - 1])


def apply_gate(model: GanModel, data, t_r: float):
    """Split off the points the discriminator scores strictly above ``t_r``."""
    if not math.isfinite(t_r):
        raise ValueError("threshold must be finite")
    ps = data if isinstance(data, PointSet) else PointSet(data)
    scores = discriminator_score(model, ps)
    mask = scores > t_r
    decisions = [GateDecision(float(s), float(t_r), int(q)) for s, q in zip(scores, mask)]
    return ps.subset(np.flatnonzero(mask)), decisions


def cascade_shares(r: float, n_stages: int) -> tuple[float, ...]:
    """Stage k < K gets (1-r) r^(k-1), the last stage r^(K-1)."""
    shares = [(1.0 - r) * r ** k for k in range(n_stages - 1)]
    shares.append(r ** (n_stages - 1))
    return tuple(shares)


def train_cascade(data, stages: int, r: float, cfg: TrainConfig) -> EnsembleModel:
    """Train GANs in sequence, each on the points its predecessor's discriminator
    scores highest (a fraction ``r`` of its own training set)."""
    if stages < 2:
        raise ValueError("a cascade needs at least 2 stages")
    if not 0.0 < r < 1.0:
        raise ValueError(f"ratio {r} outside (0, 1)")
    current = data if isinstance(data, PointSet) else PointSet(data)
    members, thresholds, seeds = [], [], []
    for k in range(stages):
        seed = int(np.random.SeedSequence([cfg.seed, 3, k]).generate_state(1)[0]) if k else cfg.seed
        model = train_gan(current, replace(cfg, seed=seed))
        members.append(Member(model.generator, model.noise_dim, model.init_seed,
                              model.epochs_trained, stage=k + 1))
        seeds.append(seed)
        if k == stages - 1:
            break
        t = gate_threshold(discriminator_score(model, current), r)
        passed, _ = apply_gate(model, current, t)
        thresholds.append(t)
        if len(passed) < 2 * cfg.batch_size:
            warnings.warn(f"cascade truncated after stage {k + 1}: only {len(passed)} points passed the gate",
                          RuntimeWarning, stacklevel=2)
            break
        current = passed
    return EnsembleModel("cascade", tuple(members), cascade_shares(r, len(members)),
                         tuple(thresholds), tuple(seeds))


def quota_counts(n: int, weights: Sequence[float]) -> np.ndarray:
    """Split ``n`` by ``weights`` with largest-remainder rounding (ties to earlier members)."""
    w = np.asarray(weights, dtype=np.float64)
    raw = n * w / w.sum()
    counts = np.floor(raw + 1e-9).astype(np.int64)
    counts = np.minimum(counts, np.ceil(raw).astype(np.int64))
    rem = n - int(counts.sum())
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:rem]] += 1
    return counts


def member_counts(ens: EnsembleModel, n: int, policy: str, rng: Optional[np.random.Generator] = None):
    m = len(ens)
    if policy == "equal_split":
        if n < m:
            raise ValueError(f"equal_split needs n >= {m} members")
        counts = np.full(m, n // m, dtype=np.int64)
        counts[:n % m] += 1
        return counts, None
    if policy == "uniform_random":
        assign = rng.integers(0, m, size=n)
        return np.bincount(assign, minlength=m), assign
    if policy == "stage_shares":
        if ens.stage_shares is None:
            raise ValueError("stage_shares sampling needs a cascade ensemble")
        return quota_counts(n, ens.stage_shares), None
    raise ValueError(f"unknown sampling policy {policy!r}")


def ensemble_generate(ens: EnsembleModel, n: int, policy: str = "equal_split", seed=0) -> PointSet:
    """Draw exactly ``n`` points from the ensemble.

    Noise comes from one stream seeded by ``seed`` and consumed member by
    member, so a single-member ensemble reproduces ``generate`` exactly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    assign_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 4]))
    counts, assign = member_counts(ens, n, policy, assign_rng)
    noise_rng = np.random.default_rng(seed)
    chunks = [sample_generator(mem.generator, mem.noise_dim, int(c), noise_rng)
              for mem, c in zip(ens.members, counts)]
    if assign is None:
        return PointSet(np.vstack(chunks))
    out = np.empty((n, ens.data_dim))
    for k, chunk in enumerate(chunks):
        out[assign == k] = chunk
    return PointSet(out)
