"""Generator/discriminator pair and the alternating minimax training loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ShapeError, TrainingDivergenceError
from .numerics import MlpParams, adam_init, adam_step, init_mlp, mlp_backward, mlp_forward
from .synthdata import PointSet

log = logging.getLogger(__name__)

EPS = 1e-7
LOSS_VARIANTS = ("minimax", "non_saturating")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    d_steps: int = 1
    g_loss: str = "non_saturating"
    snapshot_window: Optional[tuple[int, int]] = None
    snapshot_discriminator: bool = False
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    noise_dim: int = 2
    gen_hidden: tuple[int, ...] = (64, 64)
    disc_hidden: tuple[int, ...] = (64, 64)
    leaky_slope: float = 0.2
    init_std: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "gen_hidden", tuple(self.gen_hidden))
        object.__setattr__(self, "disc_hidden", tuple(self.disc_hidden))
        if self.snapshot_window is not None:
            lo, hi = self.snapshot_window
            object.__setattr__(self, "snapshot_window", (int(lo), int(hi)))
            if not 0 <= lo <= hi <= self.epochs:
                raise ValueError(f"snapshot window {self.snapshot_window} must satisfy 0 <= lo <= hi <= epochs")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2")
        if self.d_steps < 1:
            raise ValueError("d_steps must be >= 1")
        if self.g_loss not in LOSS_VARIANTS:
            raise ValueError(f"g_loss must be one of {LOSS_VARIANTS}")
        if self.noise_dim < 1:
            raise ValueError("noise_dim must be >= 1")


@dataclass(frozen=True)
class GanModel:
    generator: MlpParams
    discriminator: MlpParams
    noise_dim: int
    epochs_trained: int = 0
    init_seed: int = 0

    def __post_init__(self):
        if self.generator.n_in != self.noise_dim:
            raise ShapeError("generator input width must equal noise_dim")
        if self.generator.n_out != self.discriminator.n_in:
            raise ShapeError("generator output and discriminator input widths differ")
        if self.discriminator.n_out != 1 or self.discriminator.layers[-1].activation != "sigmoid":
            raise ShapeError("discriminator must end in a single sigmoid unit")

    @property
    def data_dim(self) -> int:
        return self.generator.n_out


@dataclass
class SnapshotStore:
    generators: dict = field(default_factory=dict)  # epoch -> MlpParams
    discriminators: dict = field(default_factory=dict)

    def epochs(self) -> list[int]:
        return sorted(self.generators)


def init_gan(data_dim: int, cfg: TrainConfig, seed: Optional[int] = None) -> GanModel:
    seed = cfg.seed if seed is None else seed
    g_rng, d_rng = (np.random.default_rng(s) for s in np.random.SeedSequence([seed, 0]).spawn(2))
    gen = init_mlp([cfg.noise_dim, *cfg.gen_hidden, data_dim],
                   ["relu"] * len(cfg.gen_hidden) + ["identity"], g_rng, cfg.init_std)
    disc = init_mlp([data_dim, *cfg.disc_hidden, 1],
                    ["leaky_relu"] * len(cfg.disc_hidden) + ["sigmoid"], d_rng, cfg.init_std,
                    slope=cfg.leaky_slope)
    return GanModel(gen, disc, cfg.noise_dim, 0, seed)


def _clamp(s) -> np.ndarray:
    return np.clip(np.asarray(s, dtype=np.float64), EPS, 1.0 - EPS)


def d_loss(scores_real, scores_fake) -> float:
    """Negated minimax value: -(mean log D(x) + mean log(1 - D(G(z))))."""
    r, f = _clamp(scores_real), _clamp(scores_fake)
    if r.size == 0 or f.size == 0:
        raise ValueError("score vectors must be non-empty")
    return float(-(np.log(r).mean() + np.log1p(-f).mean()))


def g_loss(scores_fake, variant: str = "non_saturating") -> float:
    f = _clamp(scores_fake)
    if f.size == 0:
        raise ValueError("score vector must be non-empty")
    if variant == "minimax":
        return float(np.log1p(-f).mean())
    if variant == "non_saturating":
        return float(-np.log(f).mean())
    raise ValueError(f"unknown generator loss {variant!r}")


def _inside(s: np.ndarray) -> np.ndarray:
    return ((s > EPS) & (s < 1.0 - EPS)).astype(np.float64)


def d_loss_grads(scores_real: np.ndarray, scores_fake: np.ndarray):
    """Gradients of d_loss w.r.t. the (unclamped) score vectors."""
    r, f = _clamp(scores_real), _clamp(scores_fake)
    gr = -1.0 / r / r.size * _inside(scores_real)
    gf = 1.0 / (1.0 - f) / f.size * _inside(scores_fake)
    return gr, gf


def g_loss_grad(scores_fake: np.ndarray, variant: str) -> np.ndarray:
    f = _clamp(scores_fake)
    if variant == "minimax":
        g = -1.0 / (1.0 - f) / f.size
    else:
        g = -1.0 / f / f.size
    return g * _inside(scores_fake)


def _points(x) -> np.ndarray:
    return x.points if isinstance(x, PointSet) else np.asarray(x, dtype=np.float64)


def discriminator_score(model: GanModel, points) -> np.ndarray:
    x = _points(points)
    if x.ndim != 2 or x.shape[1] != model.data_dim:
        raise ShapeError(f"points of shape {x.shape} do not match data dimension {model.data_dim}")
    out, _ = mlp_forward(model.discriminator, x)
    return out[:, 0]


def sample_generator(gen: MlpParams, noise_dim: int, n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((n, noise_dim))
    out, _ = mlp_forward(gen, z)
    return out


def generate(model: GanModel, n: int, seed) -> PointSet:
    if n < 1:
        raise ValueError("n must be >= 1")
    return PointSet(sample_generator(model.generator, model.noise_dim, n, np.random.default_rng(seed)))


def _d_update(model_d, d_opt, real, fake):
    n_real = real.shape[0]
    out, cache = mlp_forward(model_d, np.vstack([real, fake]))
    s = out[:, 0]
    loss = d_loss(s[:n_real], s[n_real:])
    gr, gf = d_loss_grads(s[:n_real], s[n_real:])
    grads, _ = mlp_backward(model_d, cache, np.concatenate([gr, gf])[:, None])
    new_d, d_opt = adam_step(model_d, grads, d_opt)
    return new_d, d_opt, loss


def _g_update(gen, g_opt, disc, noise, variant):
    fake, g_cache = mlp_forward(gen, noise)
    out, d_cache = mlp_forward(disc, fake)
    s = out[:, 0]
    loss = g_loss(s, variant)
    _, dx = mlp_backward(disc, d_cache, g_loss_grad(s, variant)[:, None])
    grads, _ = mlp_backward(gen, g_cache, dx)
    new_g, g_opt = adam_step(gen, grads, g_opt)
    return new_g, g_opt, loss


def train_gan(data, cfg: TrainConfig, snapshot_sink: Optional[SnapshotStore] = None,
              init: Optional[GanModel] = None) -> GanModel:
    """Alternate ``cfg.d_steps`` discriminator updates with one generator update per batch.

    One epoch is a seeded shuffled pass over ``data`` in full mini-batches (a
    trailing partial batch is dropped). When ``snapshot_sink`` is given, the
    generator after every epoch inside ``cfg.snapshot_window`` is recorded.
    """
    x = _points(data)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training data must be a non-empty 2-D point set")
    model = init if init is not None else init_gan(x.shape[1], cfg)
    if model.data_dim != x.shape[1]:
        raise ShapeError("model and data dimensions differ")
    gen, disc = model.generator, model.discriminator
    opt_kw = dict(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    g_opt, d_opt = adam_init(gen, **opt_kw), adam_init(disc, **opt_kw)
    train_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    bs = min(cfg.batch_size, x.shape[0])
    n_batches = max(x.shape[0] // bs, 1)
    lo, hi = cfg.snapshot_window if cfg.snapshot_window is not None else (1, 0)

    def record(epoch):
        if snapshot_sink is not None and lo <= epoch <= hi:
            snapshot_sink.generators[epoch] = gen
            if cfg.snapshot_discriminator:
                snapshot_sink.discriminators[epoch] = disc

    record(0)
    for epoch in range(1, cfg.epochs + 1):
        perm = train_rng.permutation(x.shape[0])
        for b in range(n_batches):
            real = x[perm[b * bs:(b + 1) * bs]]
            try:
                for _ in range(cfg.d_steps):
                    fake = sample_generator(gen, cfg.noise_dim, real.shape[0], train_rng)
                    disc, d_opt, dl = _d_update(disc, d_opt, real, fake)
                noise = train_rng.standard_normal((real.shape[0], cfg.noise_dim))
                gen, g_opt, gl = _g_update(gen, g_opt, disc, noise, cfg.g_loss)
            except TrainingDivergenceError as exc:
                raise TrainingDivergenceError(f"training diverged at epoch {epoch}, batch {b}: {exc}",
                                              layer=exc.layer, epoch=epoch, batch=b) from exc
            if not (np.isfinite(dl) and np.isfinite(gl)):
                raise TrainingDivergenceError(f"non-finite loss at epoch {epoch}, batch {b}",
                                              epoch=epoch, batch=b)
        record(epoch)
        log.debug("epoch %d: d_loss=%.4f g_loss=%.4f", epoch, dl, gl)
    return replace(model, generator=gen, discriminator=disc,
                   epochs_trained=model.epochs_trained + cfg.epochs)
