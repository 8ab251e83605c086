"""Config-driven experiment pipeline: train, generate, evaluate, report."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from . import __version__
from .checkpoint import save_checkpoint
from .ensembles import ensemble_generate, train_cascade, train_self_ensemble, train_standard_ensemble
from .errors import ConfigError, TrainingDivergenceError
from .evaluation import (comparison_matrix, dhat_curve, knn_distances, write_comparison_csv,
                         write_dhat_csv, write_distance_matrix_csv)
from .gan import TrainConfig, generate, train_gan
from .synthdata import (PRESETS, Component, MixtureSpec, PointSet, SplitSpec, block_normalize,
                        sample_mixture, train_test_split)

log = logging.getLogger(__name__)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ComponentCfg(_Strict):
    mean: list[float]
    weight: float
    std: Optional[float] = None
    cov: Optional[list[list[float]]] = None

    @model_validator(mode="after")
    def _one_cov(self):
        if (self.std is None) == (self.cov is None):
            raise ValueError("give exactly one of 'std' or 'cov'")
        return self


class DistributionCfg(_Strict):
    preset: Optional[Literal["ring8", "bimodal_imbalanced"]] = None
    params: dict[str, Union[float, int, list[float]]] = {}
    components: Optional[list[ComponentCfg]] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.preset is None) == (self.components is None):
            raise ValueError("give exactly one of 'preset' or 'components'")
        return self

    def build(self) -> MixtureSpec:
        if self.preset is not None:
            return PRESETS[self.preset](**self.params)
        comps = []
        for c in self.components:
            cov = np.eye(len(c.mean)) * c.std ** 2 if c.std is not None else np.array(c.cov)
            comps.append(Component(np.array(c.mean), cov, c.weight))
        return MixtureSpec(tuple(comps))


class SplitCfg(_Strict):
    train: float = 0.8
    test: float = 0.2
    seed: int = 0


class TrainCfg(_Strict):
    epochs: int = 30
    batch_size: int = 64
    d_steps: int = 1
    g_loss: Literal["minimax", "non_saturating"] = "non_saturating"
    snapshot_window: Optional[tuple[int, int]] = None
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    noise_dim: int = 2
    gen_hidden: list[int] = [64, 64]
    disc_hidden: list[int] = [64, 64]
    leaky_slope: float = 0.2
    init_std: float = 0.02

    def build(self, seed: int, window=None) -> TrainConfig:
        kw = self.model_dump()
        if window is not None:
            kw["snapshot_window"] = tuple(window)
        return TrainConfig(seed=int(seed), **kw)


class MethodCfg(_Strict):
    label: str
    kind: Literal["gan", "egan", "segan", "cgan"]
    m: Optional[int] = None
    r: Optional[float] = None
    stages: int = 2
    window: Optional[tuple[int, int]] = None
    policy: Optional[Literal["equal_split", "uniform_random", "stage_shares"]] = None

    @model_validator(mode="after")
    def _kind_params(self):
        if self.kind in ("egan", "segan") and (self.m is None or self.m < (2 if self.kind == "egan" else 1)):
            raise ValueError(f"{self.kind} needs an ensemble size 'm'")
        if self.kind == "cgan":
            if self.r is None or not 0 < self.r < 1:
                raise ValueError("cgan needs a ratio 'r' in (0, 1)")
            if self.stages < 2:
                raise ValueError("cgan needs stages >= 2")
        if self.policy == "stage_shares" and self.kind != "cgan":
            raise ValueError("policy 'stage_shares' only applies to cgan")
        return self

    @property
    def sampling_policy(self) -> str:
        if self.policy is not None:
            return self.policy
        return "stage_shares" if self.kind == "cgan" else "equal_split"


class ExperimentConfig(_Strict):
    distribution: DistributionCfg
    n_samples: int = 12500
    split: SplitCfg = SplitCfg()
    train: TrainCfg = TrainCfg()
    methods: list[MethodCfg]
    n_generated: int = 10000
    k: int = 10
    repetitions: int = 10
    alpha: float = 0.05
    output_dir: str = "runs/experiment"
    master_seed: int = 0
    baseline_label: str = "pdata"

    @field_validator("methods")
    @classmethod
    def _unique_labels(cls, v):
        labels = [m.label for m in v]
        dup = sorted({lab for lab in labels if labels.count(lab) > 1})
        if dup:
            raise ValueError(f"duplicate method labels {dup}")
        if not v:
            raise ValueError("at least one method is required")
        return v

    @model_validator(mode="after")
    def _sizes(self):
        problems = []
        if self.n_generated < self.k:
            problems.append("n_generated must be >= k")
        n_train = int(round(self.split.train * self.n_samples))
        if n_train < self.n_generated:
            problems.append(f"training split ({n_train} points) is smaller than n_generated "
                            f"({self.n_generated}) needed for the train-set baseline")
        if self.baseline_label in {m.label for m in self.methods}:
            problems.append(f"method label {self.baseline_label!r} clashes with the baseline label")
        for m in self.methods:
            if m.kind == "segan":
                window = m.window or self.train.snapshot_window
                if window is None:
                    problems.append(f"{m.label}: segan needs a snapshot window")
                elif not 0 <= window[0] <= window[1] <= self.train.epochs or window[1] - window[0] + 1 < m.m:
                    problems.append(f"{m.label}: window {tuple(window)} cannot hold {m.m} distinct epochs "
                                    f"within {self.train.epochs} epochs")
        if self.repetitions < 1:
            problems.append("repetitions must be >= 1")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def config_hash(self) -> str:
        doc = self.model_dump(mode="json", exclude={"output_dir"})
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def load_config(source) -> ExperimentConfig:
    """Parse and validate a config path, JSON string or dict. Raises ConfigError."""
    if isinstance(source, ExperimentConfig):
        return source
    try:
        if isinstance(source, dict):
            return ExperimentConfig.model_validate(source)
        text = Path(source).read_text()
        return ExperimentConfig.model_validate_json(text)
    except ValidationError as exc:
        problems = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            problems.append(f"{loc}: {err['msg']}")
        raise ConfigError(problems) from None
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from None


def derive_seed(master: int, *parts) -> int:
    """Counter-style seed: a hash of (master, parts), independent of sibling keys."""
    digest = hashlib.sha256(json.dumps([int(master), *parts]).encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", label).strip("_") or "method"


def _train_method(method: MethodCfg, cfg: ExperimentConfig, train: PointSet, seed: int):
    tc = cfg.train
    if method.kind == "gan":
        model = train_gan(train, tc.build(seed))
        return model, generate(model, cfg.n_generated, derive_seed(seed, "generate")), [seed]
    if method.kind == "egan":
        seeds = [derive_seed(seed, "member", i) for i in range(method.m)]
        ens = train_standard_ensemble(train, method.m, tc.build(seed), seeds)
    elif method.kind == "segan":
        ens = train_self_ensemble(train, method.m, tc.build(seed, method.window or tc.snapshot_window))
        seeds = [seed]
    else:
        ens = train_cascade(train, method.stages, method.r, tc.build(seed))
        seeds = list(ens.seeds)
    gen = ensemble_generate(ens, cfg.n_generated, method.sampling_policy, derive_seed(seed, "generate"))
    return ens, gen, seeds


def _run_repetition(cfg: ExperimentConfig, rep: int, test: PointSet, n_train: int) -> dict:
    spec = cfg.distribution.build()
    train = sample_mixture(spec, n_train, derive_seed(cfg.master_seed, "train", rep))
    base_idx = np.random.default_rng(derive_seed(cfg.master_seed, "baseline", rep)).choice(
        n_train, size=cfg.n_generated, replace=False)
    out = {"rep": rep, "status": "ok", "methods": {}}
    generated = {}
    for method in cfg.methods:
        info = {"status": "ok", "attempts": []}
        for attempt in range(2):
            seed = derive_seed(cfg.master_seed, "method", method.label, rep, attempt)
            t0 = time.perf_counter()
            try:
                model, gen, seeds = _train_method(method, cfg, train, seed)
            except TrainingDivergenceError as exc:
                info["attempts"].append({"seed": seed, "error": str(exc)})
                log.warning("rep %d, %s diverged (attempt %d): %s", rep, method.label, attempt, exc)
                continue
            info["attempts"].append({"seed": seed, "error": None})
            info.update(seeds=seeds, seconds=time.perf_counter() - t0, model=model)
            generated[method.label] = gen
            break
        else:
            info["status"] = "failed"
            out["status"] = "failed"
        out["methods"][method.label] = info

    labels = [cfg.baseline_label] + [lab for lab in (m.label for m in cfg.methods) if lab in generated]
    sets = [train.subset(base_idx)] + [generated[lab] for lab in labels[1:]]
    t0 = time.perf_counter()
    _, normed = block_normalize(train, [test, *sets])
    mats = [knn_distances(normed[0], ps, cfg.k, label=lab) for lab, ps in zip(labels, normed[1:])]
    out["eval_seconds"] = time.perf_counter() - t0
    out["labels"] = labels
    out["matrices"] = mats
    out["dhat"] = {dm.label: dhat_curve(dm, mats[0]) for dm in mats}
    return out


def _rel(path: Path, root: Path) -> str:
    return path.relative_to(root).as_posix()


def run_experiment(config, out_dir=None, master_seed=None, jobs: int = 1) -> dict:
    """Run every repetition, write reports/checkpoints and return the manifest dict."""
    cfg = load_config(config)
    updates = {}
    if out_dir is not None:
        updates["output_dir"] = str(out_dir)
    if master_seed is not None:
        updates["master_seed"] = int(master_seed)
    if updates:
        cfg = load_config({**cfg.model_dump(mode="json"), **updates})
    root = Path(cfg.output_dir)
    (root / "reports").mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()

    spec = cfg.distribution.build()
    split = SplitSpec(cfg.split.train, cfg.split.test, cfg.split.seed)
    pool = sample_mixture(spec, cfg.n_samples, derive_seed(cfg.master_seed, "pool"))
    first_train, test = train_test_split(pool, split)
    n_train = len(first_train)

    if jobs > 1 and cfg.repetitions > 1:
        with ProcessPoolExecutor(min(jobs, cfg.repetitions)) as ex:
            results = list(ex.map(_run_repetition, [cfg] * cfg.repetitions, range(cfg.repetitions),
                                  [test] * cfg.repetitions, [n_train] * cfg.repetitions))
    else:
        results = [_run_repetition(cfg, rep, test, n_train) for rep in range(cfg.repetitions)]

    manifest = {
        "artifact_version": __version__,
        "config_hash": cfg.config_hash(),
        "config": cfg.model_dump(mode="json"),
        "master_seed": cfg.master_seed,
        "repetitions": [],
        "reports": {},
        "timings": {},
        "status": "ok",
    }
    labels_all = [cfg.baseline_label] + [m.label for m in cfg.methods]
    complete = []
    files: list[Path] = []
    for res in results:
        rep = res["rep"]
        rep_dir = root / "reports" / f"rep{rep:02d}"
        ck_dir = root / "checkpoints" / f"rep{rep:02d}"
        rep_dir.mkdir(parents=True, exist_ok=True)
        entry = {"rep": rep, "status": res["status"], "methods": {}, "reports": {}, "checkpoints": {}}
        timings = {"eval": res["eval_seconds"]}
        for label, info in res["methods"].items():
            entry["methods"][label] = {"status": info["status"], "attempts": info["attempts"],
                                       "seeds": info.get("seeds", [])}
            if info["status"] == "ok":
                ck = ck_dir / f"{slug(label)}.json"
                files.extend(save_checkpoint(info["model"], ck))
                entry["checkpoints"][label] = _rel(ck, root)
                timings[label] = info["seconds"]
        dists = {}
        for dm in res["matrices"]:
            p = rep_dir / f"dist_{slug(dm.label)}.csv"
            write_distance_matrix_csv(p, dm)
            files.append(p)
            dists[dm.label] = _rel(p, root)
        entry["reports"]["distances"] = dists
        p = rep_dir / "dhat.csv"
        write_dhat_csv(p, res["dhat"])
        files.append(p)
        entry["reports"]["dhat"] = _rel(p, root)
        cm = comparison_matrix(res["matrices"], cfg.alpha)
        p = rep_dir / "comparison.csv"
        write_comparison_csv(p, cm)
        files.append(p)
        entry["reports"]["comparison"] = _rel(p, root)
        manifest["timings"][f"rep{rep:02d}"] = timings
        manifest["repetitions"].append(entry)
        if res["status"] == "ok":
            complete.append(res)
        else:
            manifest["status"] = "partial"

    if complete:
        tallied = comparison_matrix(repetitions=[r["matrices"] for r in complete], alpha=cfg.alpha,
                                    labels=labels_all)
        p = root / "reports" / "comparison_tallies.csv"
        write_comparison_csv(p, tallied, tallies=True)
        files.append(p)
        manifest["reports"]["comparison_tallies"] = _rel(p, root)
        p = root / "reports" / "tallies.json"
        p.write_text(json.dumps({"labels": labels_all, "alpha": cfg.alpha, "repetitions": len(complete),
                                 "tallies": tallied.tallies.tolist()}, indent=1) + "\n")
        files.append(p)
        manifest["reports"]["tallies"] = _rel(p, root)
        mean_curves = {lab: np.mean([r["dhat"][lab] for r in complete], axis=0) for lab in labels_all}
        p = root / "reports" / "dhat_mean.csv"
        write_dhat_csv(p, mean_curves)
        files.append(p)
        manifest["reports"]["dhat_mean"] = _rel(p, root)
    manifest["files"] = sorted(_rel(Path(f), root) for f in files)
    manifest["timings"]["total"] = time.perf_counter() - t_start
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest


def _read_dhat(path: Path) -> dict:
    curves: dict = {}
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            curves.setdefault(row["method"], []).append(float(row["dhat"]))
    return curves


def report_summary(manifest) -> dict:
    """Consolidate a run: d-hat statistics per method and j, tallies, seeds, timings."""
    if isinstance(manifest, (str, Path)):
        root = Path(manifest).parent
        manifest = json.loads(Path(manifest).read_text())
    else:
        root = Path(manifest["config"]["output_dir"])
    reps = [r for r in manifest.get("repetitions", []) if r["status"] == "ok"]
    if not reps:
        raise ValueError("manifest has no completed repetitions")
    per_rep = [_read_dhat(root / r["reports"]["dhat"]) for r in reps]
    labels = list(per_rep[0])
    dhat_stats = {}
    for lab in labels:
        arr = np.array([c[lab] for c in per_rep])
        dhat_stats[lab] = {"mean": arr.mean(axis=0).tolist(), "median": np.median(arr, axis=0).tolist()}
    summary = {
        "config_hash": manifest["config_hash"],
        "repetitions_completed": len(reps),
        "repetitions_failed": len(manifest["repetitions"]) - len(reps),
        "dhat": dhat_stats,
        "seeds": {f"rep{r['rep']:02d}": {lab: m["seeds"] for lab, m in r["methods"].items()}
                  for r in manifest["repetitions"]},
        "timing_totals": {},
    }
    if "tallies" in manifest.get("reports", {}):
        summary["tallies"] = json.loads((root / manifest["reports"]["tallies"]).read_text())
    totals: dict = {}
    for key, t in manifest.get("timings", {}).items():
        if isinstance(t, dict):
            for lab, sec in t.items():
                totals[lab] = totals.get(lab, 0.0) + sec
    totals["total"] = manifest.get("timings", {}).get("total")
    summary["timing_totals"] = totals
    ref = next((m["label"] for m in manifest["config"]["methods"] if m["kind"] == "gan"), None)
    if ref is not None and ref in dhat_stats:
        d_ref = dhat_stats[ref]["median"][0]
        summary["reference_method"] = ref
        summary["dhat_drop_pct"] = {
            lab: (100.0 * (d_ref - st["median"][0]) / d_ref if d_ref != 0 else None)
            for lab, st in dhat_stats.items() if lab not in (ref, manifest["config"]["baseline_label"])}
    return summary
