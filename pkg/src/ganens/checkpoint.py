"""JSON checkpoints for GAN models and ensemble manifests.

Floats are written with ``repr`` which round-trips float64 exactly, so
``load_checkpoint(save_checkpoint(x))`` reproduces parameters bit for bit.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .ensembles import EnsembleModel, Member
from .errors import CheckpointError
from .gan import GanModel
from .numerics import Layer, MlpParams

FORMAT = "ganens-checkpoint"
VERSION = 1


def _mlp_to_dict(params: MlpParams) -> dict:
    return {"layers": [{
        "shape": list(layer.weight.shape),
        "activation": layer.activation,
        "slope": layer.slope,
        "weight": [float(v) for v in layer.weight.ravel()],
        "bias": [float(v) for v in layer.bias],
    } for layer in params.layers]}


def _mlp_from_dict(d: dict, where: str) -> MlpParams:
    layers = []
    try:
        for i, ld in enumerate(d["layers"]):
            out_dim, in_dim = (int(v) for v in ld["shape"])
            w = np.array(ld["weight"], dtype=np.float64)
            b = np.array(ld["bias"], dtype=np.float64)
            if w.size != out_dim * in_dim or b.size != out_dim:
                raise CheckpointError("parameter count does not match layer shape",
                                      f"{where}.layers[{i}]")
            layers.append(Layer(w.reshape(out_dim, in_dim), b, ld["activation"], float(ld["slope"])))
        return MlpParams(tuple(layers))
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed network: {exc}", where) from None


def _member_to_dict(mem: Member) -> dict:
    return {"generator": _mlp_to_dict(mem.generator), "noise_dim": mem.noise_dim,
            "init_seed": mem.init_seed, "epoch": mem.epoch, "stage": mem.stage}


def _header(kind: str) -> dict:
    return {"format": FORMAT, "version": VERSION, "type": kind}


def save_checkpoint(obj, path, member_paths=None) -> list[Path]:
    """Write a GanModel, or an ensemble manifest plus one file per member.

    Member files default to ``<stem>.member<i>.json`` beside the manifest and
    are referenced by relative path. Returns every path written.
    """
    path = Path(path)
    written = []
    if isinstance(obj, GanModel):
        doc = _header("gan")
        doc.update(generator=_mlp_to_dict(obj.generator), discriminator=_mlp_to_dict(obj.discriminator),
                   noise_dim=obj.noise_dim, epochs_trained=obj.epochs_trained, init_seed=obj.init_seed)
    elif isinstance(obj, EnsembleModel):
        stem = path.name[:-5] if path.name.endswith(".json") else path.name
        if member_paths is None:
            member_paths = [path.with_name(f"{stem}.member{i}.json") for i in range(len(obj))]
        refs = []
        for mem, mp in zip(obj.members, member_paths):
            mp = Path(mp)
            mdoc = _header("member")
            mdoc.update(_member_to_dict(mem))
            _write(mp, mdoc)
            written.append(mp)
            refs.append({"path": mp.name if mp.parent == path.parent else str(mp),
                         "init_seed": mem.init_seed, "epoch": mem.epoch, "stage": mem.stage})
        doc = _header("ensemble")
        doc.update(kind=obj.kind, members=refs,
                   stage_shares=None if obj.stage_shares is None else list(obj.stage_shares),
                   gate_thresholds=None if obj.gate_thresholds is None else list(obj.gate_thresholds),
                   seeds=list(obj.seeds))
    else:
        raise TypeError(f"cannot checkpoint {type(obj).__name__}")
    _write(path, doc)
    return [path, *written]


def _write(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1) + "\n")


def _read(path: Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise CheckpointError(f"corrupt checkpoint {path}", "<root>")
    if doc.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} file", "format")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}", "version")
    return doc


def _field(doc, key, path):
    try:
        return doc[key]
    except KeyError:
        raise CheckpointError(f"missing field in {path}", key) from None


def load_checkpoint(path):
    path = Path(path)
    doc = _read(path)
    kind = _field(doc, "type", path)
    if kind == "gan":
        return GanModel(_mlp_from_dict(_field(doc, "generator", path), "generator"),
                        _mlp_from_dict(_field(doc, "discriminator", path), "discriminator"),
                        int(_field(doc, "noise_dim", path)), int(_field(doc, "epochs_trained", path)),
                        int(_field(doc, "init_seed", path)))
    if kind == "member":
        return Member(_mlp_from_dict(_field(doc, "generator", path), "generator"),
                      int(_field(doc, "noise_dim", path)), int(_field(doc, "init_seed", path)),
                      int(_field(doc, "epoch", path)), int(_field(doc, "stage", path)))
    if kind == "ensemble":
        members = []
        for i, ref in enumerate(_field(doc, "members", path)):
            mp = Path(ref["path"])
            if not mp.is_absolute():
                mp = path.parent / mp
            mem = load_checkpoint(mp)
            if not isinstance(mem, Member):
                raise CheckpointError("member file has the wrong type", f"members[{i}]")
            members.append(mem)
        shares, gates = doc.get("stage_shares"), doc.get("gate_thresholds")
        try:
            return EnsembleModel(_field(doc, "kind", path), tuple(members),
                                 None if shares is None else tuple(shares),
                                 None if gates is None else tuple(gates),
                                 tuple(int(s) for s in doc.get("seeds", ())))
        except ValueError as exc:
            raise CheckpointError(f"inconsistent ensemble manifest: {exc}", "members") from None
    raise CheckpointError(f"unknown checkpoint type {kind!r}", "type")
