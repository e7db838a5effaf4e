"""JSON checkpoints for trained evaluators and generators.

A checkpoint carries everything needed to rebuild the model: its config, the
featurizer fitted on the training split, and every parameter array.  Floats
are written with ``repr`` precision so loading is exact.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import Featurizer
from .evaluator import Evaluator, EvaluatorConfig
from .generator import Generator, GeneratorConfig

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _dump(kind: str, model, path: str | Path) -> None:
    payload = {
        "format": FORMAT_VERSION,
        "kind": kind,
        "config": model.config.to_json(),
        "featurizer": model.featurizer.to_json(),
        "params": {name: {"shape": list(p.shape), "data": p.data.ravel().tolist()}
                   for name, p in sorted(model.store.params.items())},
    }
    Path(path).write_text(json.dumps(payload, separators=(",", ":")) + "\n", encoding="utf-8")


def _read(path: str | Path, kind: str) -> dict:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc
    if payload.get("kind") != kind:
        raise CheckpointError(f"{path}: expected a {kind} checkpoint, found {payload.get('kind')!r}")
    if payload.get("format") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint format {payload.get('format')!r}")
    return payload


def _restore(model, payload: dict, path) -> None:
    params = payload["params"]
    missing = set(model.store.params) ^ set(params)
    if missing:
        raise CheckpointError(f"{path}: parameter set mismatch ({sorted(missing)[0]})")
    model.store.load_state_dict({k: np.array(v["data"], dtype=float).reshape(v["shape"])
                                 for k, v in params.items()})


def save_evaluator(model: Evaluator, path: str | Path) -> None:
    _dump("evaluator", model, path)


def save_generator(model: Generator, path: str | Path) -> None:
    _dump("generator", model, path)


def load_evaluator(path: str | Path) -> Evaluator:
    payload = _read(path, "evaluator")
    model = Evaluator(EvaluatorConfig(**payload["config"]), Featurizer.from_json(payload["featurizer"]))
    _restore(model, payload, path)
    return model


def load_generator(path: str | Path) -> Generator:
    payload = _read(path, "generator")
    model = Generator(GeneratorConfig(**payload["config"]), Featurizer.from_json(payload["featurizer"]))
    _restore(model, payload, path)
    return model
