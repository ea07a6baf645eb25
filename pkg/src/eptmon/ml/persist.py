"""Versioned binary model dumps.

Layout: the 8-byte magic "EPTMODEL", a format version byte, then a pickle of
{"scaler": Scaler | None, "model": trained model, "class_names": tuple}.
Enough to reload and predict; nothing else is promised across versions.
"""
from __future__ import annotations

import pickle
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .base import Scaler
from .evaluate import predict_model

MODEL_MAGIC = b"EPTMODEL"
MODEL_VERSION = 1


@dataclass
class FittedPipeline:
    scaler: Optional[Scaler]
    model: object
    class_names: Tuple[str, ...]

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.scaler is not None:
            X = self.scaler.transform(np.asarray(X, dtype=np.float64))
        return predict_model(self.model, X)


def save_model(path, pipeline: FittedPipeline) -> None:
    payload = pickle.dumps(
        {"scaler": pipeline.scaler, "model": pipeline.model, "class_names": pipeline.class_names},
        protocol=4,
    )
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(bytes([MODEL_VERSION]))
        fh.write(payload)


def load_model(path) -> FittedPipeline:
    with open(path, "rb") as fh:
        magic = fh.read(len(MODEL_MAGIC))
        if magic != MODEL_MAGIC:
            raise ValueError(f"{path}: bad model magic {magic!r}")
        version = fh.read(1)
        if version != bytes([MODEL_VERSION]):
            raise ValueError(f"{path}: unsupported model version {version!r}")
        payload = pickle.loads(fh.read())
    return FittedPipeline(payload["scaler"], payload["model"], tuple(payload["class_names"]))
