"""Episodic training and evaluation of a prototype (or 1-NN) classifier."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import as_vector, euclidean_distance
from .datasets import Dataset, Episode, sample_episode
from .diagnostics import CheckpointRecord
from .exceptions import ConfigError
from .heads import ConfidenceVector, Head, HeadKind
from .net import (
    AdamState,
    MlpParams,
    adam_step,
    episode_objective,
    forward,
    init_params,
)

CHECKPOINT_EVERY = 100
DISTANCE_MODES = ("prototype", "nearest_neighbor")


def compute_prototypes(embeddings, labels) -> dict:
    """Mean embedding per class label, keyed in sorted label order."""
    Z = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    if Z.ndim != 2 or labels.shape != (Z.shape[0],):
        raise ValueError("need one label per embedding row")
    return {c.item(): Z[labels == c].mean(axis=0) for c in np.unique(labels)}


def class_distances(query, support_embeddings, support_labels, classes: Sequence, mode: str = "prototype") -> np.ndarray:
    """One distance per entry of ``classes``, in that order."""
    if mode not in DISTANCE_MODES:
        raise ValueError(f"unknown distance mode {mode!r}")
    q = as_vector(query, "query")
    Z = np.asarray(support_embeddings, dtype=np.float64)
    labels = np.asarray(support_labels)
    out = []
    for c in classes:
        members = Z[labels == c]
        if members.shape[0] == 0:
            raise ValueError(f"class {c!r} has no supports")
        if mode == "prototype":
            out.append(euclidean_distance(q, members.mean(axis=0)))
        else:
            out.append(min(euclidean_distance(q, z) for z in members))
    return np.array(out)


@dataclass
class EpisodeScore:
    loss: float
    confidences: list  # ConfidenceVector per query
    accuracy: float


def episode_loss(episode: Episode, params: MlpParams, head: Head, mode: str = "prototype") -> EpisodeScore:
    """Mean query cross-entropy, per-query confidences and accuracy."""
    res = episode_objective(params, episode, head, mode, with_grads=False)
    order = tuple(range(episode.n_way))
    confs = [ConfidenceVector(p, order) for p in res.probs]
    return EpisodeScore(res.loss, confs, res.accuracy)


@dataclass(frozen=True)
class TrainConfig:
    n_way: int = 5
    k_shot: int = 1
    n_query: int = 16
    episodes: int = 2000
    lr: float = 1e-3
    head: str = "DR"
    mode: str = "prototype"
    seed: int = 0
    hidden: tuple = (64, 32)
    val_episodes: int = 50

    def validate(self, dataset: Dataset | None = None, val_dataset: Dataset | None = None) -> None:
        if self.n_way < 2 or self.k_shot < 1 or self.n_query < 1:
            raise ConfigError("need n_way >= 2, k_shot >= 1, n_query >= 1")
        if self.episodes < 1 or self.val_episodes < 1:
            raise ConfigError("episodes and val_episodes must be positive")
        if not self.lr >= 0:
            raise ConfigError("lr must be non-negative")
        if self.mode not in DISTANCE_MODES:
            raise ConfigError(f"mode must be one of {DISTANCE_MODES}")
        try:
            kind = HeadKind.parse(self.head)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if kind not in (HeadKind.SOFTMAX_SQ, HeadKind.DR):
            raise ConfigError("training supports the SoftmaxSq and DR heads only")
        if any(int(h) < 1 for h in self.hidden):
            raise ConfigError("hidden sizes must be positive")
        need = self.k_shot + self.n_query
        checks = [(dataset, "train"), (val_dataset if val_dataset is not None else dataset, "val")]
        for ds, split in checks:
            if ds is None:
                continue
            classes = ds.splits.get(split, ())
            if len(classes) < self.n_way:
                raise ConfigError(f"split {split!r} has fewer than {self.n_way} classes")
            for c in classes:
                if np.count_nonzero(ds.y == c) < need:
                    raise ConfigError(f"class {c} has fewer than {need} points")

    @property
    def head_obj(self) -> Head:
        return Head(HeadKind.parse(self.head))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class CheckpointLog:
    episode: int
    train_loss: float
    train_acc: float
    val_acc: float
    rho: float | None
    record: CheckpointRecord


@dataclass
class TrainLog:
    checkpoints: list = field(default_factory=list)
    best_params: MlpParams | None = None
    final_params: MlpParams | None = None

    @property
    def best_index(self) -> int:
        """Checkpoint with the highest validation accuracy, earliest on ties."""
        accs = [c.val_acc for c in self.checkpoints]
        return int(np.argmax(accs))

    @property
    def best_episode(self) -> int:
        return self.checkpoints[self.best_index].episode


def _mean_accuracy(params: MlpParams, dataset: Dataset, split: str, n_way, k_shot, n_query, n_episodes, rng, head, mode):
    accs = np.empty(n_episodes)
    for i in range(n_episodes):
        ep = sample_episode(dataset, split, n_way, k_shot, n_query, rng)
        accs[i] = episode_objective(params, ep, head, mode, with_grads=False).accuracy
    return accs


def train(dataset: Dataset, config: TrainConfig, val_dataset: Dataset | None = None) -> TrainLog:
    """Episodic Adam training with a checkpoint every 100 episodes.

    At a checkpoint the log stores the mean training loss/accuracy of the
    preceding episodes, validation accuracy over fresh episodes, the current
    rho, and embeddings of that episode's points before and after its update.
    Validation episodes come from the ``val`` split of ``val_dataset`` when
    given, else of ``dataset``.
    """
    config.validate(dataset, val_dataset)
    val_source = dataset if val_dataset is None else val_dataset
    head = config.head_obj
    dims = (dataset.dim, *[int(h) for h in config.hidden])
    params = init_params(dims, seed=config.seed, with_rho=head.kind is HeadKind.DR)
    state = AdamState.zeros(params)
    rng = np.random.default_rng([config.seed, 1])
    log = TrainLog()
    best_acc = -1.0
    window_loss, window_acc = [], []

    for ep_num in range(1, config.episodes + 1):
        episode = sample_episode(dataset, "train", config.n_way, config.k_shot, config.n_query, rng)
        res = episode_objective(params, episode, head, config.mode, episode_index=ep_num)
        window_loss.append(res.loss)
        window_acc.append(res.accuracy)
        new_params, state = adam_step(params, res.grads, state, config.lr)

        if ep_num % CHECKPOINT_EVERY == 0:
            z_new = forward(new_params, episode.points)
            is_query = np.r_[np.zeros(len(episode.support_labels), bool), np.ones(len(episode.query_labels), bool)]
            labels = np.r_[episode.support_labels, episode.query_labels]
            record = CheckpointRecord.from_embeddings(res.embeddings, z_new, labels, is_query)
            ck = ep_num // CHECKPOINT_EVERY
            val_rng = np.random.default_rng([config.seed, 2, ck])
            val = _mean_accuracy(
                new_params, val_source, "val", config.n_way, config.k_shot, config.n_query,
                config.val_episodes, val_rng, head, config.mode,
            )
            val_acc = float(val.mean())
            log.checkpoints.append(
                CheckpointLog(
                    episode=ep_num,
                    train_loss=float(np.mean(window_loss)),
                    train_acc=float(np.mean(window_acc)),
                    val_acc=val_acc,
                    rho=new_params.rho,
                    record=record,
                )
            )
            window_loss, window_acc = [], []
            if val_acc > best_acc:
                best_acc = val_acc
                log.best_params = new_params
        params = new_params

    log.final_params = params
    if log.best_params is None:
        log.best_params = params
    return log


def mean_confidence_interval(values: Sequence[float], z: float = 1.96) -> tuple[float, float]:
    """Mean and normal-approximation half-width ``z * s / sqrt(n)``."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no values")
    if arr.size < 2:
        return float(arr.mean()), 0.0
    return float(arr.mean()), float(z * arr.std(ddof=1) / math.sqrt(arr.size))


def evaluate(
    params: MlpParams,
    dataset: Dataset,
    split: str = "test",
    *,
    n_way: int = 5,
    k_shot: int = 1,
    n_query: int = 16,
    n_episodes: int = 600,
    seed: int = 0,
    head: Head | str = "DR",
    mode: str = "prototype",
) -> tuple[float, float]:
    """Mean episode accuracy and its 95% confidence half-width."""
    if not isinstance(head, Head):
        head = Head(HeadKind.parse(head))
    if len(dataset.split_classes(split)) < n_way:
        raise ValueError(f"split {split!r} has fewer than {n_way} classes")
    rng = np.random.default_rng([seed, 3])
    accs = _mean_accuracy(params, dataset, split, n_way, k_shot, n_query, n_episodes, rng, head, mode)
    return mean_confidence_interval(accs)


# -- persistence ---------------------------------------------------------------

LOG_COLUMNS = ("episode", "train_loss", "train_acc", "val_acc", "rho")


def write_train_log(log: TrainLog, csv_path, sidecar_path=None) -> None:
    """CSV with one row per checkpoint plus an ``.npz`` of embedding snapshots."""
    csv_path = Path(csv_path)
    sidecar_path = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".npz")
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for c in log.checkpoints:
            rho = "" if c.rho is None else repr(c.rho)
            writer.writerow([c.episode, repr(c.train_loss), repr(c.train_acc), repr(c.val_acc), rho])
    arrays = {}
    for i, c in enumerate(log.checkpoints):
        arrays[f"x_origin_{i}"] = c.record.x_origin
        arrays[f"x_new_{i}"] = c.record.x_new
        arrays[f"labels_{i}"] = c.record.labels
        arrays[f"is_query_{i}"] = c.record.is_query
    with sidecar_path.open("wb") as fh:
        np.savez(fh, **arrays)


def read_train_log(csv_path, sidecar_path=None) -> TrainLog:
    csv_path = Path(csv_path)
    sidecar_path = Path(sidecar_path) if sidecar_path else csv_path.with_suffix(".npz")
    with csv_path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    log = TrainLog()
    with np.load(sidecar_path) as snaps:
        for i, row in enumerate(rows):
            key = f"x_origin_{i}"
            if key not in snaps:
                raise ValueError(f"{sidecar_path}: missing snapshot for checkpoint {i}")
            record = CheckpointRecord(snaps[key], snaps[f"x_new_{i}"], snaps[f"labels_{i}"], snaps[f"is_query_{i}"])
            log.checkpoints.append(
                CheckpointLog(
                    episode=int(row["episode"]),
                    train_loss=float(row["train_loss"]),
                    train_acc=float(row["train_acc"]),
                    val_acc=float(row["val_acc"]),
                    rho=float(row["rho"]) if row["rho"] else None,
                    record=record,
                )
            )
    return log
