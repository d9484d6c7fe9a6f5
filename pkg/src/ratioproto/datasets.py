"""Few-shot datasets: synthetic Gaussian blobs, CSV I/O and episode sampling."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray  # (n_points, dim)
    y: np.ndarray  # (n_points,) integer class ids
    splits: dict = field(default_factory=dict)  # split name -> tuple of class ids

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("X must be (n, d) and y must be (n,)")
        splits = {k: tuple(sorted(int(c) for c in v)) for k, v in self.splits.items()}
        seen: dict[int, str] = {}
        for name, classes in splits.items():
            for c in classes:
                if c in seen:
                    raise ValueError(f"class {c} appears in splits {seen[c]!r} and {name!r}")
                seen[c] = name
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "splits", splits)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def split_classes(self, split: str) -> tuple:
        if split not in self.splits:
            raise ValueError(f"unknown split {split!r}")
        return self.splits[split]

    def split_arrays(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        mask = np.isin(self.y, self.split_classes(split))
        return self.X[mask], self.y[mask]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
            and self.splits == other.splits
        )


@dataclass(frozen=True)
class SyntheticConfig:
    n_classes: int = 20
    dim: int = 16
    points_per_class: int = 40
    separation: float = 5.0
    spread: float = 1.0
    # 20 classes -> 10/5/5, so 5-way episodes fit every split
    split_fractions: tuple = (0.5, 0.25, 0.25)

    def validate(self) -> None:
        if self.n_classes < 3:
            raise ConfigError("n_classes must be at least 3")
        if self.dim < 1 or self.points_per_class < 1:
            raise ConfigError("dim and points_per_class must be positive")
        if self.separation < 0 or self.spread < 0:
            raise ConfigError("separation and spread must be non-negative")
        fr = tuple(float(f) for f in self.split_fractions)
        if len(fr) != 3 or any(f < 0 for f in fr) or not math.isclose(sum(fr), 1.0, abs_tol=1e-9):
            raise ConfigError("split_fractions must be three non-negative numbers summing to 1")

    def split_sizes(self) -> tuple[int, int, int]:
        n_train = int(round(self.split_fractions[0] * self.n_classes))
        n_val = int(round(self.split_fractions[1] * self.n_classes))
        return n_train, n_val, self.n_classes - n_train - n_val

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split_fractions"] = list(self.split_fractions)
        return d


def generate_synthetic(config: SyntheticConfig, seed: int) -> Dataset:
    """Isotropic Gaussian blob per class, class means uniform in a hypercube."""
    config.validate()
    rng = np.random.default_rng(seed)
    means = rng.uniform(-config.separation, config.separation, size=(config.n_classes, config.dim))
    noise = rng.standard_normal((config.n_classes, config.points_per_class, config.dim))
    X = (means[:, None, :] + config.spread * noise).reshape(-1, config.dim)
    y = np.repeat(np.arange(config.n_classes), config.points_per_class)
    order = rng.permutation(config.n_classes)
    n_train, n_val, _ = config.split_sizes()
    splits = {
        "train": order[:n_train],
        "val": order[n_train : n_train + n_val],
        "test": order[n_train + n_val :],
    }
    return Dataset(X, y, splits)


@dataclass(frozen=True)
class Episode:
    """N-way K-shot episode. Labels are local indices into ``classes``."""

    support_X: np.ndarray
    support_labels: np.ndarray
    query_X: np.ndarray
    query_labels: np.ndarray
    classes: tuple
    support_index: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))
    query_index: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.intp))

    @property
    def n_way(self) -> int:
        return len(self.classes)

    @property
    def points(self) -> np.ndarray:
        return np.vstack([self.support_X, self.query_X])


def sample_episode(dataset: Dataset, split: str, n_way: int, k_shot: int, n_query: int, rng) -> Episode:
    """Draw ``n_way`` classes, then disjoint supports and queries per class."""
    if n_way < 2 or k_shot < 1 or n_query < 1:
        raise ValueError("need n_way >= 2, k_shot >= 1, n_query >= 1")
    classes = np.asarray(dataset.split_classes(split))
    if classes.size < n_way:
        raise ValueError(f"split {split!r} has {classes.size} classes, need {n_way}")
    chosen = rng.choice(classes, size=n_way, replace=False)
    s_idx, q_idx = [], []
    for c in chosen:
        members = np.flatnonzero(dataset.y == c)
        if members.size < k_shot + n_query:
            raise ValueError(f"class {c} has {members.size} points, need {k_shot + n_query}")
        picked = rng.choice(members, size=k_shot + n_query, replace=False)
        s_idx.append(picked[:k_shot])
        q_idx.append(picked[k_shot:])
    s_idx = np.concatenate(s_idx)
    q_idx = np.concatenate(q_idx)
    return Episode(
        support_X=dataset.X[s_idx],
        support_labels=np.repeat(np.arange(n_way), k_shot),
        query_X=dataset.X[q_idx],
        query_labels=np.repeat(np.arange(n_way), n_query),
        classes=tuple(int(c) for c in chosen),
        support_index=s_idx,
        query_index=q_idx,
    )


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def save_csv(dataset: Dataset, path) -> None:
    """Rows of ``class_id,split_tag,f1..fD`` with a header line."""
    tag_of = {c: name for name, classes in dataset.splits.items() for c in classes}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_id", "split"] + [f"f{i + 1}" for i in range(dataset.dim)])
        for x, c in zip(dataset.X, dataset.y):
            tag = tag_of.get(int(c))
            if tag is None:
                raise ValueError(f"class {c} belongs to no split")
            writer.writerow([int(c), tag] + [repr(float(v)) for v in x])


def load_csv(path) -> Dataset:
    rows = []
    with Path(path).open(newline="") as fh:
        for row in csv.reader(fh):
            if row and any(cell.strip() for cell in row):
                rows.append([cell.strip() for cell in row])
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0])
    if width < 3:
        raise ValueError(f"{path}: need class_id, split and at least one feature")
    X, y, tags = [], [], {}
    for lineno, row in enumerate(rows, 1):
        if len(row) != width:
            raise ValueError(f"{path}: ragged row {lineno} ({len(row)} fields, expected {width})")
        try:
            cls = int(row[0])
            feats = [float(v) for v in row[2:]]
        except ValueError as exc:
            raise ValueError(f"{path}: non-numeric value in row {lineno}") from exc
        if row[1] not in SPLITS:
            raise ValueError(f"{path}: unknown split tag {row[1]!r} in row {lineno}")
        if tags.setdefault(cls, row[1]) != row[1]:
            raise ValueError(f"{path}: class {cls} tagged both {tags[cls]!r} and {row[1]!r}")
        X.append(feats)
        y.append(cls)
    splits = {name: [c for c, t in tags.items() if t == name] for name in SPLITS}
    return Dataset(np.array(X), np.array(y), splits)
