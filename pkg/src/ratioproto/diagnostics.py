"""Per-checkpoint scale and convergence diagnostics, and run-vs-run comparison.

A checkpoint record holds the embeddings of one episode's points just
before and just after a parameter update. From it we estimate the best
pure-scaling factor between the two snapshots, the share of the change that
scaling does not explain, and how query points moved relative to their own
and to the other classes' prototypes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DIST_EPS, as_matrix, geometric_mean, mean_center
from .stats import fisher_exact, mann_whitney_u

_NO_CHANGE = 1e-12
_CENTER_TOL = 1e-9


@dataclass(frozen=True)
class CheckpointRecord:
    """Mean-centered pre/post-update embeddings of one episode.

    Rows correspond point by point. ``labels`` are local class indices and
    ``is_query`` marks query rows; the remaining rows are supports.
    """

    x_origin: np.ndarray
    x_new: np.ndarray
    labels: np.ndarray
    is_query: np.ndarray

    def __post_init__(self):
        xo = as_matrix(self.x_origin, "x_origin")
        xn = as_matrix(self.x_new, "x_new")
        if xo.shape != xn.shape:
            raise ValueError("x_origin and x_new must have the same shape")
        labels = np.asarray(self.labels, dtype=np.intp)
        is_query = np.asarray(self.is_query, dtype=bool)
        if labels.shape != (xo.shape[0],) or is_query.shape != labels.shape:
            raise ValueError("labels and is_query need one entry per row")
        for m in (xo, xn):
            if np.max(np.abs(m.mean(axis=0))) > _CENTER_TOL * max(1.0, np.max(np.abs(m))):
                raise ValueError("snapshots must be mean-centered")
        object.__setattr__(self, "x_origin", xo)
        object.__setattr__(self, "x_new", xn)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "is_query", is_query)

    @classmethod
    def from_embeddings(cls, z_origin, z_new, labels, is_query) -> "CheckpointRecord":
        return cls(mean_center(z_origin), mean_center(z_new), labels, is_query)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    def prototypes(self, which: str = "new") -> np.ndarray:
        """Class means of the support rows under one snapshot."""
        x = self.x_new if which == "new" else self.x_origin
        support = ~self.is_query
        out = np.zeros((self.n_classes, x.shape[1]))
        for c in range(self.n_classes):
            rows = support & (self.labels == c)
            if not rows.any():
                raise ValueError(f"class {c} has no support rows")
            out[c] = x[rows].mean(axis=0)
        return out


def _frob_inner(A: np.ndarray, B: np.ndarray) -> float:
    return float(np.sum(A * B))


def estimate_alpha(x_origin, x_new) -> float:
    """Least-squares scale: argmin over alpha of ``||x_new - alpha * x_origin||_F``."""
    xo = as_matrix(x_origin, "x_origin")
    xn = as_matrix(x_new, "x_new")
    if xo.shape != xn.shape:
        raise ValueError("shape mismatch")
    norm2 = _frob_inner(xo, xo)
    if norm2 == 0:
        raise ValueError("x_origin has zero Frobenius norm")
    return _frob_inner(xo, xn) / norm2


def norm_ratio(x_origin, x_new) -> float | None:
    """Residual after optimal scaling over the raw change; ``None`` if nothing moved."""
    xo = as_matrix(x_origin, "x_origin")
    xn = as_matrix(x_new, "x_new")
    alpha = estimate_alpha(xo, xn)
    change = np.linalg.norm(xn - xo)
    if change < _NO_CHANGE:
        return None
    phi = np.linalg.norm(xn - alpha * xo) / change
    return float(min(phi, 1.0))


def psi_values(record: CheckpointRecord, fixed_prototypes: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Per (query, class) distance ratios new/old, split into same and different class.

    By default the numerator uses prototypes recomputed from the updated
    supports; ``fixed_prototypes=True`` uses the pre-update prototypes in both.
    """
    q = record.is_query
    if not q.any():
        raise ValueError("record has no query rows")
    if record.n_classes < 2:
        raise ValueError("need at least two classes")
    p_old = record.prototypes("origin")
    p_new = p_old if fixed_prototypes else record.prototypes("new")

    def dist(Z, P):
        diff = Z[:, None, :] - P[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff) + DIST_EPS)

    psi = dist(record.x_new[q], p_new) / dist(record.x_origin[q], p_old)
    same = np.arange(record.n_classes)[None, :] == record.labels[q][:, None]
    return psi[same], psi[~same]


def psi_ratios(record: CheckpointRecord, fixed_prototypes: bool = False) -> tuple[float, float]:
    """Geometric means ``(psi_con, psi_div)`` over same- and different-class pairs."""
    same, diff = psi_values(record, fixed_prototypes)
    return geometric_mean(same), geometric_mean(diff)


@dataclass(frozen=True)
class RatioReport:
    alpha_hat: float
    phi: float | None
    psi_con: float
    psi_div: float
    con_alpha: float
    div_alpha: float
    con_div: float

    @property
    def properly_converged(self) -> bool:
        return self.con_alpha < 1

    @property
    def properly_diverged(self) -> bool:
        return self.div_alpha > 1

    @property
    def properly_ratioed(self) -> bool:
        return self.con_div < 1


def ratio_report(record: CheckpointRecord, fixed_prototypes: bool = False) -> RatioReport:
    alpha = estimate_alpha(record.x_origin, record.x_new)
    phi = norm_ratio(record.x_origin, record.x_new)
    psi_con, psi_div = psi_ratios(record, fixed_prototypes)
    return RatioReport(
        alpha_hat=alpha,
        phi=phi,
        psi_con=psi_con,
        psi_div=psi_div,
        con_alpha=psi_con / alpha,
        div_alpha=psi_div / alpha,
        con_div=psi_con / psi_div,
    )


MEASURES = ("norm_ratio", "con_alpha", "div_alpha", "con_div")

# which direction counts as "properly learned"; None means no proportion
_PROPER = {
    "norm_ratio": None,
    "con_alpha": lambda v: v < 1,
    "div_alpha": lambda v: v > 1,
    "con_div": lambda v: v < 1,
}
# the side a smaller/larger value favors when flagging direction
_LOWER_IS_BETTER = {"norm_ratio": True, "con_alpha": True, "div_alpha": False, "con_div": True}


def measure_values(reports: Sequence[RatioReport]) -> dict[str, list[float]]:
    """Per-measure columns; checkpoints without a norm ratio are dropped from that column."""
    cols: dict[str, list[float]] = {m: [] for m in MEASURES}
    for r in reports:
        if r.phi is not None:
            cols["norm_ratio"].append(r.phi)
        cols["con_alpha"].append(r.con_alpha)
        cols["div_alpha"].append(r.div_alpha)
        cols["con_div"].append(r.con_div)
    return cols


@dataclass(frozen=True)
class ComparisonRow:
    measure: str
    geomean_a: float
    proportion_a: float | None
    geomean_b: float
    proportion_b: float | None
    mw_p: float
    fisher_p: float | None
    favors: str  # "A", "B" or "-"


def _geomean_or_nan(values):
    # a phi of exactly 0 (pure scaling) would break the log-mean
    pos = [v for v in values if v > 0]
    return geometric_mean(pos) if pos else float("nan")


def compare_reports(reports_a: Sequence[RatioReport], reports_b: Sequence[RatioReport]) -> list[ComparisonRow]:
    if len(reports_a) < 2 or len(reports_b) < 2:
        raise ValueError("each run needs at least two checkpoints")
    cols_a, cols_b = measure_values(reports_a), measure_values(reports_b)
    rows = []
    for m in MEASURES:
        va, vb = cols_a[m], cols_b[m]
        if not va or not vb:
            raise ValueError(f"measure {m!r} unavailable in one of the runs")
        ga, gb = _geomean_or_nan(va), _geomean_or_nan(vb)
        mw_p = mann_whitney_u(va, vb).pvalue
        proper = _PROPER[m]
        if proper is None:
            pa = pb = fisher_p = None
        else:
            ka, kb = sum(map(proper, va)), sum(map(proper, vb))
            pa, pb = ka / len(va), kb / len(vb)
            fisher_p = fisher_exact([[ka, len(va) - ka], [kb, len(vb) - kb]])
        if ga == gb or math.isnan(ga) or math.isnan(gb):
            favors = "-"
        elif (ga < gb) == _LOWER_IS_BETTER[m]:
            favors = "A"
        else:
            favors = "B"
        rows.append(ComparisonRow(m, ga, pa, gb, pb, mw_p, fisher_p, favors))
    return rows


def compare_runs(log_a, log_b, fixed_prototypes: bool = False) -> list[ComparisonRow]:
    """Compare two training logs checkpoint by checkpoint."""
    reports_a = [ratio_report(c.record, fixed_prototypes) for c in log_a.checkpoints]
    reports_b = [ratio_report(c.record, fixed_prototypes) for c in log_b.checkpoints]
    return compare_reports(reports_a, reports_b)


COMPARISON_COLUMNS = ("measure", "geomean_A", "proportion_A", "geomean_B", "proportion_B", "mw_p", "fisher_p")


def write_comparison_csv(rows: Sequence[ComparisonRow], path) -> None:
    def fmt(v):
        return "" if v is None else repr(float(v))

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COMPARISON_COLUMNS)
        for r in rows:
            writer.writerow(
                [r.measure, fmt(r.geomean_a), fmt(r.proportion_a), fmt(r.geomean_b), fmt(r.proportion_b), fmt(r.mw_p), fmt(r.fisher_p)]
            )
