"""Confidence surfaces on a plane (three prototypes) and on the unit sphere.

A grid is sampled first; extrema are then seeded from the best nodes and
polished by a shrinking-step hill climb (projected back onto the sphere for
spherical grids).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import pairwise_distances
from .heads import (
    ANGULAR_KINDS,
    COSINE_KINDS,
    Head,
    HeadKind,
    angular_probs,
    cosine_probs,
    head_probs,
)

MIN_RESOLUTION = 8
FLAT_TOL = 1e-12
MIN_TIE_TOL = 1e-9

EQUILATERAL = np.array(
    [[0.0, 1.0], [-math.sqrt(3) / 2, -0.5], [math.sqrt(3) / 2, -0.5]]
)
RGB_AXES = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])


@dataclass
class Extrema:
    argmax: np.ndarray
    max_value: float
    argmins: list
    min_value: float
    flat: bool = False


@dataclass
class ConfidenceGrid:
    """Samples of one class's confidence over a plane or the sphere.

    ``points`` has shape ``(rows, cols, dim)`` and ``values`` ``(rows, cols)``.
    """

    domain: str  # "plane" or "sphere"
    points: np.ndarray
    values: np.ndarray
    target: int
    evaluate: object = field(repr=False, default=None)  # (m, dim) -> (m,) confidences
    extrema: Extrema | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def _plane_confidence(prototypes: np.ndarray, head: Head, target: int):
    if head.kind not in (HeadKind.SOFTMAX_SQ, HeadKind.DR):
        raise ValueError("plane grids use the SoftmaxSq or DR head")

    def evaluate(xy: np.ndarray) -> np.ndarray:
        return head_probs(pairwise_distances(np.atleast_2d(xy), prototypes), head)[:, target]

    return evaluate


def default_bounds(prototypes: np.ndarray, expand: float = 0.5) -> tuple[float, float, float, float]:
    lo, hi = prototypes.min(axis=0), prototypes.max(axis=0)
    pad = expand * (hi - lo)
    return (lo[0] - pad[0], hi[0] + pad[0], lo[1] - pad[1], hi[1] + pad[1])


def plane_grid(
    prototypes=EQUILATERAL,
    head: Head = Head(HeadKind.DR),
    target: int = 0,
    bounds: Sequence[float] | None = None,
    resolution: int = 201,
) -> ConfidenceGrid:
    """Confidence of class ``target`` over a ``resolution`` x ``resolution`` grid.

    Row index follows y, column index follows x.
    """
    protos = np.asarray(prototypes, dtype=np.float64)
    if protos.shape != (3, 2):
        raise ValueError("plane grids need three 2-D prototypes")
    if np.min(pairwise_distances(protos, protos) + np.eye(3)) <= 1e-5 + 1e-12:
        raise ValueError("prototypes must be pairwise distinct")
    if resolution < MIN_RESOLUTION:
        raise ValueError(f"resolution must be at least {MIN_RESOLUTION}")
    x0, x1, y0, y1 = default_bounds(protos) if bounds is None else bounds
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y0, y1, resolution)
    gx, gy = np.meshgrid(xs, ys)
    points = np.stack([gx, gy], axis=-1)
    evaluate = _plane_confidence(protos, head, target)
    values = evaluate(points.reshape(-1, 2)).reshape(resolution, resolution)
    return ConfidenceGrid("plane", points, values, target, evaluate)


def sphere_points(resolution: int) -> np.ndarray:
    """Latitude-longitude nodes; ``resolution`` latitudes including both poles.

    Longitudes use ``2 * (resolution - 1)`` steps so both grids share one
    angular spacing and the coordinate axes fall on nodes when
    ``resolution - 1`` is a multiple of 2.
    """
    if resolution < MIN_RESOLUTION:
        raise ValueError(f"resolution must be at least {MIN_RESOLUTION}")
    lat = np.linspace(-np.pi / 2, np.pi / 2, resolution)
    n_lon = 2 * (resolution - 1)
    lon = -np.pi + 2 * np.pi * np.arange(n_lon) / n_lon
    la, lo = np.meshgrid(lat, lon, indexing="ij")
    pts = np.stack([np.cos(la) * np.cos(lo), np.cos(la) * np.sin(lo), np.sin(la)], axis=-1)
    # snap rounding noise so that poles and axis points are exact
    pts = np.where(np.abs(pts) < 1e-15, 0.0, pts)
    pts[0] = [0.0, 0.0, -1.0]
    pts[-1] = [0.0, 0.0, 1.0]
    return pts


def _sphere_confidence(class_vectors: np.ndarray, head: Head, target: int):
    if head.kind in COSINE_KINDS:
        return lambda q: cosine_probs(_normalize(q), class_vectors, head, target)[:, target]
    if head.kind in ANGULAR_KINDS:
        return lambda q: angular_probs(_normalize(q), class_vectors, head)[:, target]
    raise ValueError(f"{head.kind.value} cannot be evaluated on the sphere")


def _normalize(q: np.ndarray) -> np.ndarray:
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def sphere_grid(
    class_vectors=RGB_AXES,
    head: Head = Head(HeadKind.ANG_DR),
    target: int = 0,
    resolution: int = 91,
) -> ConfidenceGrid:
    vecs = np.asarray(class_vectors, dtype=np.float64)
    if vecs.ndim != 2 or vecs.shape[1] != 3:
        raise ValueError("sphere grids need 3-D class vectors")
    if np.any(np.abs(np.linalg.norm(vecs, axis=1) - 1) > 1e-6):
        raise ValueError("class vectors must be unit-norm")
    gram = vecs @ vecs.T - np.eye(len(vecs)) * 2
    if np.any(gram > 1 - 1e-12):
        raise ValueError("class vectors must be pairwise distinct")
    points = sphere_points(resolution)
    evaluate = _sphere_confidence(vecs, head, target)
    values = evaluate(points.reshape(-1, 3)).reshape(points.shape[:2])
    return ConfidenceGrid("sphere", points, values, target, evaluate)


def _neighbours(i: int, j: int, shape, wrap_cols: bool):
    rows, cols = shape
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == dj == 0:
                continue
            a, b = i + di, j + dj
            if not 0 <= a < rows:
                continue
            if wrap_cols:
                b %= cols
            elif not 0 <= b < cols:
                continue
            yield a, b


def _grid_spacing(grid: ConfidenceGrid) -> float:
    if grid.domain == "plane":
        p = grid.points
        return float(max(abs(p[0, 1, 0] - p[0, 0, 0]), abs(p[1, 0, 1] - p[0, 0, 1])))
    return float(np.pi / (grid.shape[0] - 1))


def _tangent_basis(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0]) if abs(x[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(x, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(x, u)


def _refine(grid: ConfidenceGrid, start: np.ndarray, steps: int, sign: float) -> tuple[np.ndarray, float]:
    """Compass search with step halving; ``sign=+1`` maximizes, ``-1`` minimizes."""
    x = start.astype(np.float64).copy()
    best = sign * float(grid.evaluate(x[None])[0])
    step = _grid_spacing(grid)
    for _ in range(steps):
        if grid.domain == "plane":
            dirs = np.array([[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [1, -1], [-1, 1], [-1, -1]], float)
            lo = grid.points[0, 0]
            hi = grid.points[-1, -1]
            cands = np.clip(x + step * dirs, lo, hi)
        else:
            u, v = _tangent_basis(x)
            dirs = [u, -u, v, -v, u + v, u - v, -u + v, -u - v]
            cands = _normalize(np.array([x + step * d for d in dirs]))
        vals = sign * grid.evaluate(cands)
        k = int(np.argmax(vals))
        if vals[k] > best:
            x, best = cands[k], float(vals[k])
        else:
            step *= 0.5
    return x, sign * best


def _angle(a: np.ndarray, b: np.ndarray) -> float:
    return math.acos(min(1.0, max(-1.0, float(a @ b))))


def find_extrema(grid: ConfidenceGrid, refine_steps: int = 60) -> Extrema:
    """Global maximizer plus every minimizer within 1e-9 of the global minimum."""
    vals = grid.values
    if vals.size == 0:
        raise ValueError("empty grid")
    pts = grid.points
    wrap = grid.domain == "sphere"
    if vals.max() - vals.min() <= FLAT_TOL:
        p = pts[0, 0]
        ext = Extrema(p, float(vals[0, 0]), [p], float(vals[0, 0]), flat=True)
        grid.extrema = ext
        return ext

    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    argmax, max_value = _refine(grid, pts[i, j], refine_steps, +1.0)
    if max_value < vals[i, j]:
        argmax, max_value = pts[i, j], float(vals[i, j])

    # seed minima from every grid-local minimum, then polish each one
    seeds = []
    for a in range(vals.shape[0]):
        pole = wrap and a in (0, vals.shape[0] - 1)
        for b in range(1 if pole else vals.shape[1]):
            v = vals[a, b]
            if all(v <= vals[n] for n in _neighbours(a, b, vals.shape, wrap)):
                seeds.append((v, a, b))
    seeds.sort()
    polished = []
    for v, a, b in seeds[:64]:
        x, fx = _refine(grid, pts[a, b], refine_steps, -1.0)
        if fx > v:
            x, fx = pts[a, b], float(v)
        polished.append((fx, x))
    min_value = min(f for f, _ in polished)
    argmins: list = []
    tol = 2 * _grid_spacing(grid)
    for f, x in sorted(polished, key=lambda t: t[0]):
        if f > min_value + MIN_TIE_TOL:
            continue
        dist = _angle if wrap else (lambda p, q: float(np.linalg.norm(p - q)))
        if all(dist(x, y) > tol for y in argmins):
            argmins.append(x)
    ext = Extrema(np.asarray(argmax), float(max_value), argmins, float(min_value))
    grid.extrema = ext
    return ext


def grid_node_index(grid: ConfidenceGrid, point) -> tuple[int, int]:
    """Index of the grid node closest to ``point``."""
    diff = grid.points - np.asarray(point, dtype=np.float64)
    return tuple(int(v) for v in np.unravel_index(int(np.argmin(np.einsum("ijk,ijk->ij", diff, diff))), grid.shape))


def write_grid_csv(grid: ConfidenceGrid, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    coords = ["x", "y"] if grid.domain == "plane" else ["x", "y", "z"]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(coords + ["value"])
        flat_pts = grid.points.reshape(-1, grid.points.shape[-1])
        for p, v in zip(flat_pts, grid.values.ravel()):
            writer.writerow([repr(float(c)) for c in p] + [repr(float(v))])


def write_pgm(grid: ConfidenceGrid, path) -> None:
    """Binary (P5) 8-bit heatmap, row-major, 0 -> black and 1 -> white.

    The last grid row (largest y, or the north pole) is the top image row.
    """
    values = grid.values[::-1]
    pixels = np.clip(np.rint(values * 255.0), 0, 255).astype(np.uint8)
    rows, cols = pixels.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos)
            continue
        end = pos
        while not data[end : end + 1].isspace():
            end += 1
        tokens.append(data[pos:end].decode("ascii"))
        pos = end
    if tokens[0] != "P5":
        raise ValueError("not a binary PGM")
    cols, rows, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError("only 8-bit PGM supported")
    pos += 1
    return np.frombuffer(data[pos : pos + rows * cols], dtype=np.uint8).reshape(rows, cols)
