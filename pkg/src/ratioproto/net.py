"""A small fully connected embedding network with hand-written backprop and Adam.

Parameters are immutable value records; ``adam_step`` returns new ones. The
trainable ``log_rho`` of the distance-ratio head lives next to the weights so
that one optimizer step updates both.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DIST_EPS
from .exceptions import NumericalError
from .heads import PROB_FLOOR, Head, HeadKind

INIT_LOG_RHO = 2.0
_LOSS_CAP = -math.log(PROB_FLOOR)


@dataclass(frozen=True)
class MlpParams:
    weights: tuple  # (fan_in, fan_out) arrays
    biases: tuple
    log_rho: float | None = None

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def rho(self) -> float | None:
        return None if self.log_rho is None else math.exp(self.log_rho)

    @property
    def size(self) -> int:
        n = sum(w.size + b.size for w, b in zip(self.weights, self.biases))
        return n + (self.log_rho is not None)

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [w.ravel(), b.ravel()]
        if self.log_rho is not None:
            parts.append(np.array([self.log_rho]))
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, dims: Sequence[int], vec: np.ndarray, with_rho: bool) -> "MlpParams":
        vec = np.asarray(vec, dtype=np.float64)
        expected = sum(a * b + b for a, b in zip(dims[:-1], dims[1:])) + bool(with_rho)
        if vec.shape != (expected,):
            raise ValueError(f"flat vector has {vec.size} entries, expected {expected}")
        weights, biases, pos = [], [], 0
        for a, b in zip(dims[:-1], dims[1:]):
            weights.append(vec[pos : pos + a * b].reshape(a, b).copy())
            pos += a * b
            biases.append(vec[pos : pos + b].copy())
            pos += b
        log_rho = float(vec[pos]) if with_rho else None
        return cls(tuple(weights), tuple(biases), log_rho)

    def like(self, vec: np.ndarray) -> "MlpParams":
        return MlpParams.from_flat(self.dims, vec, self.log_rho is not None)


def init_params(layer_dims: Sequence[int], seed: int, with_rho: bool = False) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ValueError(f"invalid layer dims {layer_dims!r}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(tuple(weights), tuple(biases), INIT_LOG_RHO if with_rho else None)


def _forward_cache(params: MlpParams, X: np.ndarray):
    acts = [X]
    h = X
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return h, acts


def forward(params: MlpParams, x) -> np.ndarray:
    """Embed one vector or a batch of row vectors."""
    X = np.asarray(x, dtype=np.float64)
    if X.shape[-1] != params.dims[0]:
        raise ValueError(f"input dim {X.shape[-1]} does not match network input {params.dims[0]}")
    single = X.ndim == 1
    out, _ = _forward_cache(params, np.atleast_2d(X))
    return out[0] if single else out


def _backward(params: MlpParams, acts, dout: np.ndarray):
    gw, gb = [None] * len(params.weights), [None] * len(params.weights)
    delta = dout
    for i in range(len(params.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * (acts[i] > 0)
    return gw, gb


@dataclass
class EpisodeResult:
    loss: float
    accuracy: float
    probs: np.ndarray  # (n_query, n_way)
    distances: np.ndarray  # (n_query, n_way)
    embeddings: np.ndarray  # supports first, then queries
    grads: MlpParams | None = None


def _class_distances(zq, zs, support_labels, n_way, mode):
    """Distance matrix plus whatever the backward pass needs."""
    if mode == "prototype":
        counts = np.bincount(support_labels, minlength=n_way).astype(np.float64)
        if np.any(counts == 0):
            raise ValueError("every episode class needs at least one support")
        protos = np.zeros((n_way, zs.shape[1]))
        np.add.at(protos, support_labels, zs)
        protos /= counts[:, None]
        diff = zq[:, None, :] - protos[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff) + DIST_EPS), (diff, counts)
    if mode == "nearest_neighbor":
        diff_all = zq[:, None, :] - zs[None, :, :]
        dall = np.sqrt(np.einsum("ijk,ijk->ij", diff_all, diff_all) + DIST_EPS)
        nearest = np.empty((zq.shape[0], n_way), dtype=np.intp)
        for c in range(n_way):
            idx = np.flatnonzero(support_labels == c)
            if idx.size == 0:
                raise ValueError("every episode class needs at least one support")
            nearest[:, c] = idx[np.argmin(dall[:, idx], axis=1)]
        rows = np.arange(zq.shape[0])[:, None]
        return dall[rows, nearest], (diff_all, nearest)
    raise ValueError(f"unknown distance mode {mode!r}")


def episode_objective(
    params: MlpParams,
    episode,
    head: Head,
    mode: str = "prototype",
    *,
    with_grads: bool = True,
    episode_index: int | None = None,
) -> EpisodeResult:
    """Mean query cross-entropy of one episode and, optionally, its exact gradient.

    ``episode`` needs ``support_X``, ``support_labels``, ``query_X``,
    ``query_labels`` (labels are local class indices ``0..n_way-1``) and
    ``n_way``. For the DR head the live ``params.log_rho`` is used when
    present, otherwise ``head.log_rho``.
    """
    if head.kind not in (HeadKind.SOFTMAX_SQ, HeadKind.DR):
        raise ValueError(f"cannot train with head {head.kind.value}")
    sx = np.asarray(episode.support_X, dtype=np.float64)
    qx = np.asarray(episode.query_X, dtype=np.float64)
    s_lab = np.asarray(episode.support_labels, dtype=np.intp)
    q_lab = np.asarray(episode.query_labels, dtype=np.intp)
    n_way = int(episode.n_way)
    ns, nq = sx.shape[0], qx.shape[0]

    z, acts = _forward_cache(params, np.vstack([sx, qx]))
    zs, zq = z[:ns], z[ns:]
    dist, aux = _class_distances(zq, zs, s_lab, n_way, mode)

    is_dr = head.kind is HeadKind.DR
    log_rho = params.log_rho if (is_dr and params.log_rho is not None) else head.log_rho
    rho = math.exp(log_rho)
    if is_dr:
        log_d = np.log(dist)
        logits = -rho * log_d
    else:
        logits = -(dist * dist)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - log_norm
    probs = np.exp(logp)
    rows = np.arange(nq)
    per_query = -logp[rows, q_lab]
    capped = per_query > _LOSS_CAP
    loss = float(np.mean(np.minimum(per_query, _LOSS_CAP)))
    accuracy = float(np.mean(np.argmax(probs, axis=1) == q_lab))
    if not (math.isfinite(loss) and np.all(np.isfinite(z))):
        raise NumericalError("non-finite loss or embedding", episode_index)
    result = EpisodeResult(loss, accuracy, probs, dist, z)
    if not with_grads:
        return result

    dlogits = probs.copy()
    dlogits[rows, q_lab] -= 1.0
    dlogits[capped] = 0.0
    dlogits /= nq
    if is_dr:
        d_dist = dlogits * (-rho / dist)
        g_log_rho = float(np.sum(dlogits * (-rho * log_d)))
    else:
        d_dist = dlogits * (-2.0 * dist)
        g_log_rho = 0.0

    coef = d_dist / dist  # (nq, n_way)
    dzs = np.zeros_like(zs)
    if mode == "prototype":
        diff, counts = aux
        dzq = np.einsum("ij,ijk->ik", coef, diff)
        dprotos = -np.einsum("ij,ijk->jk", coef, diff)
        dzs += dprotos[s_lab] / counts[s_lab, None]
    else:
        diff_all, nearest = aux
        dzq = np.zeros_like(zq)
        for c in range(n_way):
            contrib = coef[:, c, None] * diff_all[rows, nearest[:, c]]
            dzq += contrib
            np.add.at(dzs, nearest[:, c], -contrib)
    gw, gb = _backward(params, acts, np.vstack([dzs, dzq]))
    grads = MlpParams(
        tuple(gw), tuple(gb), g_log_rho if params.log_rho is not None else None
    )
    if not np.all(np.isfinite(grads.flat())):
        raise NumericalError("non-finite gradient", episode_index)
    result.grads = grads
    return result


def loss_gradients(params: MlpParams, episode, head: Head, mode: str = "prototype") -> MlpParams:
    """Exact gradient of the episode loss with respect to every parameter."""
    return episode_objective(params, episode, head, mode).grads


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, params: MlpParams) -> "AdamState":
        n = params.size
        return cls(np.zeros(n), np.zeros(n), 0)


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState, lr: float):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    theta = params.flat()
    g = grads.flat()
    if g.shape != theta.shape or state.m.shape != theta.shape:
        raise ValueError("parameter, gradient and optimizer shapes differ")
    t = state.t + 1
    m = ADAM_BETA1 * state.m + (1 - ADAM_BETA1) * g
    v = ADAM_BETA2 * state.v + (1 - ADAM_BETA2) * g * g
    m_hat = m / (1 - ADAM_BETA1**t)
    v_hat = v / (1 - ADAM_BETA2**t)
    if lr == 0:
        new_theta = theta
    else:
        new_theta = theta - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return params.like(new_theta), AdamState(m, v, t)


def save_params(params: MlpParams, path, head: Head | None = None, extra: dict | None = None) -> None:
    """Write ``<path>.bin`` (little-endian float64) and ``<path>.json``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    params.flat().astype("<f8").tofile(path.with_suffix(".bin"))
    meta = {
        "layer_dims": list(params.dims),
        "with_rho": params.log_rho is not None,
        "log_rho": params.log_rho,
        "head": head.kind.value if head is not None else None,
    }
    if extra:
        meta.update(extra)
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2))


def load_params(path) -> tuple[MlpParams, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    vec = np.fromfile(path.with_suffix(".bin"), dtype="<f8").astype(np.float64)
    return MlpParams.from_flat(meta["layer_dims"], vec, meta["with_rho"]), meta
