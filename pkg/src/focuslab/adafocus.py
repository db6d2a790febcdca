"""Action saliency estimation, action/clip focusing and the focused loss.

All loss functions take sigmoid scores ``p`` and return per-class gradient
coefficients ``dL/dz`` that :func:`focuslab.classifier.backward` consumes.
Focusing weights ``W`` and masks ``M`` are treated as constants: they are
evaluated at the current scores and no gradient flows through them.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, NamedTuple

import numpy as np

from focuslab.errors import ConfigError, InputError, StateError
from focuslab.serialization import dumps, sig

log = logging.getLogger(__name__)

WEIGHT_KINDS = ("exponential", "constant", "linear", "logarithmic")

# Lower-branch constants of the alternative weighting functions.
DEFAULT_LOWER = {"constant": 0.75, "linear": 1.0, "logarithmic": 1.0}


@dataclass(frozen=True)
class FocusConfig:
    theta: float = 0.75
    alpha: float = 5.0
    beta: float = 3.0
    weight_kind: str = "exponential"
    use_action_focus: bool = True
    use_clip_focus: bool = True
    warmup_fraction: float = 0.2
    lower_scale: float | None = None  # non-exponential kinds only; None -> DEFAULT_LOWER

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ConfigError("theta must lie in (0, 1)", "theta")
        if not self.alpha >= 1.0:
            raise ConfigError("alpha must be >= 1", "alpha")
        if not self.beta > 0.0:
            raise ConfigError("beta must be > 0", "beta")
        if self.weight_kind not in WEIGHT_KINDS:
            raise ConfigError(f"weight_kind must be one of {WEIGHT_KINDS}", "weight_kind")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigError("warmup_fraction must lie in [0, 1)", "warmup_fraction")
        if self.lower_scale is not None and not self.lower_scale >= 0.0:
            raise ConfigError("lower_scale must be >= 0", "lower_scale")

    @property
    def lower(self) -> float:
        if self.lower_scale is not None:
            return self.lower_scale
        return DEFAULT_LOWER.get(self.weight_kind, self.beta)

    @property
    def focusing(self) -> bool:
        return self.use_action_focus or self.use_clip_focus


class SaliencyTable:
    """Per (video, in-video class) most-salient position and spike-actionness.

    ``lam == 0`` means the instance has not been observed yet.
    """

    def __init__(self):
        self._videos: dict[int, dict[int, list]] = {}

    def __len__(self) -> int:
        return sum(len(v) for v in self._videos.values())

    def __contains__(self, video_id) -> bool:
        return video_id in self._videos

    def init_video(self, video_id: int, labels) -> None:
        if video_id not in self._videos:
            self._videos[video_id] = {int(k): [0, 0.0] for k in np.flatnonzero(labels)}

    def entries(self, video_id: int) -> dict[int, tuple[int, float]]:
        if video_id not in self._videos:
            raise StateError(f"video {video_id} has no saliency entries")
        return {k: (lam, a) for k, (lam, a) in self._videos[video_id].items()}

    def get(self, video_id: int, k: int) -> tuple[int, float]:
        lam, a = self._videos[video_id][k]
        return lam, a

    def set(self, video_id: int, k: int, lam: int, a: float) -> None:
        self._videos[video_id][k] = [lam, a]

    def items(self):
        for vid in sorted(self._videos):
            for k in sorted(self._videos[vid]):
                lam, a = self._videos[vid][k]
                yield vid, k, lam, a

    def snapshot(self) -> "SaliencyTable":
        out = SaliencyTable()
        out._videos = {v: {k: list(e) for k, e in d.items()} for v, d in self._videos.items()}
        return out

    def _row(self, video_id: int) -> dict[int, list]:
        return self._videos[video_id]

    def dump(self, path: str | Path) -> None:
        lines = [dumps({"video_id": v, "class": k, "lambda": lam, "spike_a": sig(a)})
                 for v, k, lam, a in self.items()]
        Path(path).write_text("".join(ln + "\n" for ln in lines))

    @classmethod
    def load(cls, path: str | Path) -> "SaliencyTable":
        table = cls()
        for line in Path(path).read_text().splitlines():
            if line.strip():
                rec = json.loads(line)
                row = table._videos.setdefault(rec["video_id"], {})
                row[rec["class"]] = [rec["lambda"], rec["spike_a"]]
        return table


def naive_saliency(scores) -> tuple[np.ndarray, np.ndarray]:
    """Batched full-pass estimate over ``(..., T, K)`` scores.

    Returns 1-based positions and maxima, each shaped ``(..., K)``; ties go
    to the earliest clip.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim < 2 or s.shape[-2] == 0 or s.shape[-1] == 0:
        raise InputError("saliency estimation needs a nonempty T x K score matrix")
    idx = np.argmax(s, axis=-2)
    return idx + 1, np.take_along_axis(s, idx[..., None, :], axis=-2)[..., 0, :]


def estimate_naive(scores, labels) -> dict[int, tuple[int, float]]:
    """Most salient clip (1-based, earliest on ties) and its score per in-video class."""
    lam, a = naive_saliency(scores)
    if lam.ndim != 1:
        raise InputError("estimate_naive takes a single T x K score matrix")
    return {int(k): (int(lam[k]), float(a[k])) for k in np.flatnonzero(labels)}


def update_online(table: SaliencyTable, video_id: int, t: int, p_t, labels,
                  init_missing: bool = False) -> SaliencyTable:
    """Fold one observed clip into the table; updates only on strict improvement."""
    if video_id not in table:
        if not init_missing:
            raise StateError(f"video {video_id} is not initialized in the saliency table")
        table.init_video(video_id, labels)
    row = table._row(video_id)
    for k, entry in row.items():
        p = float(p_t[k])
        if p > entry[1]:
            entry[0] = t
            entry[1] = p
    return table


def weight(p, a, cfg: FocusConfig):
    """Action-focus weight of score ``p`` against threshold ``theta * a``.

    Vectorized over ``p`` and ``a``; ``p == theta * a`` takes the upper branch.
    """
    p = np.asarray(p, dtype=np.float64)
    diff = p - cfg.theta * np.asarray(a, dtype=np.float64)
    upper = diff >= 0
    kind = cfg.weight_kind
    if kind == "exponential":
        w = np.where(upper, cfg.alpha * np.exp(diff), np.exp(cfg.beta * diff))
    elif kind == "constant":
        w = np.where(upper, cfg.alpha, cfg.lower)
    elif kind == "linear":
        w = np.where(upper, cfg.alpha * (1.0 + diff), cfg.lower * (1.0 + diff))
    else:
        w = np.where(upper, cfg.alpha * np.log(math.e + diff), cfg.lower * np.log(math.e + diff))
    return w if w.ndim else float(w)


def mask(t: int, T: int, lam: int, gamma: float) -> int:
    """1 if clip ``t`` lies within normalized distance ``gamma`` of ``lam``."""
    if lam == 0:
        log.debug("mask requested for an unobserved instance; returning 0")
        return 0
    return int(2.0 * abs(t - lam) / T <= gamma)


def _bce_terms(p: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pos = labels.astype(bool)
    nll = np.where(pos, -np.log(p), -np.log1p(-p))
    return pos, nll


def loss_noisy(p, labels) -> tuple[float, float, np.ndarray]:
    """Plain multi-label BCE split into positive and negative parts."""
    p = np.asarray(p, dtype=np.float64)
    pos, nll = _bce_terms(p, np.asarray(labels))
    l_in = float(nll[pos].sum())
    l_out = float(nll[~pos].sum())
    coeffs = np.where(pos, p - 1.0, p)
    return l_in, l_out, coeffs


def weighted_bce(p, labels, pos_weights) -> tuple[float, np.ndarray]:
    """BCE with frozen per-class multipliers applied to the positive terms only."""
    p = np.asarray(p, dtype=np.float64)
    w = np.asarray(pos_weights, dtype=np.float64)
    pos, nll = _bce_terms(p, np.asarray(labels))
    l_in = float((w * nll)[pos].sum())
    l_out = float(nll[~pos].sum())
    coeffs = np.where(pos, w * (p - 1.0), p)
    return l_in + l_out, coeffs


class FocusedLoss(NamedTuple):
    loss: float
    grad_coeffs: np.ndarray
    weights: np.ndarray  # action-focus W per class (1 where unused)
    masks: np.ndarray  # clip-focus M per class (1 where unused)
    pos_weights: np.ndarray  # M * W on positives, 1 on negatives


def focus_coefficients(p, labels, entries: Mapping[int, tuple[int, float]], t: int, T: int,
                       gamma: float, cfg: FocusConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-class (W, M) for one clip; unobserved instances get W=1 and M=0."""
    p = np.asarray(p, dtype=np.float64)
    K = p.shape[0]
    W = np.ones(K)
    M = np.ones(K)
    for k in np.flatnonzero(labels):
        lam, a = entries.get(int(k), (0, 0.0))
        if cfg.use_action_focus and lam != 0:
            W[k] = weight(p[k], a, cfg)
        if cfg.use_clip_focus:
            M[k] = mask(t, T, lam, gamma)
    return W, M


def loss_adafocus(p, labels, entries: Mapping[int, tuple[int, float]], t: int, T: int,
                  gamma: float, cfg: FocusConfig) -> FocusedLoss:
    """Focused loss on one clip given the instance table read before this clip's update."""
    labels = np.asarray(labels)
    W, M = focus_coefficients(p, labels, entries, t, T, gamma, cfg)
    pos_weights = np.where(labels.astype(bool), M * W, 1.0)
    loss, coeffs = weighted_bce(p, labels, pos_weights)
    return FocusedLoss(loss, coeffs, W, M, pos_weights)


def config_to_dict(cfg: FocusConfig) -> dict:
    return dataclasses.asdict(cfg)
