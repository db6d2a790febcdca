"""Video-level scoring, mAP and the focusing diagnostics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from focuslab.adafocus import SaliencyTable
from focuslab.classifier import Model, forward
from focuslab.errors import ConfigError, MetricError
from focuslab.synthgen import LongVideo


@dataclass(frozen=True)
class VideoScore:
    video_id: int
    scores: np.ndarray


def view_positions(T: int, views_t: int) -> list[int]:
    """Evenly spaced 1-based clip positions, rounding half up."""
    if not 1 <= views_t <= T:
        raise ConfigError(f"views_t must lie in [1, {T}], got {views_t}", "eval_views_t")
    return [min(max(math.floor((i + 0.5) * T / views_t + 0.5), 1), T) for i in range(views_t)]


def video_score(model: Model, video: LongVideo, views_t: int) -> VideoScore:
    pos = np.asarray(view_positions(video.T, views_t)) - 1
    p = forward(model, video.clips[pos])
    return VideoScore(video.video_id, p.mean(axis=0))


def average_precision(scores, labels, ids=None) -> float:
    """Non-interpolated AP; ties ordered by ascending id (default: index)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    ids = np.arange(len(scores)) if ids is None else np.asarray(ids)
    order = np.lexsort((ids, -scores))
    hits = labels[order]
    if not hits.any():
        raise MetricError("average precision needs at least one positive")
    ranks = np.flatnonzero(hits) + 1
    precision = np.arange(1, len(ranks) + 1) / ranks
    return float(precision.mean())


def mean_average_precision(video_scores: Sequence[VideoScore], video_labels: Sequence) -> float:
    if not video_scores:
        raise MetricError("mAP needs at least one video")
    S = np.stack([vs.scores for vs in video_scores])
    Y = np.stack([np.asarray(y) for y in video_labels]).astype(bool)
    ids = np.asarray([vs.video_id for vs in video_scores])
    aps = [average_precision(S[:, k], Y[:, k], ids) for k in range(S.shape[1]) if Y[:, k].any()]
    if not aps:
        raise MetricError("no class has a positive video")
    return float(np.mean(aps))


def split_map(model: Model, videos: Sequence[LongVideo], views_t: int) -> float:
    return mean_average_precision([video_score(model, v, views_t) for v in videos],
                                  [v.labels for v in videos])


def ratio_above_threshold(model: Model, videos: Iterable[LongVideo], table: SaliencyTable,
                          theta: float, positions: Sequence[tuple[int, int]] | None = None) -> float:
    """Fraction of (clip, in-video class) scores reaching ``theta * a``.

    ``positions`` lists ``(video_id, t)`` clips to score; by default every clip
    of every video. Instances with ``a == 0`` never count as exceeding.
    """
    by_id = {v.video_id: v for v in videos}
    if positions is None:
        positions = [(vid, t) for vid, v in by_id.items() for t in range(1, v.T + 1)]
    hits = total = 0
    for vid, t in positions:
        v = by_id[vid]
        p = forward(model, v.clips[t - 1])
        for k in v.positive_classes:
            _, a = table.get(vid, int(k)) if vid in table else (0, 0.0)
            total += 1
            hits += int(a > 0 and p[k] >= theta * a)
    return hits / total if total else 0.0


def top_positions(column: np.ndarray, n: int) -> np.ndarray:
    """Indices of the ``n`` largest entries, earliest first on ties."""
    return np.argsort(-column, kind="stable")[:n]


def topn_success_ratio(model: Model, videos: Sequence[LongVideo], n: int) -> float:
    hits = total = 0
    for v in videos:
        if n > v.T:
            raise ConfigError(f"N={n} exceeds video length {v.T}", "N")
        p = forward(model, v.clips)
        for k in v.positive_classes:
            top = top_positions(p[:, k], n)
            hits += int(v.activity[top, k].any())
            total += 1
    return hits / total if total else 0.0


def action_timeline(model: Model, video: LongVideo) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Per in-video class, (prediction curve, 0/1 ground-truth curve) over all T clips."""
    p = forward(model, video.clips)
    return {int(k): (p[:, k].copy(), video.activity[:, k].astype(np.int64))
            for k in video.positive_classes}


def write_timeline_csv(model: Model, videos: Sequence[LongVideo], path: str | Path) -> int:
    rows = 0
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["video_id", "class", "t", "prediction", "ground_truth"])
        for v in videos:
            for k, (pred, gt) in action_timeline(model, v).items():
                for t in range(v.T):
                    w.writerow([v.video_id, k, t + 1, f"{pred[t]:.9g}", int(gt[t])])
                    rows += 1
    return rows
