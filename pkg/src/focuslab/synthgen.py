"""Synthetic long-video corpora with known action intervals.

Each video is a sequence of ``T`` clip feature vectors. A clip's feature is the
mean of the prototypes of the classes active at that clip (or a background
prototype when nothing is active) plus isotropic Gaussian noise. Every action
instance occupies exactly one contiguous run of clips, so clean clip labels,
the video-level label set and the label noise seen by weak supervision are
all known exactly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from focuslab.errors import ConfigError, InputError
from focuslab.serialization import dumps, sig_list

TRAIN_FRACTION = 0.8

# SeedSequence spawn keys; keep stable, they define the corpus bytes.
_PROTO_KEY = 0
_VIDEO_KEY = 1
_SPLIT_KEY = 2


@dataclass(frozen=True)
class CorpusConfig:
    num_videos: int = 200
    clips_per_video: int = 30
    num_classes: int = 10
    feature_dim: int = 16
    actions_per_video: tuple[int, int] = (2, 4)
    interval_length: tuple[int, int] = (6, 12)
    feature_noise_sigma: float = 0.8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "actions_per_video", tuple(self.actions_per_video))
        object.__setattr__(self, "interval_length", tuple(self.interval_length))
        self.validate()

    def validate(self) -> None:
        for name in ("num_videos", "clips_per_video", "num_classes", "feature_dim", "seed"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer, got {v!r}", name)
        for name in ("actions_per_video", "interval_length"):
            rng = getattr(self, name)
            if len(rng) != 2 or not all(isinstance(v, (int, np.integer)) for v in rng):
                raise ConfigError(f"{name} must be a [min, max] pair of integers", name)
            if rng[0] > rng[1]:
                raise ConfigError(f"{name} range is inverted: {list(rng)}", name)
        if self.num_videos < 1:
            raise ConfigError("num_videos must be >= 1", "num_videos")
        if self.clips_per_video < 2:
            raise ConfigError("clips_per_video must be >= 2", "clips_per_video")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2", "num_classes")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be >= 1", "feature_dim")
        lo, hi = self.actions_per_video
        if lo < 1:
            raise ConfigError("actions_per_video min must be >= 1", "actions_per_video")
        if hi > self.num_classes:
            raise ConfigError("actions_per_video max exceeds num_classes", "actions_per_video")
        lo, hi = self.interval_length
        if lo < 1 or hi > self.clips_per_video:
            raise ConfigError("interval_length must lie in [1, clips_per_video]", "interval_length")
        sigma = self.feature_noise_sigma
        if not isinstance(sigma, (int, float)) or isinstance(sigma, bool) or not np.isfinite(sigma) or sigma < 0:
            raise ConfigError("feature_noise_sigma must be a finite nonnegative real", "feature_noise_sigma")

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusConfig":
        if not isinstance(d, dict):
            raise ConfigError("corpus config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigError(f"unknown corpus config field {key!r}", key)
        kwargs = dict(d)
        for key in ("actions_per_video", "interval_length"):
            if key in kwargs:
                if not isinstance(kwargs[key], (list, tuple)):
                    raise ConfigError(f"{key} must be a [min, max] pair of integers", key)
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["actions_per_video"] = list(self.actions_per_video)
        d["interval_length"] = list(self.interval_length)
        return d


@dataclass
class LongVideo:
    video_id: int
    clips: np.ndarray  # (T, feature_dim)
    activity: np.ndarray  # (T, K) bool, activity[t-1, k] is class k active at clip t

    @property
    def T(self) -> int:
        return self.clips.shape[0]

    @property
    def K(self) -> int:
        return self.activity.shape[1]

    @property
    def labels(self) -> np.ndarray:
        """Video-level binary label vector Y (union over clips)."""
        return self.activity.any(axis=0).astype(np.int64)

    @property
    def positive_classes(self) -> np.ndarray:
        return np.flatnonzero(self.activity.any(axis=0))

    @property
    def active(self) -> list[list[int]]:
        return [np.flatnonzero(row).tolist() for row in self.activity]


@dataclass(frozen=True)
class ClipSample:
    video_id: int
    t: int
    features: np.ndarray
    clean_labels: np.ndarray
    weak_labels: np.ndarray


@dataclass
class Corpus:
    config: CorpusConfig
    train: list[LongVideo]
    test: list[LongVideo]
    prototypes: np.ndarray | None = field(default=None, repr=False)

    @property
    def videos(self) -> list[LongVideo]:
        return sorted(self.train + self.test, key=lambda v: v.video_id)

    def __iter__(self) -> Iterator[LongVideo]:
        return iter(self.videos)


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def _make_video(cfg: CorpusConfig, video_id: int, prototypes: np.ndarray) -> LongVideo:
    rng = _stream(cfg.seed, _VIDEO_KEY, video_id)
    T, K = cfg.clips_per_video, cfg.num_classes
    n_actions = int(rng.integers(cfg.actions_per_video[0], cfg.actions_per_video[1] + 1))
    classes = rng.choice(K, size=n_actions, replace=False)
    activity = np.zeros((T, K), dtype=bool)
    for k in classes:
        length = int(rng.integers(cfg.interval_length[0], cfg.interval_length[1] + 1))
        start = int(rng.integers(0, T - length + 1))
        activity[start:start + length, k] = True

    # prototypes[K] is the background prototype
    counts = activity.sum(axis=1, keepdims=True)
    mixed = activity @ prototypes[:K] / np.maximum(counts, 1)
    mixed[counts[:, 0] == 0] = prototypes[K]
    noise = rng.standard_normal((T, cfg.feature_dim))
    clips = mixed + cfg.feature_noise_sigma * noise
    return LongVideo(video_id=video_id, clips=clips, activity=activity)


def generate_corpus(config: CorpusConfig) -> Corpus:
    """Generate the corpus for ``config``, split 80/20 by video.

    Output is a pure function of the config: prototypes, each video and the
    split draw from independent streams keyed by ``(seed, purpose[, video_id])``.
    """
    config.validate()
    prototypes = _stream(config.seed, _PROTO_KEY).standard_normal(
        (config.num_classes + 1, config.feature_dim))
    videos = [_make_video(config, i, prototypes) for i in range(config.num_videos)]

    order = _stream(config.seed, _SPLIT_KEY).permutation(config.num_videos)
    n_train = int(np.floor(TRAIN_FRACTION * config.num_videos + 0.5))
    if config.num_videos >= 2:
        n_train = min(max(n_train, 1), config.num_videos - 1)
    train_ids = sorted(order[:n_train].tolist())
    test_ids = sorted(order[n_train:].tolist())
    return Corpus(
        config=config,
        train=[videos[i] for i in train_ids],
        test=[videos[i] for i in test_ids],
        prototypes=prototypes,
    )


def trim_clip(video: LongVideo, t: int) -> ClipSample:
    """Cut clip ``t`` (1-based) out of ``video`` with its clean and weak labels."""
    if not 1 <= t <= video.T:
        raise IndexError(f"clip index {t} outside [1, {video.T}]")
    return ClipSample(
        video_id=video.video_id,
        t=t,
        features=video.clips[t - 1],
        clean_labels=video.activity[t - 1].astype(np.int64),
        weak_labels=video.labels,
    )


def noise_rate(videos) -> float:
    """Fraction of (clip, positive video class) pairs where the class is absent."""
    videos = list(videos)
    if not videos:
        raise InputError("noise_rate needs a nonempty corpus")
    noisy = total = 0
    for v in videos:
        pos = v.positive_classes
        total += v.T * len(pos)
        noisy += int((~v.activity[:, pos]).sum())
    return noisy / total


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    cfg = corpus.config
    header = {
        "config": cfg.to_dict(),
        "train_ids": [v.video_id for v in corpus.train],
        "test_ids": [v.video_id for v in corpus.test],
    }
    lines = [dumps(header)]
    for v in corpus.videos:
        lines.append(dumps({
            "video_id": v.video_id,
            "T": v.T,
            "K": v.K,
            "feature_dim": v.clips.shape[1],
            "clips": sig_list(v.clips),
            "active": v.active,
        }))
    Path(path).write_text("\n".join(lines) + "\n")


def read_corpus(path: str | Path) -> Corpus:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read corpus {path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InputError(f"corpus {path} is empty")
    try:
        header = json.loads(lines[0])
        records = [json.loads(ln) for ln in lines[1:]]
        cfg = CorpusConfig.from_dict(header["config"])
        by_id = {}
        for rec in records:
            T, K = rec["T"], rec["K"]
            activity = np.zeros((T, K), dtype=bool)
            for t, ks in enumerate(rec["active"]):
                activity[t, ks] = True
            clips = np.asarray(rec["clips"], dtype=np.float64).reshape(T, rec["feature_dim"])
            by_id[rec["video_id"]] = LongVideo(rec["video_id"], clips, activity)
        train = [by_id[i] for i in header["train_ids"]]
        test = [by_id[i] for i in header["test_ids"]]
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise InputError(f"malformed corpus {path}: {exc}") from exc
    return Corpus(config=cfg, train=train, test=test)
