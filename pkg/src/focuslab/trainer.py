"""Single-clip SGD training under clean, noisy and focused supervision."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from focuslab import evaluation
from focuslab.adafocus import (
    FocusConfig,
    SaliencyTable,
    focus_coefficients,
    update_online,
    weighted_bce,
)
from focuslab.classifier import Model, backward, init_model, logits, sigmoid
from focuslab.errors import ConfigError, NumericalError
from focuslab.synthgen import Corpus

log = logging.getLogger(__name__)

REGIMES = ("full_clean", "weak_noisy", "weak_adafocus")

HISTORY_COLUMNS = ("epoch", "gamma", "train_map", "test_map",
                   "ratio_above_threshold", "top1_success", "train_loss")


@dataclass(frozen=True)
class TrainConfig:
    regime: str = "weak_adafocus"
    epochs: int = 100
    iterations_per_epoch: int | None = None  # None -> number of training videos
    learning_rate: float = 0.005
    momentum: float = 0.9
    batch_size: int = 1
    hidden: int | None = None
    eval_views_t: int = 10
    seed: int = 0
    focus: FocusConfig = field(default_factory=FocusConfig)

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}", "regime")
        if not isinstance(self.epochs, int) or self.epochs < 1:
            raise ConfigError("epochs must be an integer >= 1", "epochs")
        if self.iterations_per_epoch is not None and self.iterations_per_epoch < 1:
            raise ConfigError("iterations_per_epoch must be >= 1", "iterations_per_epoch")
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ConfigError("learning_rate must be a finite nonnegative real", "learning_rate")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)", "momentum")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1", "batch_size")
        if self.hidden is not None and self.hidden < 1:
            raise ConfigError("hidden must be >= 1", "hidden")
        if self.eval_views_t < 1:
            raise ConfigError("eval_views_t must be >= 1", "eval_views_t")
        if self.warmup_epochs >= self.epochs:
            raise ConfigError("warm-up must leave at least one focusing epoch", "warmup_fraction")

    @property
    def warmup_epochs(self) -> int:
        return math.floor(self.focus.warmup_fraction * self.epochs + 0.5)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigError(f"unknown train config field {key!r}", key)
        focus = d.pop("focus", {}) or {}
        if isinstance(focus, dict):
            focus_known = {f.name for f in dataclasses.fields(FocusConfig)}
            for key in focus:
                if key not in focus_known:
                    raise ConfigError(f"unknown focus config field {key!r}", f"focus.{key}")
        try:
            if isinstance(focus, dict):
                focus = FocusConfig(**focus)
            return cls(focus=focus, **d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def with_overrides(self, overrides: dict) -> "TrainConfig":
        merged = self.to_dict()
        for key, value in overrides.items():
            if key == "focus":
                merged["focus"].update(value)
            else:
                merged[key] = value
        return TrainConfig.from_dict(merged)


@dataclass
class EpochRecord:
    epoch: int
    gamma: float
    train_map: float
    test_map: float
    ratio_above_threshold: float
    top1_success: float
    train_loss: float


@dataclass
class RunHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(HISTORY_COLUMNS)
            for r in self.records:
                w.writerow([r.epoch] + [repr(float(getattr(r, c))) for c in HISTORY_COLUMNS[1:]])


class TrainResult(NamedTuple):
    model: Model
    table: SaliencyTable
    history: RunHistory


def gamma_schedule(epoch: int, total_epochs: int, warmup_epochs: int) -> float:
    """Clip-focus radius: 0 through warm-up, then a linear ramp reaching 1 at the last epoch."""
    if total_epochs <= warmup_epochs:
        raise ConfigError("total_epochs must exceed warmup_epochs", "epochs")
    if not 0 <= epoch < total_epochs:
        raise ConfigError(f"epoch {epoch} outside [0, {total_epochs})", "epoch")
    if epoch < warmup_epochs:
        return 0.0
    span = total_epochs - 1 - warmup_epochs
    if span == 0:
        return 1.0
    return min(max((epoch - warmup_epochs) / span, 0.0), 1.0)


def _sgd_step(model: Model, velocity: dict, grads: dict, lr: float, momentum: float) -> None:
    for name, g in grads.items():
        v = velocity[name]
        v *= momentum
        v += g
        model.params[name] -= lr * v


EpochHook = Callable[[int, Model, SaliencyTable], None]


def train(corpus: Corpus, config: TrainConfig, on_epoch_end: EpochHook | None = None) -> TrainResult:
    """Train a clip classifier on ``corpus.train`` under ``config.regime``.

    Each iteration samples a video and a clip position uniformly. The
    saliency table is updated online in every regime, reading the entries
    for the loss before the clip's own update; focusing only enters the loss
    in ``weak_adafocus`` after warm-up. ``on_epoch_end`` sees the live model
    and table after each epoch and must not mutate them.
    """
    videos = corpus.train
    if not videos:
        raise ConfigError("corpus has no training videos")
    T = videos[0].T
    feature_dim = videos[0].clips.shape[1]
    K = videos[0].K
    if config.eval_views_t > T:
        raise ConfigError(f"eval_views_t must be <= {T}", "eval_views_t")

    rng = np.random.default_rng(config.seed)
    model = init_model(feature_dim, K, config.hidden, seed=config.seed)
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    table = SaliencyTable()
    history = RunHistory()
    labels = [v.labels for v in videos]
    iters = config.iterations_per_epoch or len(videos)
    warmup = config.warmup_epochs
    focus = config.focus
    lr, mu, bs = config.learning_rate, config.momentum, config.batch_size

    for epoch in range(config.epochs):
        gamma = gamma_schedule(epoch, config.epochs, warmup)
        focusing = config.regime == "weak_adafocus" and epoch >= warmup and focus.focusing
        picks = rng.integers(0, len(videos), size=(iters, bs))
        ts = rng.integers(1, T + 1, size=(iters, bs))
        loss_sum = 0.0
        hits = seen = 0

        for it in range(iters):
            grads = None
            for j in range(bs):
                vi, t = int(picks[it, j]), int(ts[it, j])
                video = videos[vi]
                x = video.clips[t - 1]
                z = logits(model, x)
                p = sigmoid(z)
                y = video.activity[t - 1].astype(np.int64) if config.regime == "full_clean" else labels[vi]

                table.init_video(video.video_id, labels[vi])
                entries = table.entries(video.video_id)
                for k, (_, a) in entries.items():
                    seen += 1
                    hits += int(a > 0 and p[k] >= focus.theta * a)

                if focusing:
                    W, M = focus_coefficients(p, y, entries, t, T, gamma, focus)
                    pos_w = np.where(y.astype(bool), M * W, 1.0)
                else:
                    pos_w = np.ones(K)
                loss, coeffs = weighted_bce(p, y, pos_w)
                # clamped logits keep the loss finite, so overflowed logits count too
                if not (math.isfinite(loss) and np.isfinite(z).all()):
                    raise NumericalError(
                        f"non-finite loss at epoch {epoch} iteration {it}",
                        dump={"epoch": epoch, "iteration": it, "video_id": video.video_id,
                              "t": t, "logits": [repr(float(v)) for v in z],
                              "scores": [repr(float(v)) for v in p], "labels": y.tolist(),
                              "pos_weights": [repr(float(v)) for v in pos_w], "loss": repr(loss)},
                    )
                update_online(table, video.video_id, t, p, labels[vi])
                loss_sum += loss
                g = backward(model, x, coeffs)
                if grads is None:
                    grads = g
                else:
                    for name in grads:
                        grads[name] += g[name]
            if bs > 1:
                grads = {name: g / bs for name, g in grads.items()}
            _sgd_step(model, velocity, grads, lr, mu)

        history.records.append(EpochRecord(
            epoch=epoch,
            gamma=gamma,
            train_map=evaluation.split_map(model, videos, config.eval_views_t),
            test_map=evaluation.split_map(model, corpus.test, config.eval_views_t) if corpus.test else float("nan"),
            ratio_above_threshold=hits / seen if seen else 0.0,
            top1_success=evaluation.topn_success_ratio(model, videos, 1),
            train_loss=loss_sum / (iters * bs),
        ))
        if on_epoch_end is not None:
            on_epoch_end(epoch, model, table)
        log.debug("epoch %d gamma %.3f test_map %.4f", epoch, gamma, history.records[-1].test_map)

    return TrainResult(model, table, history)
