"""Regime x seed comparison grids and per-run artifact writing."""

from __future__ import annotations

import csv
import json
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from focuslab.classifier import save_model
from focuslab.errors import ConfigError, NumericalError
from focuslab.serialization import dumps
from focuslab.synthgen import CorpusConfig, generate_corpus, read_corpus, write_corpus
from focuslab.trainer import TrainConfig, TrainResult, train

BASELINE_REGIME = "weak_noisy"


@dataclass(frozen=True)
class RunSpec:
    name: str
    config: TrainConfig  # seed is replaced per cell


@dataclass
class ExperimentSpec:
    corpus: CorpusConfig | Path
    runs: list[RunSpec]
    seeds: list[int]
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "ExperimentSpec":
        if not isinstance(d, dict):
            raise ConfigError("experiment spec must be a JSON object")
        for key in d:
            if key not in ("corpus", "base", "runs", "seeds"):
                raise ConfigError(f"unknown experiment field {key!r}", key)
        corpus = d.get("corpus", {})
        if isinstance(corpus, str):
            path = Path(corpus)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            corpus = path
        else:
            corpus = CorpusConfig.from_dict(corpus)
        base = TrainConfig().with_overrides(d.get("base", {}))
        runs_raw = d.get("runs")
        if not runs_raw:
            raise ConfigError("experiment needs at least one run", "runs")
        runs = []
        for r in runs_raw:
            if not isinstance(r, dict):
                raise ConfigError("each run must be a JSON object", "runs")
            overrides = dict(r.get("overrides", {}))
            if "regime" in r:
                overrides["regime"] = r["regime"]
            cfg = base.with_overrides(overrides)
            runs.append(RunSpec(r.get("name", cfg.regime), cfg))
        names = [r.name for r in runs]
        if len(set(names)) != len(names):
            raise ConfigError("run names must be unique", "runs")
        seeds = d.get("seeds", [0])
        if not seeds or not all(isinstance(s, int) for s in seeds):
            raise ConfigError("seeds must be a nonempty list of integers", "seeds")
        return cls(corpus, runs, list(seeds), d)

    def resolved(self) -> dict:
        """Spec with every default filled in, for the output directory."""
        return {
            "corpus": str(self.corpus) if isinstance(self.corpus, Path) else self.corpus.to_dict(),
            "runs": [{"name": r.name, "config": r.config.to_dict()} for r in self.runs],
            "seeds": self.seeds,
        }


def write_run_artifacts(result: TrainResult, config: TrainConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    result.history.write_csv(out / "history.csv")
    save_model(result.model, out / "checkpoint.json")
    result.table.dump(out / "table.jsonl")


@dataclass
class CellResult:
    name: str
    regime: str
    seed: int
    status: str
    test_map: float | None = None
    top1_success: float | None = None
    message: str = ""
    seconds: float = 0.0  # wall time; never written to the tables


def _run_cell(corpus_path: str, name: str, config: TrainConfig, out_dir: str) -> CellResult:
    corpus = read_corpus(corpus_path)
    start = time.perf_counter()
    try:
        result = train(corpus, config)
    except NumericalError as exc:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "failure.json").write_text(dumps(exc.dump) + "\n")
        return CellResult(name, config.regime, config.seed, "failed", message=str(exc),
                          seconds=time.perf_counter() - start)
    elapsed = time.perf_counter() - start
    write_run_artifacts(result, config, Path(out_dir))
    last = result.history.records[-1]
    return CellResult(name, config.regime, config.seed, "ok", last.test_map, last.top1_success,
                      seconds=elapsed)


def _prepare_corpus(spec: ExperimentSpec, out: Path) -> Path:
    if isinstance(spec.corpus, Path):
        read_corpus(spec.corpus)  # fail fast on unreadable input
        return spec.corpus
    path = out / "corpus.jsonl"
    write_corpus(generate_corpus(spec.corpus), path)
    return path


def run_experiment(spec: ExperimentSpec, out: str | Path, workers: int = 1) -> list[CellResult]:
    """Run every (run, seed) cell; each cell writes into ``out/cells/<name>/seed<s>``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "experiment.json").write_text(json.dumps(spec.resolved(), indent=2, sort_keys=True) + "\n")
    corpus_path = str(_prepare_corpus(spec, out))
    jobs = [
        (corpus_path, r.name, r.config.with_overrides({"seed": s}), str(out / "cells" / r.name / f"seed{s}"))
        for r in spec.runs for s in spec.seeds
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_cell, *zip(*jobs)))
    else:
        cells = [_run_cell(*job) for job in jobs]
    write_tables(spec, cells, out)
    return cells


def summarize(spec: ExperimentSpec, cells: list[CellResult]) -> list[dict]:
    rows = []
    for r in spec.runs:
        mine = {c.seed: c for c in cells if c.name == r.name}
        maps = [mine[s].test_map for s in spec.seeds if mine[s].status == "ok"]
        rows.append({
            "name": r.name,
            "regime": r.config.regime,
            "per_seed": {s: (mine[s].test_map if mine[s].status == "ok" else None) for s in spec.seeds},
            "median": statistics.median(maps) if len(maps) == len(spec.seeds) else None,
        })
    base = next((row for row in rows if row["regime"] == BASELINE_REGIME), None)
    for row in rows:
        if base is not None and base["median"] is not None and row["median"] is not None:
            row["delta"] = row["median"] - base["median"]
        else:
            row["delta"] = None
    return rows


def _fmt(x: float | None, signed: bool = False) -> str:
    if x is None:
        return "failed"
    return f"{100 * x:+.1f}" if signed else f"{100 * x:.1f}"


def write_tables(spec: ExperimentSpec, cells: list[CellResult], out: Path) -> None:
    rows = summarize(spec, cells)
    with open(out / "cells.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["name", "regime", "seed", "status", "test_map", "top1_success"])
        for c in cells:
            w.writerow([c.name, c.regime, c.seed, c.status,
                        "" if c.test_map is None else repr(c.test_map),
                        "" if c.top1_success is None else repr(c.top1_success)])
    with open(out / "compare.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["name", "regime", *[f"seed{s}" for s in spec.seeds], "median", "delta_vs_noisy"])
        for row in rows:
            w.writerow([row["name"], row["regime"],
                        *["failed" if row["per_seed"][s] is None else f"{row['per_seed'][s]:.6f}"
                          for s in spec.seeds],
                        "failed" if row["median"] is None else f"{row['median']:.6f}",
                        "" if row["delta"] is None else f"{row['delta']:+.6f}"])

    header = ["run", *[f"seed {s}" for s in spec.seeds], "median mAP (%)"]
    body = []
    for row in rows:
        median = _fmt(row["median"])
        if row["delta"] is not None and row["regime"] != BASELINE_REGIME:
            median += f" ({_fmt(row['delta'], signed=True)})"
        body.append([row["name"], *[_fmt(row["per_seed"][s]) for s in spec.seeds], median])
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip() for r in [header, *body]]
    (out / "compare.txt").write_text("\n".join(lines) + "\n")
