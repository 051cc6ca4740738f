"""Scoring, ROC/GAR metrics, and the ablation grid runner.

All metrics are exact empirical sweeps over the observed scores (plus a
+infinity sentinel); the accept rule is ``score >= threshold``.  No
interpolation, so small-sample values are oracle-checkable.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import losses
from .dataset import PairRecord, generate_pairs, load_image, merge_weak_labels
from .errors import ConfigError, DomainError
from .network import NetworkParams, build_network, freeze_prefix, siamese_forward
from .trainer import TrainConfig, train

DEFAULT_FAR_TARGETS = (0.001, 0.01, 0.1)


@dataclass
class ScoreSet:
    """Pair scores split by ground truth; higher = more likely same identity."""

    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self):
        self.genuine = np.asarray(self.genuine, dtype=np.float64)
        self.impostor = np.asarray(self.impostor, dtype=np.float64)

    def require_both(self):
        if self.genuine.size == 0 or self.impostor.size == 0:
            raise DomainError("ROC/GAR metrics need both score populations nonempty")


@dataclass
class RocCurve:
    """(threshold, FAR, GAR) points, threshold descending from +inf."""

    points: list[tuple[float, float, float]]

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("threshold,far,gar\n")
            for t, far, gar in self.points:
                f.write(f"{t:.12g},{far:.12g},{gar:.12g}\n")


def score_pairs(params: NetworkParams, pairs: list[PairRecord],
                mode: str = "head") -> ScoreSet:
    """Score each pair with the head sigmoid or raw embedding cosine."""
    if mode not in ("head", "cosine"):
        raise ConfigError(f"unknown scoring mode {mode!r}")
    if not pairs:
        raise ConfigError("no pairs to score")
    target = params.spec.input_shape
    cache = {}

    def image(rec):
        key = (rec.identity, rec.path)
        if key not in cache:
            cache[key] = load_image(rec, target)
        return cache[key]

    genuine, impostor = [], []
    for pair in pairs:
        emb_a, emb_b, p = siamese_forward(params, image(pair.a), image(pair.b))
        if mode == "head":
            score = p.item()
        else:
            score = losses.cosine_similarity(emb_a, emb_b).item()
        (genuine if pair.y == 1 else impostor).append(score)
    return ScoreSet(np.array(genuine), np.array(impostor))


def _rates(s: ScoreSet, threshold: float) -> tuple[float, float]:
    far = float(np.mean(s.impostor >= threshold))
    gar = float(np.mean(s.genuine >= threshold))
    return far, gar


def roc_curve(s: ScoreSet) -> RocCurve:
    """Empirical ROC over every distinct observed threshold, descending."""
    s.require_both()
    thresholds = np.unique(np.concatenate([s.genuine, s.impostor]))[::-1]
    points = [(np.inf, 0.0, 0.0)]
    for t in thresholds:
        far, gar = _rates(s, t)
        points.append((float(t), far, gar))
    return RocCurve(points)


def gar_at_far(s: ScoreSet, far_target: float) -> tuple[float, float]:
    """GAR at the smallest threshold whose FAR does not exceed the target."""
    if not (0.0 < far_target <= 1.0):
        raise DomainError(f"far_target {far_target} outside (0, 1]")
    s.require_both()
    for t in np.unique(np.concatenate([s.genuine, s.impostor])):
        far, gar = _rates(s, float(t))
        if far <= far_target:
            return gar, float(t)
    return 0.0, np.inf


def best_accuracy(s: ScoreSet) -> tuple[float, float]:
    """Exhaustive threshold sweep; ties broken toward the lowest threshold."""
    s.require_both()
    candidates = list(np.unique(np.concatenate([s.genuine, s.impostor]))) + [np.inf]
    total = s.genuine.size + s.impostor.size
    best_acc, best_t = -1.0, np.inf
    for t in candidates:
        acc = (np.sum(s.genuine >= t) + np.sum(s.impostor < t)) / total
        if acc > best_acc:
            best_acc, best_t = float(acc), float(t)
    return best_acc, best_t


def accuracy_at(s: ScoreSet, threshold: float) -> float:
    s.require_both()
    total = s.genuine.size + s.impostor.size
    return float((np.sum(s.genuine >= threshold) + np.sum(s.impostor < threshold)) / total)


def metrics_report(s: ScoreSet, mode: str,
                   far_targets=DEFAULT_FAR_TARGETS) -> dict:
    acc, thr = best_accuracy(s)
    return {
        "mode": mode,
        "n_genuine": int(s.genuine.size),
        "n_impostor": int(s.impostor.size),
        "gar_at": {str(ft): gar_at_far(s, ft)[0] for ft in far_targets},
        "best_accuracy": acc,
        "best_threshold": thr,
        "acc_at_0.5": accuracy_at(s, 0.5),
    }


@dataclass
class AblationRow:
    label: str
    config: dict
    best_accuracy: float | None = None
    best_threshold: float | None = None
    gar_at: dict = field(default_factory=dict)
    error: str | None = None
    seconds: float = 0.0


def run_ablation(grid: list[dict], train_records, eval_records, base_cfg: TrainConfig,
                 spec, out_dir=None, base_seed: int = 0, web_records=None,
                 protocol: str = "overall", mode: str = "head",
                 far_targets=DEFAULT_FAR_TARGETS) -> list[AblationRow]:
    """Train/evaluate one model per grid entry and collect a report.

    Grid entries are dicts with optional keys ``label``, ``margin``,
    ``enable_lr``, ``enable_lbce``, ``use_web`` (adds the weakly labelled
    records to the training set).  Each run is seeded base_seed + index;
    failures are recorded in the row and the grid continues.
    """
    rows = []
    for idx, entry in enumerate(grid):
        label = entry.get("label", f"run{idx}")
        row = AblationRow(label=label, config=dict(entry))
        t0 = time.perf_counter()
        try:
            loss_cfg = replace(base_cfg.loss,
                               margin=entry.get("margin", base_cfg.loss.margin),
                               enable_lr=entry.get("enable_lr", base_cfg.loss.enable_lr),
                               enable_lbce=entry.get("enable_lbce", base_cfg.loss.enable_lbce))
            cfg = replace(base_cfg, loss=loss_cfg, seed=base_seed + idx)
            records = list(train_records)
            if entry.get("use_web") and web_records:
                records = merge_weak_labels(records, web_records)
            pairs = generate_pairs(records, protocol)
            params = build_network(spec, seed=cfg.seed)
            if cfg.freeze_k is not None:
                freeze_prefix(params, cfg.freeze_k)
            params, _, _ = train(params, pairs, cfg)
            eval_pairs = generate_pairs(eval_records, protocol)
            scores = score_pairs(params, eval_pairs, mode=mode)
            acc, thr = best_accuracy(scores)
            row.best_accuracy = acc
            row.best_threshold = thr
            row.gar_at = {str(ft): gar_at_far(scores, ft)[0] for ft in far_targets}
        except Exception as exc:  # record and continue with the rest of the grid
            row.error = f"{type(exc).__name__}: {exc}"
        row.seconds = time.perf_counter() - t0
        rows.append(row)
    if out_dir is not None:
        write_ablation_report(rows, out_dir, far_targets)
    return rows


def write_ablation_report(rows: list[AblationRow], out_dir, far_targets=DEFAULT_FAR_TARGETS):
    os.makedirs(str(out_dir), exist_ok=True)
    csv_path = os.path.join(str(out_dir), "ablation.csv")
    with open(csv_path, "w", encoding="utf-8") as f:
        far_cols = ",".join(f"gar_at_{ft}" for ft in far_targets)
        f.write(f"label,config,best_accuracy,{far_cols},error\n")
        for r in rows:
            gars = ",".join("" if str(ft) not in r.gar_at else f"{r.gar_at[str(ft)]:.12g}"
                            for ft in far_targets)
            acc = "" if r.best_accuracy is None else f"{r.best_accuracy:.12g}"
            cfg = json.dumps(r.config).replace('"', "'")
            f.write(f'{r.label},"{cfg}",{acc},{gars},{r.error or ""}\n')
    json_path = os.path.join(str(out_dir), "ablation.json")
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump([r.__dict__ for r in rows], f, indent=2, default=str)
