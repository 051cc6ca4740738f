"""Mini-batch SGD over verification pairs.

Plain SGD, no momentum.  Class imbalance is handled by loss weighting (not
resampling): each epoch attaches inverse-frequency weights computed from the
epoch's pair labels.  The whole update path is single-threaded and
deterministic for a fixed (seed, config, data) triple.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import losses, ops
from .dataset import AugmentConfig, PairRecord, augment, load_image, pair_rng
from .errors import ConfigError, NumericError
from .losses import LossConfig, class_weights, total_loss
from .network import NetworkParams, save_params, siamese_forward
from .tensor import Graph, Tensor


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 10
    batch_size: int = 16
    freeze_k: int | None = None  # None = profile default, applied by the caller
    loss: LossConfig = field(default_factory=LossConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0
    checkpoint_every: int = 0  # 0 = final checkpoint only
    class_balance: bool = True

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")


@dataclass
class EpochRow:
    epoch: int
    l_c: float
    l_r: float
    l_bce: float
    l_total: float
    train_acc: float
    seconds: float


@dataclass
class TrainLog:
    rows: list[EpochRow] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("epoch,l_c,l_r,l_bce,l_total,train_acc,seconds\n")
            for r in self.rows:
                f.write(f"{r.epoch},{r.l_c:.12g},{r.l_r:.12g},{r.l_bce:.12g},"
                        f"{r.l_total:.12g},{r.train_acc:.12g},{r.seconds:.6g}\n")


def make_batches(pairs: list, batch_size: int, seed: int,
                 balance: bool) -> tuple[list[list], tuple[float, float]]:
    """Seeded shuffle into batches (last one may be partial) plus epoch weights.

    Batch elements are (original_index, pair) so augmentation streams stay
    tied to the pair, not its shuffled position.
    """
    if not pairs:
        raise ConfigError("empty pair list")
    indexed = list(enumerate(pairs))
    rng = np.random.default_rng(seed)
    rng.shuffle(indexed)
    batches = [indexed[i:i + batch_size] for i in range(0, len(indexed), batch_size)]
    weights = (1.0, 1.0)
    if balance:
        n_pos = sum(1 for p in pairs if p.y == 1)
        n_neg = len(pairs) - n_pos
        weights = class_weights(n_pos, n_neg)
    return batches, weights


def sgd_step(params: NetworkParams, lr: float) -> None:
    """theta <- theta - lr * grad for unfrozen tensors; frozen ones untouched."""
    for i, (t, frozen) in enumerate(zip(params.tensors, params.freeze)):
        if t.grad is None:
            continue
        if not np.all(np.isfinite(t.grad)):
            raise NumericError(f"non-finite gradient in parameter tensor {i}")
        if frozen:
            continue
        t.data = t.data - lr * t.grad


class _ImageCache:
    """Per-run cache of decoded, resized base images keyed by record."""

    def __init__(self, target):
        self.target = target
        self._cache = {}

    def get(self, rec) -> Tensor:
        key = (rec.identity, rec.path)
        if key not in self._cache:
            self._cache[key] = load_image(rec, self.target)
        return self._cache[key]


def train(params: NetworkParams, pairs: list[PairRecord], cfg: TrainConfig,
          out_dir=None, progress=None):
    """Run the SGD loop; returns (params, TrainLog, checkpoint paths)."""
    if not pairs:
        raise ConfigError("no training pairs")
    log = TrainLog()
    checkpoints = []
    cache = _ImageCache(params.spec.input_shape)
    last_good = None

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        epoch_seed = int(np.random.SeedSequence((cfg.seed, epoch)).generate_state(1)[0])
        batches, (w_pos, w_neg) = make_batches(
            pairs, cfg.batch_size, epoch_seed, cfg.class_balance)
        loss_cfg = replace(cfg.loss, w_pos=w_pos, w_neg=w_neg)

        sums = np.zeros(4)
        n_correct = 0
        try:
            for batch in batches:
                g = Graph()
                d_scalars, p_scalars, ys = [], [], []
                for idx, pair in batch:
                    rng = pair_rng(cfg.seed, epoch, idx)
                    xa = augment(cache.get(pair.a), cfg.augment, rng)
                    xb = augment(cache.get(pair.b), cfg.augment, rng)
                    emb_a, emb_b, p = siamese_forward(params, xa, xb, g)
                    d_scalars.append(losses.cosine_distance(emb_a, emb_b, g))
                    p_scalars.append(p)
                    ys.append(pair.y)
                d_vec = ops.stack(g, d_scalars)
                p_vec = ops.stack(g, p_scalars)
                y = np.array(ys, dtype=np.float64)
                bd = total_loss(d_vec, p_vec, y, loss_cfg, g)
                if not np.isfinite(bd.l_total):
                    raise NumericError(f"non-finite loss at epoch {epoch}")
                for t in params.tensors:
                    t.grad = None
                g.backward(bd.total_node)
                sgd_step(params, cfg.lr)
                n = len(batch)
                sums += np.array([bd.l_c, bd.l_r, bd.l_bce, bd.l_total]) * n
                n_correct += int(np.sum((bd.p >= 0.5) == (y == 1)))
        except NumericError:
            # abort training but keep the last good checkpoint
            if out_dir is not None and last_good is None:
                last_good = _checkpoint(params, out_dir, epoch, checkpoints)
            raise

        n_pairs = len(pairs)
        row = EpochRow(epoch=epoch,
                       l_c=sums[0] / n_pairs, l_r=sums[1] / n_pairs,
                       l_bce=sums[2] / n_pairs, l_total=sums[3] / n_pairs,
                       train_acc=n_correct / n_pairs,
                       seconds=time.perf_counter() - t0)
        log.rows.append(row)
        if progress is not None:
            progress(row)
        if out_dir is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            last_good = _checkpoint(params, out_dir, epoch, checkpoints)

    if out_dir is not None:
        _checkpoint(params, out_dir, "final", checkpoints)
    return params, log, checkpoints


def _checkpoint(params, out_dir, tag, checkpoints) -> str:
    import os

    path = os.path.join(str(out_dir), f"checkpoint_{tag}.dgnet")
    save_params(params, path)
    checkpoints.append(path)
    return path
