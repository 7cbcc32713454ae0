"""Supervised training loop: batched Adam over the Chamfer loss, validated
after every epoch, with convergence and early-stopping exits.

The returned parameters are always the best-validation snapshot, not the
last state the optimizer touched.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import chamfer, model, nn
from .data import DatasetManifest, load_sample
from .errors import ConfigError, DivergenceError


@dataclass
class TrainConfig:
    learning_rate: float = 5e-5
    batch_size: int = 5
    weight_decay: float = 1e-5
    max_epochs: int = 50
    convergence_epsilon: float = 1e-3
    early_stop_patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if (self.learning_rate <= 0 or self.batch_size < 1
                or self.weight_decay < 0 or self.max_epochs < 0
                or self.convergence_epsilon <= 0 or self.early_stop_patience < 1):
            raise ConfigError(f"invalid training config: {self}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "weight_decay": self.weight_decay,
            "max_epochs": self.max_epochs,
            "convergence_epsilon": self.convergence_epsilon,
            "early_stop_patience": self.early_stop_patience,
            "seed": self.seed,
        }


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    wall_time_ms: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    stop_reason: str = "max_epochs"  # converged | early_stop | max_epochs

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as f:
            f.write("epoch,train_loss,val_loss,wall_time_ms\n")
            for r in self.records:
                f.write(f"{r.epoch},{r.train_loss:.10g},{r.val_loss:.10g},"
                        f"{r.wall_time_ms:.3f}\n")


def _sample_loss_and_grad(params, model_config, image, cloud_gt, dtype):
    """Forward one sample, return (loss, per-parameter gradients)."""
    pred, _, caches = model.forward(params, model_config, image[None],
                                    return_cache=True)
    pred_cloud = pred[0].astype(np.float64)
    loss, idx_fwd, idx_bwd = chamfer.chamfer_auto(cloud_gt, pred_cloud)
    grad_cloud = chamfer.chamfer_grad(cloud_gt, pred_cloud, idx_fwd, idx_bwd)
    grads = model.backward(params, model_config, caches,
                           grad_cloud[None].astype(dtype))
    return loss, grads


def batch_gradients(params, model_config, batch, dtype):
    """Mean of per-sample gradients over a batch, plus per-sample losses.

    Accumulation runs in sample order so results are reproducible.
    """
    acc = None
    losses = []
    for image, cloud_gt in batch:
        loss, grads = _sample_loss_and_grad(params, model_config, image,
                                            cloud_gt, dtype)
        losses.append(loss)
        if acc is None:
            acc = [(gw.astype(np.float64), gb.astype(np.float64))
                   for gw, gb in grads]
        else:
            acc = [(aw + gw, ab + gb)
                   for (aw, ab), (gw, gb) in zip(acc, grads)]
    inv = 1.0 / len(losses)
    mean = [((aw * inv).astype(dtype), (ab * inv).astype(dtype))
            for aw, ab in acc]
    return mean, losses


def _load_split(manifest: DatasetManifest, split: str, dtype):
    refs = manifest.split_refs(split)
    out = []
    for ref in refs:
        s = load_sample(ref, manifest.root)
        out.append((np.ascontiguousarray(s.image, dtype=dtype),
                    np.asarray(s.cloud, dtype=np.float64)))
    return out


def _evaluate_pairs(params, model_config, pairs) -> float:
    losses = []
    for image, cloud_gt in pairs:
        pred, _ = model.forward(params, model_config, image[None])
        loss, _, _ = chamfer.chamfer_auto(cloud_gt, pred[0].astype(np.float64))
        losses.append(loss)
    # fsum is exact, so the mean is invariant to sample order
    return math.fsum(losses) / len(losses)


def evaluate(params, model_config, manifest: DatasetManifest, split: str,
             dtype=None) -> float:
    """Mean Chamfer loss over a split. Order-invariant, mutates nothing."""
    dtype = dtype or params.dtype
    pairs = _load_split(manifest, split, dtype)
    if not pairs:
        raise ConfigError(f"split {split!r} is empty")
    return _evaluate_pairs(params, model_config, pairs)


def train(model_config: model.ModelConfig, train_config: TrainConfig,
          manifest: DatasetManifest, dtype=np.float32, initial_params=None,
          log=None):
    """Full training run. Returns (best_params, history).

    Stops when consecutive validation losses agree within
    convergence_epsilon, when validation has not improved for
    early_stop_patience epochs, or at max_epochs.
    """
    train_pairs = _load_split(manifest, "train", dtype)
    val_pairs = _load_split(manifest, "val", dtype)
    if not train_pairs or not val_pairs:
        raise ConfigError(
            f"need nonempty train and val splits, got {len(train_pairs)} train "
            f"and {len(val_pairs)} val samples"
        )
    rng = np.random.default_rng(train_config.seed)
    params = initial_params.copy() if initial_params is not None \
        else model.build_model(model_config, rng, dtype=dtype)
    states = [
        (nn.AdamState.zeros_like(e.weight), nn.AdamState.zeros_like(e.bias))
        for e in params.entries
    ]

    history = TrainHistory()
    best_params = params.copy()
    best_val = np.inf
    last_val = None
    epochs_since_improvement = 0
    bsz = train_config.batch_size

    for epoch in range(1, train_config.max_epochs + 1):
        t0 = time.perf_counter()
        order = np.random.default_rng((train_config.seed, epoch)).permutation(
            len(train_pairs))
        epoch_losses = []
        for lo in range(0, len(order), bsz):
            batch = [train_pairs[i] for i in order[lo:lo + bsz]]
            grads, losses = batch_gradients(params, model_config, batch, dtype)
            epoch_losses.extend(losses)
            for pi, e in enumerate(params.entries):
                gw, gb = grads[pi]
                sw, sb = states[pi]
                e.weight, sw = nn.adam_step(e.weight, gw, sw,
                                            train_config.learning_rate,
                                            train_config.weight_decay)
                e.bias, sb = nn.adam_step(e.bias, gb, sb,
                                          train_config.learning_rate,
                                          train_config.weight_decay)
                states[pi] = (sw, sb)
        train_loss = math.fsum(epoch_losses) / len(epoch_losses)
        if not math.isfinite(train_loss):
            raise DivergenceError(f"non-finite training loss at epoch {epoch}")
        val_loss = _evaluate_pairs(params, model_config, val_pairs)
        if not math.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        wall_ms = (time.perf_counter() - t0) * 1000.0
        history.records.append(EpochRecord(epoch, train_loss, val_loss, wall_ms))
        if log:
            log(f"epoch {epoch}: train {train_loss:.6g} val {val_loss:.6g} "
                f"({wall_ms:.0f} ms)")

        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
            epochs_since_improvement = 0
        else:
            epochs_since_improvement += 1

        if last_val is not None and \
                abs(val_loss - last_val) < train_config.convergence_epsilon:
            history.stop_reason = "converged"
            break
        last_val = val_loss
        if epochs_since_improvement >= train_config.early_stop_patience:
            history.stop_reason = "early_stop"
            break
    else:
        history.stop_reason = "max_epochs"

    return best_params, history
