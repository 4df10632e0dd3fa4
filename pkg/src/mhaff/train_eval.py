"""Training loop with per-epoch validation and best-epoch selection.

Each epoch shuffles the training rows, augments every ROI stack with
its own per-sample per-epoch stream, and steps Adam under the cosine
schedule. The checkpoint returned is the epoch with the best
validation accuracy (earlier epoch wins ties).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fusion_model as fm
from . import tensor_nn as tn
from .errors import EmptySplit, ShapeMismatch
from .preprocess import augment, augmentation_rng
from .tensor_nn import OptimizerState, Tensor, adam_step, backward, cosine_lr


@dataclass
class SampleSet:
    """Aligned arrays for one split."""

    ids: list[str]
    labels: np.ndarray      # (N,)
    x_r: np.ndarray         # (N, width) raw selected radiomics columns
    pixels: np.ndarray      # (N, n, 32, 32) normalized ROI stacks

    def __len__(self) -> int:
        return len(self.ids)

    def check(self, width: int, n_slices: int) -> None:
        n = len(self.ids)
        if n == 0:
            raise EmptySplit("sample set is empty")
        if self.x_r.shape != (n, width):
            raise ShapeMismatch(f"x_r shape {self.x_r.shape} != ({n}, {width})")
        if self.pixels.shape != (n, n_slices, 32, 32):
            raise ShapeMismatch(
                f"pixels shape {self.pixels.shape} != ({n}, {n_slices}, 32, 32)")


@dataclass
class TrainSettings:
    lr: float
    weight_decay: float = 1e-5
    epochs: int = 50
    batch_size: int = 16
    seed: int = 0


def evaluate(params: dict[str, Tensor], config: fm.ModelConfig,
             samples: SampleSet, batch_size: int = 16
             ) -> tuple[np.ndarray, np.ndarray]:
    """Predicted classes and class probabilities, without augmentation."""
    n = len(samples)
    probs = np.zeros((n, config.m), dtype=np.float64)
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        tokens, _ = fm.backbone_forward(params, samples.pixels[start:stop])
        out = fm.forward(params, config, samples.x_r[start:stop], tokens)
        probs[start:stop] = out.probs.data
    return probs.argmax(axis=1), probs


def params_state(params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in params.items()}


def load_params(state: dict[str, np.ndarray], config: fm.ModelConfig
                ) -> dict[str, Tensor]:
    """Rebuild a parameter set from checkpoint arrays."""
    params = fm.init_params(config)
    if set(state) != set(params):
        missing = set(params) ^ set(state)
        raise ShapeMismatch(f"parameter names differ: {sorted(missing)}")
    for name, arr in state.items():
        if params[name].data.shape != arr.shape:
            raise ShapeMismatch(
                f"{name}: stored {arr.shape} != expected {params[name].data.shape}")
        params[name].data = arr.astype(np.float32)
    return params


def train(train_set: SampleSet, val_set: SampleSet, config: fm.ModelConfig,
          settings: TrainSettings
          ) -> tuple[dict[str, np.ndarray], list[dict], int]:
    """Returns (best parameter state, per-epoch curve, best epoch)."""
    width = config.radiomics_width
    train_set.check(width, config.n)
    val_set.check(width, config.n)

    params = fm.init_params(config)
    mean = train_set.x_r.mean(axis=0)
    std = train_set.x_r.std(axis=0)
    fm.set_norm_stats(params, mean, std)
    trainable = fm.trainable(params)

    state = OptimizerState(lr=settings.lr, weight_decay=settings.weight_decay)
    shuffle_rng = np.random.default_rng(settings.seed)
    n_train = len(train_set)

    curve: list[dict] = []
    best_acc = -1.0
    best_epoch = -1
    best_state = params_state(params)

    for epoch in range(settings.epochs):
        state.lr = cosine_lr(epoch, settings.epochs, settings.lr)
        order = shuffle_rng.permutation(n_train)
        loss_sum = 0.0
        for start in range(0, n_train, settings.batch_size):
            rows = order[start:start + settings.batch_size]
            stacks = np.stack([
                augment(train_set.pixels[i],
                        augmentation_rng(settings.seed, train_set.ids[i], epoch))
                for i in rows])
            tokens, _ = fm.backbone_forward(params, stacks)
            out = fm.forward(params, config, train_set.x_r[rows], tokens)
            loss = tn.cross_entropy(out.logits, train_set.labels[rows])
            backward(loss)
            adam_step(trainable, state)
            for p in params.values():
                p.grad = None
            loss_sum += float(loss.data) * len(rows)

        train_loss = loss_sum / n_train
        val_pred, _ = evaluate(params, config, val_set, settings.batch_size)
        val_acc = float((val_pred == val_set.labels).mean())
        curve.append({"epoch": epoch, "lr": state.lr,
                      "train_loss": train_loss, "val_accuracy": val_acc})
        if val_acc > best_acc:
            best_acc = val_acc
            best_epoch = epoch
            best_state = params_state(params)

    return best_state, curve, best_epoch


def curve_csv(curve: list[dict]) -> str:
    lines = ["epoch,lr,train_loss,val_accuracy"]
    for row in curve:
        lines.append(f"{row['epoch']},{repr(row['lr'])},"
                     f"{repr(row['train_loss'])},{repr(row['val_accuracy'])}")
    return "\n".join(lines) + "\n"
