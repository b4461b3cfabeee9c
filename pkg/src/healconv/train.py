"""Training and evaluation pipelines used by the CLI and the demos."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import numpy as np

from . import healpix
from . import io as hio
from . import models
from .errors import ContractError, NumericError
from .metrics import iou_per_class, miou, pixel_accuracy
from .nn import SGD, Tape, functional as F
from .projection import digit_projector


@dataclass
class TrainConfig:
    train_images: str
    train_labels: str
    test_images: str
    test_labels: str
    out_dir: str
    level: int = 4
    epochs: int = 20
    batch_size: int = 64
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 42
    limit_train: int | None = None
    limit_test: int | None = None
    model_config: str | None = None

    def __post_init__(self):
        for name in ("epochs", "batch_size"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive")
        for name in ("lr", "momentum", "weight_decay"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be non-negative")


def _load_split(images_path, labels_path, limit):
    images = hio.load_idx(images_path)
    labels = hio.load_idx(labels_path)
    if images.ndim != 3:
        raise ContractError(f"{images_path} does not contain images")
    if labels.ndim != 1:
        raise ContractError(f"{labels_path} does not contain labels")
    if len(images) != len(labels):
        raise ContractError(f"{len(images)} images vs {len(labels)} labels")
    if limit is not None:
        images = images[:limit]
        labels = labels[:limit]
    return images, labels


def _project_digits(images, level, chunk=512):
    proj = digit_projector(level)
    parts = [proj.project_batch(images[i : i + chunk]) for i in range(0, len(images), chunk)]
    return np.concatenate(parts, axis=0)


def _eval_classifier(model, signals, labels, batch_size=256):
    correct = 0
    loss_sum = 0.0
    for i in range(0, len(signals), batch_size):
        x = signals[i : i + batch_size]
        y = labels[i : i + batch_size]
        logits = model.forward(x, train=False)
        loss_sum += float(
            F.softmax_xent(logits, y).data
        ) * len(y)
        correct += int((logits.data.argmax(axis=1) == y).sum())
    return loss_sum / len(signals), correct / len(signals)


def train_smnist(cfg: TrainConfig, log=print) -> dict:
    """Project digits, train the 5-layer classifier, write metrics + checkpoint.

    Deterministic for a fixed seed.  Returns a metrics summary; per-epoch rows
    land in ``out_dir/metrics.csv`` and the weights in ``out_dir/smnist.stmw``.
    """
    t0 = time.time()
    train_x, train_y = _load_split(cfg.train_images, cfg.train_labels, cfg.limit_train)
    test_x, test_y = _load_split(cfg.test_images, cfg.test_labels, cfg.limit_test)
    log(f"projecting {len(train_x)} train + {len(test_x)} test digits to level {cfg.level}")
    train_s = _project_digits(train_x, cfg.level)
    test_s = _project_digits(test_x, cfg.level)

    if cfg.model_config:
        spec = models.spec_from_config(models.load_model_config(cfg.model_config))
        if spec.entry_level != cfg.level:
            raise ContractError(
                f"model config entry level {spec.entry_level} != --level {cfg.level}"
            )
    else:
        spec = models.build_smnist(entry_level=cfg.level)
    model = models.Model(spec, seed=cfg.seed)
    log(f"model {spec.arch}: {model.count_params()} trainable parameters")

    opt = SGD([t for _, t in model.params()], lr=cfg.lr, momentum=cfg.momentum,
              weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    os.makedirs(cfg.out_dir, exist_ok=True)
    csv_path = os.path.join(cfg.out_dir, "metrics.csv")
    ckpt_path = os.path.join(cfg.out_dir, "smnist.stmw")

    rows = []
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_s))
        losses = []
        correct = 0
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            x = train_s[idx]
            y = train_y[idx]
            with Tape() as tape:
                logits = model.forward(x, train=True)
                loss = F.softmax_xent(logits, y)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise NumericError(f"non-finite training loss at epoch {epoch}")
                tape.backward(loss)
            opt.step()
            opt.zero_grad()
            losses.append(value)
            correct += int((logits.data.argmax(axis=1) == y).sum())
        train_loss = float(np.mean(losses))
        train_acc = correct / len(train_s)
        test_loss, test_acc = _eval_classifier(model, test_s, test_y)
        rows.append((epoch, "train", train_loss, train_acc))
        rows.append((epoch, "test", test_loss, test_acc))
        history.append(train_loss)
        log(f"epoch {epoch:3d}  train loss {train_loss:.4f} acc {train_acc:.4f}  "
            f"test loss {test_loss:.4f} acc {test_acc:.4f}")

    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(f"# arch={spec.arch} level={cfg.level} epochs={cfg.epochs} "
                 f"batch_size={cfg.batch_size} lr={cfg.lr} momentum={cfg.momentum} "
                 f"weight_decay={cfg.weight_decay} seed={cfg.seed} "
                 f"limit_train={cfg.limit_train} limit_test={cfg.limit_test}\n")
        fh.write("epoch,split,loss,accuracy\n")
        for epoch, split, loss, acc in rows:
            fh.write(f"{epoch},{split},{loss:.6f},{acc:.6f}\n")
    model.save(ckpt_path)
    models.save_model_config(
        os.path.join(cfg.out_dir, "model.cfg"),
        {"arch": spec.arch, "entry_level": spec.entry_level,
         "in_channels": spec.in_channels, "num_classes": 10,
         "widths": ",".join(str(d.c_out) for d in spec.layers if d.kind == "sconv")},
    )
    return {
        "train_loss": rows[-2][2],
        "train_accuracy": rows[-2][3],
        "test_loss": rows[-1][2],
        "test_accuracy": rows[-1][3],
        "parameters": model.count_params(),
        "epochs": cfg.epochs,
        "seconds": time.time() - t0,
        "checkpoint": ckpt_path,
        "metrics_csv": csv_path,
        "loss_history": history,
    }


def eval_classifier_idx(images_path, labels_path, checkpoint, model_config,
                        limit=None) -> dict:
    """Accuracy of a digit checkpoint on an IDX image/label pair."""
    spec = models.spec_from_config(models.load_model_config(model_config))
    model = models.Model(spec)
    model.load(checkpoint)
    images, labels = _load_split(images_path, labels_path, limit)
    signals = _project_digits(images, spec.entry_level)
    loss, acc = _eval_classifier(model, signals, labels)
    return {"loss": loss, "accuracy": acc, "count": len(labels)}


def eval_segmentation(signal_dir, label_dir, checkpoint, model_config,
                      batch_size=2) -> dict:
    """Per-class IoU + aggregates of a segmenter over paired .sphs files.

    Signals are ``<name>.sphs`` float files; labels are u8 ``<name>.sphs``
    files of the same stem in ``label_dir``.
    """
    spec = models.spec_from_config(models.load_model_config(model_config))
    model = models.Model(spec)
    model.load(checkpoint)

    names = sorted(f for f in os.listdir(signal_dir) if f.endswith(".sphs"))
    if not names:
        raise ContractError(f"no .sphs files in {signal_dir}")
    preds = []
    truths = []
    for name in names:
        label_path = os.path.join(label_dir, name)
        if not os.path.exists(label_path):
            raise ContractError(f"missing label file for {name}")
        sig = hio.read_sphs(os.path.join(signal_dir, name))
        lab = hio.read_sphs(label_path)
        if lab.data.dtype != np.uint8:
            raise ContractError(f"label file {name} is not a u8 label signal")
        if sig.level != spec.entry_level:
            raise ContractError(
                f"{name}: signal level {sig.level} != model entry level {spec.entry_level}"
            )
        logits = model.forward(sig.data[None].astype(np.float32), train=False)
        preds.append(logits.data[0].argmax(axis=1))
        truths.append(lab.data[:, 0].astype(np.int64))
    pred = np.concatenate(preds)
    truth = np.concatenate(truths)
    return {
        "pixel_accuracy": pixel_accuracy(pred, truth),
        "miou": miou(pred, truth),
        "iou_per_class": iou_per_class(pred, truth),
        "count": len(names),
    }


def make_segmentation_fixture(n_signals=5, level=5, num_classes=3, seed=0):
    """Synthetic segmentation batch: smooth multichannel fields whose labels
    follow a fixed linear map of the inputs plus a smooth bias field.

    Returns ``(signals (n, n_pix, 4) float32, labels (n, n_pix) int64)``.
    """
    rng = np.random.default_rng(seed)
    n_pix = healpix.n_pixels(level)

    def smooth(channels):
        coarse = rng.standard_normal(
            (n_signals, healpix.n_pixels(level - 3), channels)
        ).astype(np.float32)
        # nested children are contiguous, so coarse-to-fine is a plain repeat
        up = np.repeat(coarse, 64, axis=1)
        noise = 0.1 * rng.standard_normal((n_signals, n_pix, channels)).astype(np.float32)
        return up + noise

    signals = smooth(4)
    mixing = rng.standard_normal((4, num_classes)).astype(np.float32)
    labels = (signals @ mixing + 0.5 * smooth(num_classes)).argmax(axis=2)
    return signals, labels


def overfit_segmenter(model, signals, labels, max_steps=500, lr=0.05,
                      momentum=0.9, target_accuracy=None, log=print) -> dict:
    """Fit a segmenter to a fixed batch; returns the step-by-step accuracy.

    Stops early once ``target_accuracy`` is reached (training-set pixel
    accuracy, evaluated each step from the training logits).
    """
    opt = SGD([t for _, t in model.params()], lr=lr, momentum=momentum)
    acc_history = []
    for step in range(1, max_steps + 1):
        with Tape() as tape:
            logits = model.forward(signals, train=True)
            loss = F.softmax_xent(logits, labels, ignore_label=255)
            value = float(loss.data)
            if not np.isfinite(value):
                raise NumericError(f"non-finite loss at step {step}")
            tape.backward(loss)
        opt.step()
        opt.zero_grad()
        pred = logits.data.argmax(axis=2)
        acc = pixel_accuracy(pred.ravel(), labels.ravel())
        acc_history.append(acc)
        if step % 10 == 0 or (target_accuracy and acc >= target_accuracy):
            log(f"step {step:4d}  loss {value:.4f}  pixel acc {acc:.4f}")
        if target_accuracy is not None and acc >= target_accuracy:
            break
    return {"steps": len(acc_history), "accuracy": acc_history[-1],
            "history": acc_history}
