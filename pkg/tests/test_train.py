import numpy as np
import pytest

from healconv import models, synthdigits
from healconv import io as hio
from healconv.errors import ContractError
from healconv.train import (
    TrainConfig,
    eval_classifier_idx,
    eval_segmentation,
    make_segmentation_fixture,
    overfit_segmenter,
    train_smnist,
)


@pytest.fixture(scope="module")
def digit_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("digits")
    synthdigits.write_dataset(root / "train-img.idx", root / "train-lab.idx", 96, seed=1)
    synthdigits.write_dataset(root / "test-img.idx", root / "test-lab.idx", 64, seed=2)
    return root


def make_config(root, out_dir, **kw):
    base = dict(
        train_images=str(root / "train-img.idx"),
        train_labels=str(root / "train-lab.idx"),
        test_images=str(root / "test-img.idx"),
        test_labels=str(root / "test-lab.idx"),
        out_dir=str(out_dir),
        level=4,
        epochs=3,
        batch_size=32,
        lr=0.02,
        seed=42,
    )
    base.update(kw)
    return TrainConfig(**base)


class TestSynthDigits:
    def test_deterministic(self):
        a_img, a_lab = synthdigits.make_dataset(16, seed=5)
        b_img, b_lab = synthdigits.make_dataset(16, seed=5)
        assert np.array_equal(a_img, b_img)
        assert np.array_equal(a_lab, b_lab)

    def test_shapes_and_range(self):
        imgs, labs = synthdigits.make_dataset(8, seed=0)
        assert imgs.shape == (8, 28, 28)
        assert imgs.dtype == np.uint8
        assert set(labs.tolist()) <= set(range(10))

    def test_idx_files_parse(self, digit_files):
        imgs = hio.load_idx(digit_files / "train-img.idx")
        labs = hio.load_idx(digit_files / "train-lab.idx")
        assert imgs.shape == (96, 28, 28)
        assert labs.shape == (96,)


class TestTrainSmnist:
    def test_overfit_small_subset(self, digit_files, tmp_path):
        # 64 train digits for a few epochs: loss drops epoch over epoch and
        # the training set is memorized
        cfg = make_config(digit_files, tmp_path / "run", limit_train=64,
                          limit_test=32, epochs=6)
        report = train_smnist(cfg, log=lambda *a: None)
        hist = report["loss_history"]
        assert all(b < a for a, b in zip(hist[:5], hist[1:6]))
        assert report["train_accuracy"] >= 0.95

    def test_metric_csv_format(self, digit_files, tmp_path):
        cfg = make_config(digit_files, tmp_path / "run", limit_train=32,
                          limit_test=16, epochs=2)
        train_smnist(cfg, log=lambda *a: None)
        lines = open(cfg.out_dir + "/metrics.csv").read().splitlines()
        assert lines[0].startswith("#")       # provenance header
        assert lines[1] == "epoch,split,loss,accuracy"
        assert len(lines) == 2 + 2 * cfg.epochs
        assert lines[2].startswith("1,train,")

    def test_deterministic_given_seed(self, digit_files, tmp_path):
        a = make_config(digit_files, tmp_path / "a", limit_train=32, limit_test=16, epochs=2)
        b = make_config(digit_files, tmp_path / "b", limit_train=32, limit_test=16, epochs=2)
        train_smnist(a, log=lambda *a: None)
        train_smnist(b, log=lambda *a: None)
        csv_a = open(a.out_dir + "/metrics.csv").read()
        csv_b = open(b.out_dir + "/metrics.csv").read()
        assert csv_a == csv_b

    def test_checkpoint_evaluates(self, digit_files, tmp_path):
        cfg = make_config(digit_files, tmp_path / "run", limit_train=64,
                          limit_test=32, epochs=4)
        report = train_smnist(cfg, log=lambda *a: None)
        ev = eval_classifier_idx(cfg.test_images, cfg.test_labels,
                                 report["checkpoint"], cfg.out_dir + "/model.cfg",
                                 limit=32)
        assert ev["accuracy"] == pytest.approx(report["test_accuracy"], abs=1e-9)

    def test_missing_files_raise(self, tmp_path):
        cfg = TrainConfig(
            train_images=str(tmp_path / "nope.idx"), train_labels=str(tmp_path / "nope2.idx"),
            test_images=str(tmp_path / "nope3.idx"), test_labels=str(tmp_path / "nope4.idx"),
            out_dir=str(tmp_path / "out"))
        with pytest.raises(FileNotFoundError):
            train_smnist(cfg, log=lambda *a: None)

    def test_bad_config_rejected(self, tmp_path):
        with pytest.raises(ContractError):
            TrainConfig(train_images="x", train_labels="y", test_images="z",
                        test_labels="w", out_dir="o", epochs=0)


class TestSegmentationFixture:
    def test_fixture_shapes(self):
        signals, labels = make_segmentation_fixture(3, level=4, num_classes=4, seed=1)
        assert signals.shape == (3, 3072, 4)
        assert labels.shape == (3, 3072)
        assert labels.max() < 4

    def test_pointwise_model_fits_most_but_not_all(self):
        # the label rule is linear in the channels plus a smooth spatial bias:
        # a pointwise model captures the bulk (~89%) and the rest needs the
        # neighborhood context a real segmenter brings
        signals, labels = make_segmentation_fixture(2, level=3, num_classes=3, seed=3)
        model = models.Model(models.build_pointwise_classifier(4, 3, entry_level=3), seed=0)
        report = overfit_segmenter(model, signals, labels, max_steps=300, lr=0.5,
                                   log=lambda *a: None)
        assert 0.8 <= report["accuracy"] < 0.95


class TestEvalSegmentation:
    def _write_pair(self, sig_dir, lab_dir, labels, num_classes, level):
        from healconv.signal import SphericalSignal

        sig_dir.mkdir(exist_ok=True)
        lab_dir.mkdir(exist_ok=True)
        onehot = np.eye(num_classes, dtype=np.float32)[labels]
        hio.write_sphs(sig_dir / "scene0.sphs", SphericalSignal(level, onehot))
        hio.write_sphs(lab_dir / "scene0.sphs",
                       SphericalSignal(level, labels[:, None].astype(np.uint8)))

    def _identity_model(self, tmp_path, num_classes, level):
        spec = models.build_pointwise_classifier(num_classes, num_classes, entry_level=level)
        model = models.Model(spec)
        model._layers["head"].w.data = np.eye(num_classes, dtype=np.float32)
        model._layers["head"].b.data = np.zeros(num_classes, dtype=np.float32)
        ckpt = tmp_path / "id.stmw"
        model.save(ckpt)
        cfg = tmp_path / "id.cfg"
        models.save_model_config(cfg, {"arch": "pointwise", "in_channels": num_classes,
                                       "num_classes": num_classes, "entry_level": level})
        return ckpt, cfg

    def test_predictions_equal_labels_gives_perfect_scores(self, tmp_path, rng):
        level, k = 2, 3
        labels = rng.integers(0, k, 192)
        self._write_pair(tmp_path / "sig", tmp_path / "lab", labels, k, level)
        ckpt, cfg = self._identity_model(tmp_path, k, level)
        report = eval_segmentation(tmp_path / "sig", tmp_path / "lab", ckpt, cfg)
        assert report["miou"] == 1.0
        assert report["pixel_accuracy"] == 1.0

    def test_half_correct_binary_fixture(self, tmp_path):
        level, k = 2, 2
        labels = np.zeros(192, dtype=np.int64)
        labels[96:] = 1
        onehot = np.zeros((192, 2), dtype=np.float32)
        onehot[:, 0] = 1.0  # model will predict class 0 everywhere
        from healconv.signal import SphericalSignal

        (tmp_path / "sig").mkdir()
        (tmp_path / "lab").mkdir()
        hio.write_sphs(tmp_path / "sig" / "s.sphs", SphericalSignal(level, onehot))
        hio.write_sphs(tmp_path / "lab" / "s.sphs",
                       SphericalSignal(level, labels[:, None].astype(np.uint8)))
        ckpt, cfg = self._identity_model(tmp_path, k, level)
        report = eval_segmentation(tmp_path / "sig", tmp_path / "lab", ckpt, cfg)
        assert report["pixel_accuracy"] == 0.5
        assert report["miou"] == pytest.approx(0.25)

    def test_missing_label_file_raises(self, tmp_path, rng):
        level, k = 2, 3
        labels = rng.integers(0, k, 192)
        self._write_pair(tmp_path / "sig", tmp_path / "lab", labels, k, level)
        (tmp_path / "lab" / "scene0.sphs").unlink()
        ckpt, cfg = self._identity_model(tmp_path, k, level)
        with pytest.raises(ContractError):
            eval_segmentation(tmp_path / "sig", tmp_path / "lab", ckpt, cfg)
