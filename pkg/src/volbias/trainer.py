"""Desk-scale logistic classifier trained with cross-entropy or soft-Dice.

Synthetic images are sampled from a region model: every pixel carries a
one-hot feature identifying its region, and all pixels of a region share
the label drawn for that region. A logistic model on these features is
exactly expressive enough to realize any per-region prediction, so the
bias it learns is attributable to the loss alone, not to model capacity.

Because pixels within a region are interchangeable, the trainer works on a
compact region-level representation (per-region pixel counts plus
per-image region labels); the gradients it uses are algebraically equal to
the pixel-level ones exposed by :func:`ce_gradient` / :func:`sd_gradient`.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .losses import LOG_EPS, SoftMap, VolumeErrorReport, volume_error_report
from .regions import RegionModel
from .rng import make_rng, spawn_seeds

__all__ = [
    "DEFAULT_LR",
    "ToyDataset",
    "ToyModel",
    "TrainReport",
    "TrainingDivergedError",
    "sigmoid",
    "generate_dataset",
    "forward",
    "ce_batch_loss",
    "ce_gradient",
    "sd_batch_loss",
    "sd_gradient",
    "train",
    "empirical_volume_bias",
]

DEFAULT_LR = {"ce": 0.1, "sd": 0.1}


class TrainingDivergedError(RuntimeError):
    pass


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class ToyDataset:
    """Sampled images in compact region form.

    ``labels`` has one row per image and one column per region; all pixels
    of region r in image i share ``labels[i, r]``. ``region_pixel_counts``
    gives the number of pixels materialized per region, shared by all
    images, and ``pixels_per_unit_volume`` converts pixel counts back into
    the model's volume units.
    """

    model: RegionModel
    region_pixel_counts: np.ndarray
    labels: np.ndarray
    pixels_per_unit_volume: int

    def __post_init__(self):
        counts = np.asarray(self.region_pixel_counts, dtype=int)
        labels = np.asarray(self.labels, dtype=float)
        if labels.ndim != 2 or labels.shape[1] != counts.size or counts.size != len(self.model):
            raise ValueError("inconsistent dataset shapes")
        object.__setattr__(self, "region_pixel_counts", counts)
        object.__setattr__(self, "labels", labels)

    @property
    def n_images(self) -> int:
        return self.labels.shape[0]

    @property
    def n_regions(self) -> int:
        return self.region_pixel_counts.size

    @property
    def pixels_per_image(self) -> int:
        return int(self.region_pixel_counts.sum())

    @property
    def region_volumes(self) -> np.ndarray:
        """Region volumes implied by the materialized pixels."""
        return self.region_pixel_counts / self.pixels_per_unit_volume

    @property
    def pixels_per_region(self) -> dict[int, int]:
        return {r: int(c) for r, c in enumerate(self.region_pixel_counts)}

    def image_features(self, i: int) -> np.ndarray:
        """One-hot region-identity features of image i, shape (pixels, regions)."""
        return np.repeat(np.eye(self.n_regions), self.region_pixel_counts, axis=0)

    def image_pixel_labels(self, i: int) -> np.ndarray:
        """Per-pixel labels of image i, expanded from the region labels."""
        return np.repeat(self.labels[i], self.region_pixel_counts)


@dataclass
class ToyModel:
    """Logistic classifier: per-region weight plus a shared bias."""

    weights: np.ndarray
    bias: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.bias)):
            raise ValueError("model parameters must be finite")

    def region_predictions(self) -> np.ndarray:
        """Predicted probability for a pixel of each region."""
        return sigmoid(self.weights + self.bias)


@dataclass(frozen=True)
class TrainReport:
    """Outcome of one training run plus held-out volume diagnostics.

    ``model`` carries the trained parameters so a later run can warm-start
    from them; it is not part of the serialized report.
    """

    loss_kind: str
    final_loss: float
    per_region_pred: np.ndarray
    epochs_run: int
    converged: bool
    volume_soft: VolumeErrorReport
    volume_hard: VolumeErrorReport
    bias_soft: float
    bias_hard: float
    model: "ToyModel" = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "loss_kind": self.loss_kind,
                "final_loss": self.final_loss,
                "per_region_pred": [float(p) for p in self.per_region_pred],
                "epochs_run": self.epochs_run,
                "bias_soft": self.bias_soft,
                "bias_hard": self.bias_hard,
            }
        )


def generate_dataset(
    model: RegionModel, n_images: int, pixels_per_unit_volume: int, seed: int
) -> ToyDataset:
    """Sample a dataset of region-labeled images from a region model.

    Each region is materialized as round(volume * pixels_per_unit_volume)
    pixels; each image draws one independent joint labeling. A region that
    would round to zero pixels cannot be represented at this resolution.
    """
    if n_images < 1:
        raise ValueError("need at least one image")
    if pixels_per_unit_volume < 1:
        raise ValueError("pixels_per_unit_volume must be >= 1")
    counts = np.array([round(r.volume * pixels_per_unit_volume) for r in model.regions], dtype=int)
    if np.any(counts == 0):
        bad = np.flatnonzero(counts == 0).tolist()
        raise ValueError(
            f"regions {bad} round to zero pixels at {pixels_per_unit_volume} pixels "
            f"per unit volume; increase the resolution"
        )
    probs = model.probabilities
    rng = make_rng(seed)
    labels = (rng.random((n_images, len(model))) < probs).astype(float)
    return ToyDataset(model, counts, labels, pixels_per_unit_volume)


def forward(model: ToyModel, features: np.ndarray) -> SoftMap:
    """Per-pixel predicted probabilities for a feature matrix."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[1] != model.weights.size:
        raise ValueError(f"features must have shape (pixels, {model.weights.size})")
    return SoftMap(sigmoid(features @ model.weights + model.bias))


def ce_batch_loss(model: ToyModel, features: np.ndarray, labels: np.ndarray) -> float:
    """Mean per-pixel cross-entropy over a batch of pixels."""
    y = sigmoid(np.asarray(features, float) @ model.weights + model.bias)
    y = np.clip(y, LOG_EPS, 1.0 - LOG_EPS)
    l = np.asarray(labels, float)
    return float(np.mean(-l * np.log(y) - (1.0 - l) * np.log(1.0 - y)))


def ce_gradient(model: ToyModel, features: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, float]:
    """Exact gradient of :func:`ce_batch_loss` in (weights, bias).

    The per-pixel driving term is prediction minus label, routed through
    the feature matrix; the sigmoid derivative cancels against the
    cross-entropy derivative.
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if features.shape[0] == 0:
        raise ValueError("batch is empty")
    y = sigmoid(features @ model.weights + model.bias)
    resid = (y - labels) / labels.size
    return features.T @ resid, float(np.sum(resid))


def _sd_image_terms(model: ToyModel, features: np.ndarray, labels: np.ndarray):
    y = sigmoid(np.asarray(features, float) @ model.weights + model.bias)
    l = np.asarray(labels, float)
    inter = float(l @ y)
    denom = float(l.sum() + y.sum())
    return y, l, inter, denom


def sd_batch_loss(model: ToyModel, images) -> float:
    """Mean per-image soft-Dice loss over a batch of (features, labels) pairs.

    Images whose labels and predictions are both entirely zero carry no
    overlap information; they are skipped with a warning.
    """
    losses = []
    skipped = 0
    for features, labels in images:
        _, _, inter, denom = _sd_image_terms(model, features, labels)
        if denom == 0.0:
            skipped += 1
            continue
        losses.append(1.0 - 2.0 * inter / denom)
    if skipped:
        warnings.warn(f"skipped {skipped} image(s) with empty labels and predictions")
    if not losses:
        raise ValueError("no image in the batch has any foreground label or prediction")
    return float(np.mean(losses))


def sd_gradient(model: ToyModel, images) -> tuple[np.ndarray, float]:
    """Exact gradient of :func:`sd_batch_loss` in (weights, bias).

    For each image, d(loss)/d(prediction at pixel j) is
    -2 * (label_j * denom - intersection) / denom^2, composed with the
    sigmoid derivative and routed through the features.
    """
    grad_w = np.zeros_like(model.weights)
    grad_b = 0.0
    used = 0
    skipped = 0
    for features, labels in images:
        features = np.asarray(features, dtype=float)
        y, l, inter, denom = _sd_image_terms(model, features, labels)
        if denom == 0.0:
            skipped += 1
            continue
        dl_dy = -2.0 * (l * denom - inter) / denom**2
        dz = dl_dy * y * (1.0 - y)
        grad_w += features.T @ dz
        grad_b += float(dz.sum())
        used += 1
    if skipped:
        warnings.warn(f"skipped {skipped} image(s) with empty labels and predictions")
    if used == 0:
        raise ValueError("no image in the batch has any foreground label or prediction")
    return grad_w / used, grad_b / used


# ----------------------------------------------------------------------
# Region-compact training
# ----------------------------------------------------------------------


def _compact_ce_loss(y, counts, mean_labels):
    yc = np.clip(y, LOG_EPS, 1.0 - LOG_EPS)
    per_region = -mean_labels * np.log(yc) - (1.0 - mean_labels) * np.log(1.0 - yc)
    return float(per_region @ (counts / counts.sum()))


def _compact_sd_terms(y, volumes, configs, config_weights):
    pred_sum = float(volumes @ y)
    inter = configs @ (volumes * y)
    target = configs @ volumes
    denom = target + pred_sum
    ok = denom > 0.0
    sd = np.where(ok, 1.0 - 2.0 * inter / np.where(ok, denom, 1.0), 0.0)
    loss = float(config_weights @ sd)
    return loss, inter, denom, ok


def _compact_sd_grad_y(configs, config_weights, inter, denom, ok):
    # dSD/dy_r per config, without the volume factor (it is the natural
    # per-region normalization applied by the trainer).
    d2 = np.where(ok, denom, 1.0) ** 2
    g = -2.0 * (configs * denom[:, None] - inter[:, None]) / d2[:, None]
    g[~ok] = 0.0
    return config_weights @ g


# Full-batch moment estimates carry no sampling noise, so a short
# second-moment memory is safe and lets saturated logits keep moving.
_ADAM_B1 = 0.9
_ADAM_B2 = 0.99
_ADAM_EPS = 1e-8


def _fit(
    counts: np.ndarray,
    pixels_per_unit_volume: int,
    train_labels: np.ndarray,
    val_labels: np.ndarray,
    loss_kind: str,
    lr: float,
    max_epochs: int,
    patience: int,
    init: ToyModel | None = None,
) -> tuple[np.ndarray, float, int, bool, float]:
    """Deterministic full-batch adaptive-moment descent on the compact form.

    The raw batch gradients scale each region by its pixel share, which
    would stall small regions; per-parameter moment normalization makes
    every logit move at a comparable rate without touching the stationary
    points. The learning rate is divided by five for every ``patience``
    epochs without validation improvement and the run stops after two such
    windows. The final parameters are returned: under deterministic
    full-batch descent the last iterate is the most-trained model, and
    selecting an earlier snapshot by validation loss would drag the
    predictions toward the validation split's label frequencies.
    """
    counts = counts.astype(float)
    n_pixels = counts.sum()
    volumes = counts / pixels_per_unit_volume
    mean_l_train = train_labels.mean(axis=0)
    mean_l_val = val_labels.mean(axis=0)
    if loss_kind == "sd":
        tr_cfg, tr_n = np.unique(train_labels, axis=0, return_counts=True)
        tr_w = tr_n / tr_n.sum()
        va_cfg, va_n = np.unique(val_labels, axis=0, return_counts=True)
        va_w = va_n / va_n.sum()

    def val_loss_at(y):
        if loss_kind == "ce":
            return _compact_ce_loss(y, counts, mean_l_val)
        loss, *_ = _compact_sd_terms(y, volumes, va_cfg, va_w)
        return loss

    if init is None:
        w = np.zeros_like(counts)
        b = 0.0
    else:
        if init.weights.size != counts.size:
            raise ValueError("warm-start model has the wrong number of regions")
        w = init.weights.copy()
        b = float(init.bias)
    m1 = np.zeros(counts.size + 1)
    m2 = np.zeros(counts.size + 1)
    best_val = np.inf
    since_improvement = 0
    cur_lr = lr
    epoch = 0
    stopped = False
    for epoch in range(1, max_epochs + 1):
        y = sigmoid(w + b)
        if loss_kind == "ce":
            grad_w = (y - mean_l_train) * counts / n_pixels
            grad_b = float(grad_w.sum())
        else:
            _, inter, denom, ok = _compact_sd_terms(y, volumes, tr_cfg, tr_w)
            gy = _compact_sd_grad_y(tr_cfg, tr_w, inter, denom, ok)
            grad_w = gy * y * (1.0 - y) * volumes
            grad_b = float(grad_w.sum())
        val_loss = val_loss_at(y)
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(
                f"{loss_kind} training diverged at epoch {epoch}: validation loss {val_loss}"
            )
        if val_loss < best_val - 1e-12:
            best_val = val_loss
            since_improvement = 0
        else:
            since_improvement += 1
            if since_improvement % patience == 0:
                cur_lr /= 5.0
            if since_improvement >= 2 * patience:
                stopped = True
                break
        g = np.append(grad_w, grad_b)
        m1 = _ADAM_B1 * m1 + (1.0 - _ADAM_B1) * g
        m2 = _ADAM_B2 * m2 + (1.0 - _ADAM_B2) * g * g
        hat1 = m1 / (1.0 - _ADAM_B1**epoch)
        hat2 = m2 / (1.0 - _ADAM_B2**epoch)
        step = cur_lr * hat1 / (np.sqrt(hat2) + _ADAM_EPS)
        w = w - step[:-1]
        b = b - float(step[-1])
    return w, b, epoch, stopped, float(val_loss_at(sigmoid(w + b)))


def _split_indices(n: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # 60/20/20 by image, seeded
    perm = make_rng(seed).permutation(n)
    n_train = max(int(round(0.6 * n)), 1)
    n_val = max(int(round(0.2 * n)), 1)
    return perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :]


def train(
    dataset: ToyDataset,
    loss_kind: str,
    lr: float | None = None,
    max_epochs: int = 4000,
    patience: int = 200,
    seed: int = 0,
    init: ToyModel | None = None,
) -> TrainReport:
    """Train the logistic classifier and report held-out volume biases.

    Images are split 60/20/20 into train/validation/test by a seeded
    permutation. Optimization is deterministic full-batch descent with
    adaptive moment scaling (see :func:`_fit`); the validation loss drives
    the plateau schedule and model selection, and soft and thresholded
    volume errors are measured on the test images.
    """
    if loss_kind not in DEFAULT_LR:
        raise ValueError(f"unknown loss kind {loss_kind!r}; expected 'ce' or 'sd'")
    if lr is None:
        lr = DEFAULT_LR[loss_kind]
    if lr <= 0:
        raise ValueError("learning rate must be > 0")
    i_train, i_val, i_test = _split_indices(dataset.n_images, seed)
    if i_test.size == 0:
        raise ValueError("dataset too small to hold out test images")
    w, b, epochs, converged, final_loss = _fit(
        dataset.region_pixel_counts,
        dataset.pixels_per_unit_volume,
        dataset.labels[i_train],
        dataset.labels[i_val],
        loss_kind,
        lr,
        max_epochs,
        patience,
        init=init,
    )
    pred = sigmoid(w + b)
    volumes = dataset.region_volumes
    test_labels = dataset.labels[i_test]
    true_mean = float((test_labels @ volumes).mean())
    soft_vol = float(volumes @ pred)
    hard_vol = float(volumes @ (pred >= 0.5))
    report_soft = volume_error_report(soft_vol, true_mean)
    report_hard = volume_error_report(hard_vol, true_mean)
    return TrainReport(
        loss_kind=loss_kind,
        final_loss=final_loss,
        per_region_pred=pred,
        epochs_run=epochs,
        converged=converged,
        volume_soft=report_soft,
        volume_hard=report_hard,
        bias_soft=report_soft.delta_v,
        bias_hard=report_hard.delta_v,
        model=ToyModel(w, float(b)),
    )


def empirical_volume_bias(
    report: TrainReport, model: RegionModel, n_images: int = 2000, seed: int = 0
) -> tuple[float, float]:
    """Volume bias of a trained model on freshly sampled held-out images.

    Returns the mean of V(soft prediction) - V(labels) and of
    V(thresholded prediction) - V(labels) over ``n_images`` new joint
    labelings of the region model, in the model's volume units.
    """
    if len(report.per_region_pred) != len(model):
        raise ValueError("report and model disagree on the number of regions")
    s = model.volumes
    pred = np.asarray(report.per_region_pred, dtype=float)
    rng = make_rng(seed)
    labels = (rng.random((n_images, len(model))) < model.probabilities).astype(float)
    true_mean = float((labels @ s).mean())
    return float(s @ pred - true_mean), float(s @ (pred >= 0.5) - true_mean)
